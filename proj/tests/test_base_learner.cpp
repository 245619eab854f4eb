#include <gtest/gtest.h>

#include <thread>

#include "metasplit/base_learner.hpp"
#include "metasplit/error.hpp"
#include "metasplit/task_model.hpp"

using namespace metasplit;

namespace {

TaskDataset gaussian_task(Index n, Index d, RngStream& rng) {
  return TaskDataset{rng.gaussian_matrix(n, d), rng.gaussian_vector(n)};
}

// Plain gradient descent on the ridge objective, used as an independent minimizer.
Vector gd_minimize(const Matrix& m, const Vector& y, double lambda, int iters) {
  const double n = static_cast<double>(m.rows());
  const Eigen::SelfAdjointEigenSolver<Matrix> es(m.transpose() * m / n);
  const double lr = 0.5 / (es.eigenvalues().maxCoeff() + lambda);
  Vector w = Vector::Zero(m.cols());
  for (int i = 0; i < iters; ++i) w -= lr * (2.0 / n * m.transpose() * (m * w - y) + 2.0 * lambda * w);
  return w;
}

// Projector onto the complement of col(M) from a rank-revealing QR.
Matrix orth_complement_projector(const Matrix& m) {
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  const Index r = qr.rank();
  const Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.rows());
  const Matrix qr_cols = q.leftCols(r);
  return Matrix::Identity(m.rows(), m.rows()) - qr_cols * qr_cols.transpose();
}

}  // namespace

TEST(Representation, SvdReconstructs) {
  RngStream rng(1);
  for (auto [d, dd] : {std::pair{7, 7}, std::pair{9, 4}, std::pair{4, 9}}) {
    const Matrix a = rng.gaussian_matrix(d, dd);
    const Representation rep(a);
    const auto& svd = rep.svd();
    const Matrix back = svd.u * svd.s.asDiagonal() * svd.v.transpose();
    EXPECT_LE((back - a).norm() / a.norm(), 1e-10);
    EXPECT_EQ(rep.rank(), std::min(d, dd));
  }
}

TEST(Representation, RankOfLowRankMatrix) {
  RngStream rng(2);
  const Matrix a = rng.gaussian_matrix(10, 3) * rng.gaussian_matrix(3, 10);
  EXPECT_EQ(Representation(a).rank(), 3);
  EXPECT_EQ(Representation(Matrix::Zero(4, 4)).rank(), 0);
}

TEST(Representation, ConcurrentSvdComputedOnce) {
  RngStream rng(3);
  const Representation rep(rng.gaussian_matrix(30, 30));
  std::vector<const ThinSvd<double>*> seen(8, nullptr);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < seen.size(); ++i)
    threads.emplace_back([&, i] { seen[i] = &rep.svd(); });
  for (auto& t : threads) t.join();
  for (auto* p : seen) EXPECT_EQ(p, seen[0]);
  const Representation copy = rep;
  EXPECT_EQ(&copy.svd(), seen[0]);
}

TEST(Representation, ColumnProjectorIsIdempotent) {
  RngStream rng(4);
  const Representation rep(rng.gaussian_matrix(8, 3));
  const Matrix p = rep.column_projector();
  EXPECT_LE((p * p - p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(p.trace(), 3.0, 1e-12);
  EXPECT_LE((p * rep.matrix() - rep.matrix()).norm(), 1e-12);
}

TEST(RidgeSolve, HugeLambdaShrinks) {
  RngStream rng(5);
  const auto data = gaussian_task(12, 6, rng);
  const Representation rep(rng.gaussian_matrix(6, 6));
  const double lambda = 1e6;
  const auto pred = ridge_solve(rep, data, lambda);
  const double bound = (rep.matrix().transpose() * data.X.transpose() * data.Y).norm() / (12.0 * lambda);
  EXPECT_LE(pred.w.norm(), bound * (1.0 + 1e-12));
}

TEST(RidgeSolve, IdentityDesign) {
  // X^T X / n = I / 2, so w = (I / 2 + I)^{-1} Y / 2 = Y / 3.
  const Vector y = (Vector(2) << 3.0, -6.0).finished();
  const TaskDataset data{Matrix::Identity(2, 2), y};
  const auto pred = ridge_solve(Representation::identity(2), data, 1.0);
  EXPECT_LE((pred.w - y / 3.0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RidgeSolve, MatchesIterativeMinimizer) {
  RngStream rng(6);
  const auto data = gaussian_task(5, 3, rng);
  const Representation rep(rng.gaussian_matrix(3, 3));
  const double lambda = 0.1;
  const auto pred = ridge_solve(rep, data, lambda);
  const Vector w_gd = gd_minimize(data.X * rep.matrix(), data.Y, lambda, 200000);
  const double gap = ridge_objective(rep, w_gd, data, lambda) - ridge_objective(rep, pred.w, data, lambda);
  EXPECT_GE(gap, -1e-12);
  EXPECT_LE(gap, 1e-6);
  EXPECT_LE((pred.w - w_gd).norm(), 1e-5);
}

TEST(RidgeSolve, MatchesNormalEquations) {
  RngStream rng(7);
  const auto data = gaussian_task(9, 5, rng);
  const Representation rep(rng.gaussian_matrix(5, 4));
  const Matrix m = data.X * rep.matrix();
  for (double lambda : {1e-3, 0.1, 1.0, 10.0}) {
    const Matrix h = m.transpose() * m / 9.0 + lambda * Matrix::Identity(4, 4);
    const Vector expected = h.ldlt().solve(m.transpose() * data.Y / 9.0);
    EXPECT_LE((ridge_solve(rep, data, lambda).w - expected).norm(), 1e-10 * expected.norm());
  }
}

TEST(RidgeSolve, RejectsNegativeLambda) {
  RngStream rng(8);
  const auto data = gaussian_task(4, 3, rng);
  try {
    ridge_solve(Representation::identity(3), data, -0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
}

TEST(RidgeSolve, CompositeIsAw) {
  RngStream rng(9);
  const auto data = gaussian_task(6, 4, rng);
  const Representation rep(rng.gaussian_matrix(4, 5));
  const auto pred = ridge_solve(rep, data, 0.3);
  EXPECT_EQ(pred.composite, rep.matrix() * pred.w);
}

TEST(RidgeSolve, ZeroLambdaIsMinNorm) {
  RngStream rng(10);
  const auto data = gaussian_task(6, 9, rng);
  const Representation rep(rng.gaussian_matrix(9, 9));
  EXPECT_EQ(ridge_solve(rep, data, 0.0).w, min_norm_solve(rep, data).w);
}

TEST(MinNormSolve, InterpolatesSquareSystem) {
  RngStream rng(11);
  const auto data = gaussian_task(6, 6, rng);
  const auto pred = min_norm_solve(Representation::identity(6), data);
  EXPECT_LE((data.X * pred.w - data.Y).norm(), 1e-8 * data.Y.norm());
}

TEST(MinNormSolve, LimitOfRidge) {
  RngStream rng(12);
  const auto data = gaussian_task(10, 4, rng);
  const Representation rep = Representation::identity(4);
  const Vector w0 = min_norm_solve(rep, data).w;
  const Vector wr = ridge_solve(rep, data, 1e-10).w;
  EXPECT_LE((wr - w0).norm() / w0.norm(), 1e-5);
}

TEST(MinNormSolve, ZeroDesign) {
  const TaskDataset data{Matrix::Zero(5, 3), Vector::Ones(5)};
  const auto pred = min_norm_solve(Representation::identity(3), data);
  EXPECT_EQ(pred.w, Vector::Zero(3));
}

TEST(MinNormSolve, MatchesCompleteOrthogonalDecomposition) {
  RngStream rng(13);
  for (auto [n, d] : {std::pair{4, 9}, std::pair{12, 5}}) {
    const auto data = gaussian_task(n, d, rng);
    // Rank-deficient representation to exercise the pseudo-inverse.
    const Representation rep(rng.gaussian_matrix(d, 3) * rng.gaussian_matrix(3, d));
    const Matrix m = data.X * rep.matrix();
    const Vector expected = Eigen::CompleteOrthogonalDecomposition<Matrix>(m).solve(data.Y);
    EXPECT_LE((min_norm_solve(rep, data).w - expected).norm(), 1e-8 * expected.norm());
  }
}

TEST(TaskExcessRisk, PerfectAndNullPredictors) {
  RngStream rng(14);
  const Representation rep(rng.gaussian_matrix(5, 5));
  const Vector w = rng.gaussian_vector(5);
  const auto pred = make_predictor(rep, w);
  EXPECT_NEAR(task_excess_risk(rep, pred, pred.composite), 0.0, 1e-28);
  const Vector v = rng.gaussian_vector(5);
  EXPECT_DOUBLE_EQ(task_excess_risk(rep, make_predictor(rep, Vector::Zero(5)), v), v.squaredNorm());
  EXPECT_DOUBLE_EQ(task_test_loss(rep, pred, v, 0.5), 0.25 + (pred.composite - v).squaredNorm());
}

TEST(TaskExcessRisk, MatchesPopulationMonteCarlo) {
  RngStream rng(15);
  const int d = 6;
  const double sigma = 0.7;
  const Representation rep(rng.gaussian_matrix(d, d) / 3.0);
  const auto pred = make_predictor(rep, rng.gaussian_vector(d));
  const Vector v = rng.gaussian_vector(d);
  const int draws = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Vector x = rng.gaussian_vector(d);
    const double y = x.dot(v) + sigma * rng.gaussian();
    const double l = std::pow(x.dot(pred.composite) - y, 2);
    sum += l;
    sum2 += l * l;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
  EXPECT_NEAR(mean - sigma * sigma, task_excess_risk(rep, pred, v), 3.0 * se);
}

TEST(RidgeProperties, GradientVanishesAtSolution) {
  RngStream rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = gaussian_task(7 + trial, 5, rng);
    const Representation rep(rng.gaussian_matrix(5, 6));
    const double lambda = 0.05 * (trial + 1);
    const auto pred = ridge_solve(rep, data, lambda);
    const double scale = (rep.matrix().transpose() * data.X.transpose() * data.Y).norm() / data.size();
    EXPECT_LE(ridge_objective_gradient(rep, pred.w, data, lambda).norm(), 1e-8 * scale);
  }
}

TEST(RidgeProperties, ScalingIdentity) {
  RngStream rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = gaussian_task(6, 8, rng);
    const Representation rep(rng.gaussian_matrix(8, 8));
    const double kappa = 0.1 + trial * 1.7;
    const Representation scaled(kappa * rep.matrix());
    for (double lambda : {0.0, 0.01, 1.0}) {
      const double lhs = training_residual(scaled, ridge_solve(scaled, data, lambda).w, data);
      const double rhs = training_residual(rep, ridge_solve(rep, data, lambda / (kappa * kappa)).w, data);
      EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::max(rhs, 1e-12)) << kappa << ' ' << lambda;
    }
  }
}

TEST(RidgeProperties, ResidualMonotoneInLambda) {
  RngStream rng(18);
  const std::vector<double> grid{0.0, 1e-4, 1e-3, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0};
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = gaussian_task(10, 4 + trial, rng);
    const Representation rep(rng.gaussian_matrix(4 + trial, 4 + trial));
    double prev = -1.0;
    for (double lambda : grid) {
      const double res = training_residual(rep, ridge_solve(rep, data, lambda).w, data);
      EXPECT_GE(res, prev - 1e-12 * std::max(1.0, prev));
      prev = res;
    }
  }
}

TEST(RidgeProperties, MinNormResidualIsProjection) {
  RngStream rng(19);
  for (auto [n, d] : {std::pair{12, 5}, std::pair{20, 7}, std::pair{9, 3}}) {
    const auto data = gaussian_task(n, d, rng);
    const Representation rep(rng.gaussian_matrix(d, d));
    const double res = training_residual(rep, min_norm_solve(rep, data).w, data);
    const Matrix m = data.X * rep.matrix();
    const double expected = (orth_complement_projector(m) * data.Y).squaredNorm() / n;
    EXPECT_LE(std::abs(res - expected), 1e-8 * expected);
  }
}

TEST(InnerSolver, ReusesFactorization) {
  RngStream rng(20);
  const auto data = gaussian_task(8, 5, rng);
  const Representation rep(rng.gaussian_matrix(5, 5));
  const InnerSolver solver(rep, data);
  EXPECT_EQ(solver.samples(), 8);
  EXPECT_EQ(solver.rank(), 5);
  for (double lambda : {0.0, 0.1, 2.0})
    EXPECT_LE((solver.solve(lambda) - ridge_solve(rep, data, lambda).w).norm(), 1e-12);
  EXPECT_THROW(solver.solve(-1.0), Error);
}

TEST(InnerSolver, DimensionMismatch) {
  RngStream rng(21);
  const auto data = gaussian_task(8, 5, rng);
  EXPECT_THROW(InnerSolver(Representation::identity(4), data), Error);
}
