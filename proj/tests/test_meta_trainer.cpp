#include <gtest/gtest.h>

#include <cmath>

#include "metasplit/diagnostics.hpp"
#include "metasplit/error.hpp"
#include "metasplit/meta_trainer.hpp"

using namespace metasplit;

namespace {

SubspaceInstance small_instance(int d, int k, double sigma, std::uint64_t seed = 3) {
  RngStream rng(seed);
  return make_instance(d, k, sigma, rng);
}

// Central differences of the batch objective, entry by entry.
Matrix finite_difference(const Matrix& a, std::span<const MetaTask> batch, const TrainConfig& cfg,
                         double h = 1e-5) {
  Matrix g(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      Matrix plus = a, minus = a;
      plus(i, j) += h;
      minus(i, j) -= h;
      g(i, j) = (batch_objective(Representation(plus), batch, cfg) -
                 batch_objective(Representation(minus), batch, cfg)) /
                (2.0 * h);
    }
  return g;
}

double relative_error(const Matrix& g, const Matrix& ref) {
  return (g - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff();
}

struct GradCase {
  Variant variant;
  double lambda;
  int n, n1, n2, rep_dim;
};

}  // namespace

TEST(InitRepresentation, ZeroScale) {
  RngStream rng(1);
  EXPECT_EQ(init_representation(5, 4, 0.0, rng).matrix(), Matrix::Zero(5, 4));
}

TEST(InitRepresentation, ExpectedEnergy) {
  RngStream rng(2);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) total += init_representation(50, 50, 1.0, rng).matrix().squaredNorm();
  EXPECT_NEAR(total / 100.0, 50.0, 0.05 * 50.0);
}

TEST(InitRepresentation, Deterministic) {
  RngStream a(9), b(9);
  EXPECT_EQ(init_representation(7, 3, 1.0, a).matrix(), init_representation(7, 3, 1.0, b).matrix());
}

TEST(InnerGd, ConvergesToRidge) {
  RngStream rng(4);
  const TaskDataset data{rng.gaussian_matrix(20, 4), rng.gaussian_vector(20)};
  const Representation rep(Matrix::Identity(4, 4) + 0.1 * rng.gaussian_matrix(4, 4));
  const auto gd = inner_gd(rep, data, 1.0, 2000, 0.05);
  EXPECT_LE((gd.w - ridge_solve(rep, data, 1.0).w).norm(), 1e-4);
}

TEST(InnerGd, SingleStep) {
  RngStream rng(5);
  const TaskDataset data{rng.gaussian_matrix(6, 3), rng.gaussian_vector(6)};
  const Representation rep(rng.gaussian_matrix(3, 3));
  const double eta = 0.07;
  const Vector expected = eta * (2.0 / 6.0) * rep.matrix().transpose() * data.X.transpose() * data.Y;
  EXPECT_LE((inner_gd(rep, data, 0.0, 1, eta).w - expected).norm(), 1e-14 * expected.norm());
}

TEST(InnerGd, HugeLambdaStaysNearZero) {
  RngStream rng(6);
  const TaskDataset data{rng.gaussian_matrix(6, 3), rng.gaussian_vector(6)};
  const auto pred = inner_gd(Representation::identity(3), data, 1e4, 50, 1e-5);
  EXPECT_LE(pred.w.norm(), 1e-3);
}

TEST(InnerGd, DivergenceReported) {
  RngStream rng(7);
  const TaskDataset data{rng.gaussian_matrix(6, 3), rng.gaussian_vector(6)};
  try {
    inner_gd(Representation(1e3 * Matrix::Identity(3, 3)), data, 0.0, 500, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::optimization_diverged);
  }
}

TEST(Train, ExplodingInnerGdAborts) {
  const auto inst = small_instance(10, 2, 0.5);
  TrainConfig cfg;
  cfg.n1 = 8;
  cfg.n2 = 8;
  cfg.n = 16;
  cfg.inner_mode = InnerMode::gd;
  cfg.inner_lr = 0.05;
  cfg.inner_steps = 20;
  cfg.init_scale = 20.0;
  cfg.outer_steps = 5;
  try {
    train(inst, cfg, RngStream(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::optimization_diverged);
  }
}

TEST(OuterGradient, FrozenZeroPredictorGivesZero) {
  const auto inst = small_instance(6, 2, 0.5);
  TrainConfig cfg;
  cfg.lambda = 1e12;
  cfg.n1 = 4;
  cfg.n2 = 4;
  cfg.n = 8;
  cfg.batch_tasks = 5;
  const auto batch = draw_batch(inst, cfg, RngStream(8));
  RngStream rng(9);
  const Representation rep(rng.gaussian_matrix(6, 6));
  EXPECT_LE(outer_gradient(rep, batch, cfg).gradient.norm(), 1e-10);
}

TEST(OuterGradient, ExactMatchesFiniteDifferences) {
  const std::vector<GradCase> cases{
      {Variant::trva, 0.0, 12, 4, 8, 6},   // n1 < D: interpolating inner solution
      {Variant::trva, 0.0, 16, 10, 6, 4},  // n1 > D: least squares
      {Variant::trva, 0.1, 12, 4, 8, 6},
      {Variant::trva, 0.5, 14, 9, 5, 4},
      {Variant::trtr, 0.3, 5, 0, 0, 6},
      {Variant::trtr, 0.0, 10, 0, 0, 3},   // n > D
      {Variant::trtr, 0.05, 4, 0, 0, 8},
  };
  const auto inst = small_instance(6, 2, 0.5);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& gc = cases[c];
    TrainConfig cfg;
    cfg.variant = gc.variant;
    cfg.lambda = gc.lambda;
    cfg.n = gc.n;
    cfg.n1 = gc.variant == Variant::trva ? gc.n1 : cfg.n1;
    cfg.n2 = gc.variant == Variant::trva ? gc.n2 : cfg.n2;
    if (gc.variant == Variant::trva) cfg.n = gc.n1 + gc.n2;
    cfg.batch_tasks = 3;
    cfg.grad_mode = GradMode::exact;
    const auto batch = draw_batch(inst, cfg, RngStream(100 + c));
    RngStream rng(200 + c);
    const Matrix a = rng.gaussian_matrix(6, gc.rep_dim);
    const auto og = outer_gradient(Representation(a), batch, cfg);
    EXPECT_EQ(og.exact_fallbacks, 0) << c;
    EXPECT_LE(relative_error(og.gradient, finite_difference(a, batch, cfg)), 1e-4) << c;
  }
}

TEST(OuterGradient, FirstOrderDiffersFromExact) {
  const auto inst = small_instance(6, 2, 0.5);
  TrainConfig cfg;
  cfg.n1 = 4;
  cfg.n2 = 4;
  cfg.n = 8;
  cfg.batch_tasks = 4;
  const auto batch = draw_batch(inst, cfg, RngStream(10));
  RngStream rng(11);
  const Representation rep(rng.gaussian_matrix(6, 6));
  const Matrix fo = outer_gradient(rep, batch, cfg).gradient;
  cfg.grad_mode = GradMode::exact;
  const Matrix ex = outer_gradient(rep, batch, cfg).gradient;
  const double cosine = fo.cwiseProduct(ex).sum() / (fo.norm() * ex.norm());
  EXPECT_LT(cosine, 1.0 - 1e-6);
}

TEST(OuterGradient, RankDeficientFallsBack) {
  const auto inst = small_instance(6, 2, 0.5);
  TrainConfig cfg;
  cfg.n1 = 5;
  cfg.n2 = 3;
  cfg.n = 8;
  cfg.batch_tasks = 3;
  cfg.grad_mode = GradMode::exact;
  const auto batch = draw_batch(inst, cfg, RngStream(12));
  RngStream rng(13);
  const Representation rep(rng.gaussian_matrix(6, 2) * rng.gaussian_matrix(2, 6));
  const auto og = outer_gradient(rep, batch, cfg);
  EXPECT_EQ(og.exact_fallbacks, 3);
  cfg.grad_mode = GradMode::first_order;
  EXPECT_EQ(og.gradient, outer_gradient(rep, batch, cfg).gradient);
}

TEST(OuterGradient, Errors) {
  const auto inst = small_instance(6, 2, 0.5);
  TrainConfig cfg;
  const std::vector<MetaTask> empty;
  EXPECT_THROW(outer_gradient(Representation::identity(6), empty, cfg), Error);
  const auto batch = draw_batch(inst, cfg, RngStream(14));
  try {
    outer_gradient(Representation::identity(5), batch, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
}

TEST(Validate, RejectsInconsistentConfigs) {
  TrainConfig cfg;
  cfg.n1 = 5;
  EXPECT_THROW(validate(cfg), Error);
  cfg = TrainConfig{};
  cfg.inner_mode = InnerMode::gd;
  cfg.grad_mode = GradMode::exact;
  EXPECT_THROW(validate(cfg), Error);
  cfg = TrainConfig{};
  cfg.batch_tasks = 0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = TrainConfig{};
  cfg.lambda = -1.0;
  try {
    validate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_config);
  }
  EXPECT_NO_THROW(validate(TrainConfig{}));
}

TEST(Train, TraceAndDeterminism) {
  const auto inst = small_instance(10, 2, 0.5);
  TrainConfig cfg;
  cfg.outer_steps = 60;
  cfg.lambda = 0.1;
  const auto a = train(inst, cfg, RngStream(15));
  const auto b = train(inst, cfg, RngStream(15));
  ASSERT_EQ(a.trace.size(), 60u);
  ASSERT_EQ(b.trace.size(), 60u);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].step, static_cast<int>(i));
    EXPECT_EQ(a.trace[i].objective, b.trace[i].objective);
    EXPECT_EQ(a.trace[i].grad_norm, b.trace[i].grad_norm);
    EXPECT_TRUE(std::isfinite(a.trace[i].objective));
  }
  EXPECT_EQ(a.rep.matrix(), b.rep.matrix());
  const auto c = train(inst, cfg, RngStream(16));
  EXPECT_NE(a.rep.matrix(), c.rep.matrix());
}

TEST(Train, ObjectiveConsistency) {
  const auto inst = small_instance(10, 2, 0.5);
  for (auto mode : {InnerMode::closed_form, InnerMode::gd}) {
    TrainConfig cfg;
    cfg.outer_steps = 30;
    cfg.inner_mode = mode;
    std::vector<double> recomputed;
    const auto model = train(inst, cfg, RngStream(17),
                             [&](int, const Representation& rep, std::span<const MetaTask> batch,
                                 const OuterGradient&) {
                               recomputed.push_back(batch_objective(rep, batch, cfg));
                             });
    ASSERT_EQ(recomputed.size(), model.trace.size());
    for (std::size_t i = 0; i < recomputed.size(); ++i)
      EXPECT_NEAR(recomputed[i], model.trace[i].objective, 1e-10 * std::max(1.0, recomputed[i]));
  }
}

TEST(Train, TaskPoolMode) {
  const auto inst = small_instance(10, 2, 0.5);
  TrainConfig cfg;
  cfg.outer_steps = 20;
  cfg.task_pool = 7;
  const auto a = train(inst, cfg, RngStream(18));
  const auto b = train(inst, cfg, RngStream(18));
  EXPECT_EQ(a.rep.matrix(), b.rep.matrix());
  EXPECT_EQ(a.trace.size(), 20u);
}

TEST(Train, CosineScheduleChangesUpdates) {
  const auto inst = small_instance(10, 2, 0.5);
  TrainConfig cfg;
  cfg.outer_steps = 40;
  const auto constant = train(inst, cfg, RngStream(19));
  cfg.lr_schedule = LrSchedule::cosine;
  const auto cosine = train(inst, cfg, RngStream(19));
  EXPECT_EQ(constant.trace[0].objective, cosine.trace[0].objective);
  EXPECT_NE(constant.rep.matrix(), cosine.rep.matrix());
}

TEST(Train, NonSplittingObjectiveCollapses) {
  // The non-splitting objective is driven towards zero at the default step budget.
  const auto inst = small_instance(50, 5, 0.5);
  TrainConfig cfg;
  cfg.variant = Variant::trtr;
  cfg.lambda = 1.0;
  const auto model = train(inst, cfg, RngStream(20));
  EXPECT_LE(model.trace.back().objective, 1e-2 * model.trace.front().objective);
}

TEST(Train, NoiselessRankOneRecovery) {
  const auto inst = small_instance(3, 1, 0.0);
  TrainConfig cfg;
  cfg.outer_steps = 500;
  const auto model = train(inst, cfg, RngStream(21));
  EXPECT_LE(subspace_alignment(model.rep, inst).projection_error, 0.05);
}

TEST(Train, NoiselessRankOneRecoveryWithShortTrainSplit) {
  // n1 < d: the inner solution only sees part of the space, so alignment must be learned.
  const auto inst = small_instance(3, 1, 0.0);
  TrainConfig cfg;
  cfg.n = 4;
  cfg.n1 = 1;
  cfg.n2 = 3;
  cfg.outer_steps = 2000;
  cfg.grad_mode = GradMode::exact;
  const auto model = train(inst, cfg, RngStream(22));
  EXPECT_LE(subspace_alignment(model.rep, inst).projection_error, 0.05);
}
