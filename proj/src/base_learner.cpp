#include "metasplit/base_learner.hpp"

#include "metasplit/error.hpp"

namespace metasplit {
namespace {

void check_compatible(const Representation& rep, const TaskDataset& data) {
  if (data.X.cols() != rep.input_dim())
    throw Error(Errc::dimension_mismatch, "dataset dimension does not match representation rows");
  if (data.X.rows() != data.Y.size())
    throw Error(Errc::dimension_mismatch, "X and Y disagree on sample count");
}

}  // namespace

LinearPredictor make_predictor(const Representation& rep, Vector w) {
  LinearPredictor p;
  p.composite = rep.matrix() * w;
  p.w = std::move(w);
  return p;
}

InnerSolver::InnerSolver(const Representation& rep, const TaskDataset& data)
    : n_(data.size()) {
  check_compatible(rep, data);
  const Matrix features = data.X * rep.matrix();
  svd_ = thin_svd(features);
  uty_ = svd_.u.transpose() * data.Y;
}

InnerSolver::InnerSolver(const Matrix& features, const Vector& labels) : n_(labels.size()) {
  if (features.rows() != labels.size())
    throw Error(Errc::dimension_mismatch, "features and labels disagree on sample count");
  svd_ = thin_svd(features);
  uty_ = svd_.u.transpose() * labels;
}

Vector InnerSolver::solve(double lambda) const {
  if (lambda < 0.0) throw Error(Errc::invalid_argument, "lambda must be non-negative");
  const Index p = svd_.s.size();
  Vector coeff = Vector::Zero(p);
  if (lambda == 0.0) {
    for (Index i = 0; i < svd_.rank; ++i) coeff(i) = uty_(i) / svd_.s(i);
  } else {
    const double nl = static_cast<double>(n_) * lambda;
    for (Index i = 0; i < p; ++i) {
      const double s = svd_.s(i);
      coeff(i) = s * uty_(i) / (s * s + nl);
    }
  }
  return svd_.v * coeff;
}

LinearPredictor ridge_solve(const Representation& rep, const TaskDataset& data, double lambda) {
  if (lambda < 0.0) throw Error(Errc::invalid_argument, "lambda must be non-negative");
  if (lambda == 0.0) return min_norm_solve(rep, data);
  return make_predictor(rep, InnerSolver(rep, data).solve(lambda));
}

LinearPredictor min_norm_solve(const Representation& rep, const TaskDataset& data) {
  return make_predictor(rep, InnerSolver(rep, data).solve(0.0));
}

double task_excess_risk(const Representation& rep, const LinearPredictor& predictor,
                        const Vector& v) {
  if (predictor.composite.size() != rep.input_dim() || v.size() != rep.input_dim())
    throw Error(Errc::dimension_mismatch, "task vector and predictor lengths differ");
  return (predictor.composite - v).squaredNorm();
}

double task_test_loss(const Representation& rep, const LinearPredictor& predictor, const Vector& v,
                      double sigma) {
  return task_excess_risk(rep, predictor, v) + sigma * sigma;
}

double training_residual(const Representation& rep, const Vector& w, const TaskDataset& data) {
  check_compatible(rep, data);
  return (data.X * (rep.matrix() * w) - data.Y).squaredNorm() / static_cast<double>(data.size());
}

double ridge_objective(const Representation& rep, const Vector& w, const TaskDataset& data,
                       double lambda) {
  return training_residual(rep, w, data) + lambda * w.squaredNorm();
}

Vector ridge_objective_gradient(const Representation& rep, const Vector& w, const TaskDataset& data,
                                double lambda) {
  check_compatible(rep, data);
  const Matrix features = data.X * rep.matrix();
  const double n = static_cast<double>(data.size());
  return (2.0 / n) * features.transpose() * (features * w - data.Y) + 2.0 * lambda * w;
}

}  // namespace metasplit
