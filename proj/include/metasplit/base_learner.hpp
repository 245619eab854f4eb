#pragma once

#include "metasplit/representation.hpp"
#include "metasplit/task_model.hpp"

namespace metasplit {

/// Inner-loop classifier w (length D) and the effective regressor A w (length d).
struct LinearPredictor {
  Vector w;
  Vector composite;
};

LinearPredictor make_predictor(const Representation& rep, Vector w);

/// One SVD of the featurized design M = X A, reused for every regularization level.
///
/// ridge:    w = V diag(s / (s^2 + n lambda)) U^T Y   (lambda > 0)
/// min-norm: w = V_r diag(1 / s_r) U_r^T Y             (lambda = 0)
class InnerSolver {
 public:
  InnerSolver(const Representation& rep, const TaskDataset& data);
  /// Takes the already featurized design M = X A.
  InnerSolver(const Matrix& features, const Vector& labels);

  /// lambda = 0 gives the minimum-norm least-squares solution; lambda < 0 throws.
  Vector solve(double lambda) const;

  Index rank() const noexcept { return svd_.rank; }
  Index samples() const noexcept { return n_; }
  const ThinSvd<double>& svd() const noexcept { return svd_; }

 private:
  ThinSvd<double> svd_;
  Vector uty_;
  Index n_;
};

/// Minimizer of (1/n)|X A w - Y|^2 + lambda |w|^2. lambda = 0 routes to min_norm_solve.
LinearPredictor ridge_solve(const Representation& rep, const TaskDataset& data, double lambda);

/// (A^T X^T X A)^+ A^T X^T Y: interpolates when rank(XA) = n, least squares of minimum norm otherwise.
LinearPredictor min_norm_solve(const Representation& rep, const TaskDataset& data);

/// |A w - v|^2, the population excess risk over the sigma^2 floor under N(0, I_d) inputs.
double task_excess_risk(const Representation& rep, const LinearPredictor& predictor, const Vector& v);

/// Population test loss sigma^2 + |A w - v|^2.
double task_test_loss(const Representation& rep, const LinearPredictor& predictor, const Vector& v,
                      double sigma);

/// (1/n)|X A w - Y|^2
double training_residual(const Representation& rep, const Vector& w, const TaskDataset& data);

/// (1/n)|X A w - Y|^2 + lambda |w|^2
double ridge_objective(const Representation& rep, const Vector& w, const TaskDataset& data,
                       double lambda);

Vector ridge_objective_gradient(const Representation& rep, const Vector& w, const TaskDataset& data,
                                double lambda);

}  // namespace metasplit
