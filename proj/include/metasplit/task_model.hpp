#pragma once

#include <vector>

#include <Eigen/Dense>

#include "metasplit/rng.hpp"

namespace metasplit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// How task regressors are normalized.
///  - unit_energy: v = B g, g ~ N(0, I_k / k), so E|v|^2 = 1.
///  - raw:         v = B g, g ~ N(0, I_k), so E|v|^2 = k.
///  - unit_sphere: v = B g / |g|, |v| = 1 exactly (test-task variant).
enum class TaskScale { unit_energy, raw, unit_sphere };

/// Subspace meta-learning problem: every task regressor lies in span(basis).
struct SubspaceInstance {
  int d = 0;
  int k = 0;
  double sigma = 0.0;
  Matrix basis;  // d x k, orthonormal columns
  TaskScale task_scale = TaskScale::unit_energy;

  Matrix projector() const { return basis * basis.transpose(); }
};

/// Per-task regression sample: rows of X are inputs, Y the labels.
struct TaskDataset {
  Matrix X;
  Vector Y;

  Index size() const { return Y.size(); }
  Index dim() const { return X.cols(); }
};

/// Disjoint train/validation partition of a parent dataset.
struct SplitDataset {
  TaskDataset train;
  TaskDataset val;
  std::vector<Index> train_rows;  // row indices into the parent
  std::vector<Index> val_rows;
};

/// Orthonormalizes a d x k Gaussian matrix (QR with the diagonal of R forced positive).
SubspaceInstance make_instance(int d, int k, double sigma, RngStream& rng,
                               TaskScale scale = TaskScale::unit_energy);

/// Builds an instance around a caller-supplied orthonormal basis.
SubspaceInstance make_instance_with_basis(Matrix basis, double sigma,
                                          TaskScale scale = TaskScale::unit_energy);

Vector sample_task(const SubspaceInstance& instance, RngStream& rng);

/// X rows iid N(0, I_d); Y = X v + noise, noise ~ N(0, sigma^2 I_n).
TaskDataset sample_dataset(const SubspaceInstance& instance, const Vector& v, int n,
                           RngStream& rng);

/// Uniformly random partition into n1 training rows and n - n1 validation rows.
SplitDataset split(const TaskDataset& dataset, int n1, RngStream& rng);

TaskDataset select_rows(const TaskDataset& dataset, const std::vector<Index>& rows);

}  // namespace metasplit
