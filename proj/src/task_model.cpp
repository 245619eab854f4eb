#include "metasplit/task_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "metasplit/error.hpp"

namespace metasplit {

SubspaceInstance make_instance(int d, int k, double sigma, RngStream& rng, TaskScale scale) {
  if (k < 1 || k > d)
    throw Error(Errc::invalid_dimensions,
                "need 1 <= k <= d, got d=" + std::to_string(d) + " k=" + std::to_string(k));
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be non-negative");

  const Matrix g = rng.gaussian_matrix(d, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);

  return SubspaceInstance{d, k, sigma, std::move(q), scale};
}

SubspaceInstance make_instance_with_basis(Matrix basis, double sigma, TaskScale scale) {
  const int d = static_cast<int>(basis.rows());
  const int k = static_cast<int>(basis.cols());
  if (k < 1 || k > d) throw Error(Errc::invalid_dimensions, "basis must be d x k with 1 <= k <= d");
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be non-negative");
  const Matrix gram = basis.transpose() * basis;
  if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10)
    throw Error(Errc::invalid_argument, "basis columns are not orthonormal");
  return SubspaceInstance{d, k, sigma, std::move(basis), scale};
}

Vector sample_task(const SubspaceInstance& instance, RngStream& rng) {
  Vector g = rng.gaussian_vector(instance.k);
  switch (instance.task_scale) {
    case TaskScale::unit_energy:
      g /= std::sqrt(static_cast<double>(instance.k));
      break;
    case TaskScale::raw:
      break;
    case TaskScale::unit_sphere: {
      const double norm = g.norm();
      if (norm > 0.0) g /= norm;
      break;
    }
  }
  return instance.basis * g;
}

TaskDataset sample_dataset(const SubspaceInstance& instance, const Vector& v, int n,
                           RngStream& rng) {
  if (n < 1) throw Error(Errc::invalid_size, "dataset needs n >= 1, got " + std::to_string(n));
  if (v.size() != instance.d) throw Error(Errc::dimension_mismatch, "task vector has wrong length");
  TaskDataset data;
  data.X = rng.gaussian_matrix(n, instance.d);
  data.Y = data.X * v;
  if (instance.sigma > 0.0) data.Y += instance.sigma * rng.gaussian_vector(n);
  return data;
}

TaskDataset select_rows(const TaskDataset& dataset, const std::vector<Index>& rows) {
  TaskDataset out;
  out.X.resize(static_cast<Index>(rows.size()), dataset.X.cols());
  out.Y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = dataset.X.row(rows[i]);
    out.Y(static_cast<Index>(i)) = dataset.Y(rows[i]);
  }
  return out;
}

SplitDataset split(const TaskDataset& dataset, int n1, RngStream& rng) {
  const Index n = dataset.size();
  if (n1 < 1 || n1 >= n)
    throw Error(Errc::invalid_split,
                "need 1 <= n1 < n, got n1=" + std::to_string(n1) + " n=" + std::to_string(n));

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  // Fisher-Yates.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }

  SplitDataset out;
  out.train_rows.assign(perm.begin(), perm.begin() + n1);
  out.val_rows.assign(perm.begin() + n1, perm.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.val_rows.begin(), out.val_rows.end());
  out.train = select_rows(dataset, out.train_rows);
  out.val = select_rows(dataset, out.val_rows);
  return out;
}

}  // namespace metasplit
