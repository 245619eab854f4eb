#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace metasplit {

/// Relative cutoff used when deciding which singular values count as zero.
inline constexpr double kPseudoInverseRelTol = 1e-12;

template <typename Scalar>
struct ThinSvd {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MatrixType u;  // rows x p
  VectorType s;  // p, descending
  MatrixType v;  // cols x p
  Eigen::Index rank = 0;

  Scalar max_singular_value() const { return s.size() > 0 ? s(0) : Scalar(0); }
};

/// Singular values below s_max * max(rows, cols) * rel_tol are treated as zero.
template <typename Scalar>
Scalar rank_cutoff(Scalar s_max, Eigen::Index rows, Eigen::Index cols,
                   Scalar rel_tol = Scalar(kPseudoInverseRelTol)) {
  return s_max * static_cast<Scalar>(std::max(rows, cols)) * rel_tol;
}

template <typename Derived>
ThinSvd<typename Derived::Scalar> thin_svd(const Eigen::MatrixBase<Derived>& m,
                                           typename Derived::Scalar rel_tol =
                                               typename Derived::Scalar(kPseudoInverseRelTol)) {
  using Scalar = typename Derived::Scalar;
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  ThinSvd<Scalar> out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.u = MatrixType::Zero(m.rows(), 0);
    out.v = MatrixType::Zero(m.cols(), 0);
    out.s.resize(0);
    return out;
  }
  Eigen::JacobiSVD<MatrixType> svd(m.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.s = svd.singularValues();
  out.v = svd.matrixV();
  const Scalar cutoff = rank_cutoff(out.max_singular_value(), m.rows(), m.cols(), rel_tol);
  Eigen::Index r = 0;
  while (r < out.s.size() && out.s(r) > cutoff && out.s(r) > Scalar(0)) ++r;
  out.rank = r;
  return out;
}

/// Moore-Penrose pseudo-inverse through the thin SVD.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> pseudo_inverse(
    const Eigen::MatrixBase<Derived>& m) {
  const auto svd = thin_svd(m);
  const Eigen::Index r = svd.rank;
  return svd.v.leftCols(r) * svd.s.head(r).cwiseInverse().asDiagonal() *
         svd.u.leftCols(r).transpose();
}

/// Orthogonal projector onto the column space of `m` (equals m * pinv(m)).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> column_projector(
    const Eigen::MatrixBase<Derived>& m) {
  const auto svd = thin_svd(m);
  const auto ur = svd.u.leftCols(svd.rank);
  return ur * ur.transpose();
}

/// Cosines of the principal angles between span(q1) and span(q2); both inputs must
/// have orthonormal columns. Returned in descending order (ascending angles).
template <typename D1, typename D2>
Eigen::Matrix<typename D1::Scalar, Eigen::Dynamic, 1> principal_cosines(
    const Eigen::MatrixBase<D1>& q1, const Eigen::MatrixBase<D2>& q2) {
  using Scalar = typename D1::Scalar;
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const MatrixType cross = q1.transpose() * q2;
  if (cross.size() == 0) return {};
  Eigen::JacobiSVD<MatrixType> svd(cross);
  return svd.singularValues().cwiseMin(Scalar(1)).cwiseMax(Scalar(0));
}

template <typename Derived>
typename Derived::Scalar max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? typename Derived::Scalar(0) : m.cwiseAbs().maxCoeff();
}

}  // namespace metasplit
