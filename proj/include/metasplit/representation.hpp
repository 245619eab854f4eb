#pragma once

#include <memory>
#include <mutex>

#include "metasplit/linalg.hpp"
#include "metasplit/task_model.hpp"

namespace metasplit {

/// Linear first layer A (d x D) with a lazily computed, shared SVD.
///
/// Copies share the cache; the matrix is immutable after construction so the
/// cache never goes stale. The SVD is computed at most once even under
/// concurrent access.
class Representation {
 public:
  Representation() : Representation(Matrix::Zero(0, 0)) {}
  explicit Representation(Matrix a);

  static Representation identity(int d) { return Representation(Matrix::Identity(d, d)); }

  const Matrix& matrix() const noexcept { return a_; }
  Index input_dim() const noexcept { return a_.rows(); }
  Index rep_dim() const noexcept { return a_.cols(); }

  const ThinSvd<double>& svd() const;
  Index rank() const { return svd().rank; }
  const Vector& singular_values() const { return svd().s; }

  /// P_A = U_r U_r^T, the projector onto the column space of A.
  Matrix column_projector() const;

 private:
  struct Cache {
    std::once_flag once;
    ThinSvd<double> svd;
  };

  Matrix a_;
  std::shared_ptr<Cache> cache_;
};

}  // namespace metasplit
