#include "metasplit/representation.hpp"

namespace metasplit {

Representation::Representation(Matrix a) : a_(std::move(a)), cache_(std::make_shared<Cache>()) {}

const ThinSvd<double>& Representation::svd() const {
  std::call_once(cache_->once, [this] { cache_->svd = thin_svd(a_); });
  return cache_->svd;
}

Matrix Representation::column_projector() const {
  const auto& s = svd();
  const auto ur = s.u.leftCols(s.rank);
  return ur * ur.transpose();
}

}  // namespace metasplit
