#include "metasplit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "metasplit/error.hpp"
#include "metasplit/linalg.hpp"

namespace metasplit {

int numeric_rank(const Representation& rep, double rel_tol) {
  if (!(rel_tol > 0.0)) throw Error(Errc::invalid_argument, "rel_tol must be positive");
  const Vector& s = rep.singular_values();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  const double cutoff = rel_tol * s(0);
  return static_cast<int>((s.array() > cutoff).count());
}

SpectralReport spectral_report(const Representation& rep, int k, double rel_tol) {
  const Index limit = std::min(rep.input_dim(), rep.rep_dim());
  if (k < 1 || k > limit)
    throw Error(Errc::invalid_k, "k=" + std::to_string(k) + " outside [1, min(d, D)]");
  const Vector& s = rep.singular_values();
  SpectralReport out;
  out.singular_values.assign(s.data(), s.data() + s.size());
  const double nuclear = s.sum();
  const double frob = s.squaredNorm();
  out.nuclear_topk_share = nuclear > 0.0 ? s.head(k).sum() / nuclear : 0.0;
  out.frobenius_topk_share = frob > 0.0 ? s.head(k).squaredNorm() / frob : 0.0;
  out.numeric_rank = numeric_rank(rep, rel_tol);
  return out;
}

SubspaceAlignment subspace_alignment(const Representation& rep, const SubspaceInstance& instance,
                                     double rel_tol) {
  if (rep.input_dim() != instance.d)
    throw Error(Errc::dimension_mismatch, "representation rows differ from instance dimension");
  const int k = instance.k;
  const int rank = numeric_rank(rep, rel_tol);
  const auto& svd = rep.svd();

  SubspaceAlignment out;
  out.rank_deficient = rank < k;
  const int top = std::min(rank, k);

  const Vector cosines = principal_cosines(svd.u.leftCols(top), instance.basis);
  for (Index i = 0; i < cosines.size(); ++i)
    out.principal_angles_deg.push_back(std::acos(cosines(i)) * 180.0 / std::numbers::pi);
  // Directions of A* with no partner in a rank-deficient A are orthogonal to it.
  for (int i = top; i < k; ++i) out.principal_angles_deg.push_back(90.0);
  std::sort(out.principal_angles_deg.begin(), out.principal_angles_deg.end());
  out.max_angle_deg = out.principal_angles_deg.empty() ? 0.0 : out.principal_angles_deg.back();

  const Matrix ur = svd.u.leftCols(rank);
  const Matrix inside = ur.transpose() * instance.basis;
  out.projection_error = (instance.basis - ur * inside).squaredNorm();
  out.full_space_sin2_sum = static_cast<double>(k) - inside.squaredNorm();
  return out;
}

}  // namespace metasplit
