#pragma once

#include <vector>

#include "metasplit/representation.hpp"
#include "metasplit/task_model.hpp"

namespace metasplit {

inline constexpr double kDiagnosticRankRelTol = 1e-8;

struct SpectralReport {
  std::vector<double> singular_values;  // descending
  double nuclear_topk_share = 0.0;      // sum of top-k s_i over sum of s_i
  double frobenius_topk_share = 0.0;    // same with s_i^2
  int numeric_rank = 0;
};

struct SubspaceAlignment {
  std::vector<double> principal_angles_deg;  // ascending, against the top-k left singular subspace
  double max_angle_deg = 0.0;
  double projection_error = 0.0;  // |P_A A* - A*|_F^2 over the full column space of A
  /// k - |U_r^T A*|_F^2: the sum of squared sines against the full column space.
  double full_space_sin2_sum = 0.0;
  bool rank_deficient = false;  // numeric rank < k; angles use the available directions
};

/// Count of singular values above rel_tol * s_max.
int numeric_rank(const Representation& rep, double rel_tol = kDiagnosticRankRelTol);

SpectralReport spectral_report(const Representation& rep, int k,
                               double rel_tol = kDiagnosticRankRelTol);

SubspaceAlignment subspace_alignment(const Representation& rep, const SubspaceInstance& instance,
                                     double rel_tol = kDiagnosticRankRelTol);

}  // namespace metasplit
