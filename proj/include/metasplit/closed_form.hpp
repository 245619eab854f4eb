#pragma once

#include <compare>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "metasplit/objectives.hpp"
#include "metasplit/rng.hpp"
#include "metasplit/task_model.hpp"

namespace metasplit {

/// Real number or +infinity. Infinity is a tag, not a large float.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr explicit ExtendedReal(double v) : value_(v) {}

  static constexpr ExtendedReal infinity() {
    ExtendedReal x;
    x.infinite_ = true;
    return x;
  }

  constexpr bool is_finite() const noexcept { return !infinite_; }
  constexpr bool is_infinite() const noexcept { return infinite_; }

  /// Finite value, or IEEE +inf when infinite.
  constexpr double value() const noexcept {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }
  friend constexpr std::partial_ordering operator<=>(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ <=> b.infinite_;
    return a.value_ <=> b.value_;
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

/// alpha(a, b) = b / (a - b - 1); +infinity when a - b - 1 <= 0.
ExtendedReal alpha(int a, int b);

/// E tr((X^T X)^{-1}) for an n_rows x n_cols standard Gaussian X.
ExtendedReal inverse_wishart_trace(int n_rows, int n_cols);

/// Monte Carlo of the same expectation; sample i draws from rng.substream(i).
MonteCarloEstimate inverse_wishart_trace_mc(int n_rows, int n_cols, int samples,
                                            const RngStream& rng);

enum class RegimeTag { underparam, overparam, divergent };

const char* to_string(RegimeTag tag) noexcept;

struct ClosedFormComponents {
  double expressiveness_term = 0.0;
  double rank_penalty_term = 0.0;
  double noise_term = 0.0;
  double beta_term = 0.0;
};

/// Asymptotic min-norm split objective. When finite, value = sigma^2 + sum(components).
struct ClosedFormResult {
  ExtendedReal value;
  RegimeTag regime = RegimeTag::underparam;
  ClosedFormComponents components;
  /// Sampling error of beta_term when it was estimated by Monte Carlo.
  std::optional<double> beta_std_error;
};

struct IsotropicSpectrum {
  double kappa = 1.0;
};

struct GeneralSpectrum {
  Vector singular_values;  // length r, positive
};

/// Shape of a representation as seen by the closed form: rank, missed task
/// energy e = |P_U^perp A*|_F^2 / k, and the singular-value profile.
struct SpectrumModel {
  int rank = 0;
  double expressiveness = 0.0;
  std::variant<IsotropicSpectrum, GeneralSpectrum> spectrum = IsotropicSpectrum{};
};

/// Representation whose column space U has rank r and misses the fraction e of the
/// task energy: |P_U^perp basis|_F^2 = k e. Singular values follow the spectrum.
/// Columns of U are drawn around the basis with a random complement; right singular
/// vectors are Haar. Requires 0 <= r <= d, e in [(k - min(r, k)) / k, 1] and enough
/// room for the complement (k + r <= d when e > (k - min(r, k)) / k).
Representation realize_spectrum(const SpectrumModel& model, const SubspaceInstance& instance,
                                RngStream& rng);

/// Same column space, rotated by a Haar-distributed orthogonal matrix inside span(U).
/// Leaves the closed form unchanged; randomizes the orientation of a general spectrum.
Representation rotate_within_column_space(const Representation& rep, RngStream& rng);

/// Monte Carlo budget for the spectrum-dependent beta term (general spectra only).
struct BetaOptions {
  int samples = 20000;
  std::uint64_t seed = 0x5eed;
};

ClosedFormResult trva_closed_form(const SpectrumModel& model, int n1, double sigma,
                                  const BetaOptions& beta = {});

struct BetaEstimate {
  MonteCarloEstimate beta1;  // bias excess over the isotropic spectrum
  MonteCarloEstimate beta2;  // gamma(S) - alpha(r, n1)
  MonteCarloEstimate total;  // beta1 + beta2 (e + sigma^2), per sample
};

/// Estimates beta(S) from X_U of shape n1 x r; requires r > n1 + 1.
BetaEstimate estimate_beta(const Vector& singular_values, int n1, double expressiveness,
                           double sigma, int samples, const RngStream& rng);

/// sigma^2 (n - r)_+ / n: lower bound on the kappa -> infinity non-splitting objective.
double trtr_asymptotic(int n, int rank, double sigma);

/// Two forms of the bound: min(1 - nbar/(d(1+s2)), d s2/((1+s2) nbar)) and
/// min(1 - nbar/(d(1+s2)), d s2/(nbar + d s2)).
struct BadRepBound {
  double noise_ratio = 0.0;
  double shrinkage = 0.0;
};

/// Lower bounds on the tuned meta-test excess of the bad full-rank representation.
BadRepBound bad_rep_lower_bound(int d, int nbar1, double sigma);

/// sigma^2 + sigma^2 k / (n1 - k - 1); throws divergent-regime when n1 <= k + 1.
double optimal_trva_value(int n1, int k, double sigma);

struct RankScanEntry {
  int rank = 0;
  double expressiveness = 0.0;
  ClosedFormResult result;
};

/// Closed-form profile for r = 1..d at best achievable expressiveness (k - r)_+ / k.
std::vector<RankScanEntry> rank_scan(int d, int k, int n1, double sigma);

/// Ranks attaining the minimum finite value (within `tol`), ascending.
std::vector<int> rank_scan_argmin(const std::vector<RankScanEntry>& scan, double tol = 1e-12);

/// Whether (k, n1, sigma) satisfies n1 >= 2k + 2 and sigma^2 < (n1 - k - 1) / (3k).
bool low_rank_conditions_hold(int k, int n1, double sigma);

}  // namespace metasplit
