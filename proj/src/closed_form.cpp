#include "metasplit/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metasplit/error.hpp"

namespace metasplit {

ExtendedReal alpha(int a, int b) {
  if (a < 0 || b < 0) throw Error(Errc::invalid_argument, "alpha needs non-negative arguments");
  const int denom = a - b - 1;
  if (denom <= 0) return ExtendedReal::infinity();
  return ExtendedReal(static_cast<double>(b) / static_cast<double>(denom));
}

ExtendedReal inverse_wishart_trace(int n_rows, int n_cols) {
  if (n_rows < 1 || n_cols < 1)
    throw Error(Errc::invalid_dimensions, "inverse Wishart trace needs positive shape");
  return alpha(n_rows, n_cols);
}

MonteCarloEstimate inverse_wishart_trace_mc(int n_rows, int n_cols, int samples,
                                            const RngStream& rng) {
  if (n_rows < n_cols)
    throw Error(Errc::invalid_dimensions, "X^T X is singular when n_rows < n_cols");
  std::vector<double> traces;
  traces.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(i));
    const Matrix x = s.gaussian_matrix(n_rows, n_cols);
    const Matrix gram = x.transpose() * x;
    const Eigen::LLT<Matrix> llt(gram);
    traces.push_back(llt.solve(Matrix::Identity(n_cols, n_cols)).trace());
  }
  return MonteCarloEstimate::from_samples(traces);
}

const char* to_string(RegimeTag tag) noexcept {
  switch (tag) {
    case RegimeTag::underparam: return "underparam";
    case RegimeTag::overparam: return "overparam";
    case RegimeTag::divergent: return "divergent";
  }
  return "unknown";
}

BetaEstimate estimate_beta(const Vector& singular_values, int n1, double expressiveness,
                           double sigma, int samples, const RngStream& rng) {
  const int r = static_cast<int>(singular_values.size());
  if (r <= n1 + 1) throw Error(Errc::divergent_regime, "beta is defined only for r > n1 + 1");
  if ((singular_values.array() <= 0.0).any())
    throw Error(Errc::invalid_argument, "singular values must be positive");

  // beta is invariant to rescaling S; normalize to keep S^4 well inside double range.
  const Vector s = singular_values / singular_values.maxCoeff();
  const Vector s2 = s.array().square();
  const double e = expressiveness;

  std::vector<double> b1, b2, total;
  b1.reserve(static_cast<std::size_t>(samples));
  b2.reserve(static_cast<std::size_t>(samples));
  total.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    RngStream stream = rng.substream(static_cast<std::uint64_t>(i));
    const Matrix x = stream.gaussian_matrix(n1, r);
    const Matrix xs2 = x * s2.asDiagonal();                     // X S^2
    const Matrix g = xs2 * x.transpose();                       // X S^2 X^T
    const Eigen::LLT<Matrix> g_llt(g);
    const Matrix g_inv_xs2 = g_llt.solve(xs2);                  // G^{-1} X S^2
    const Eigen::LLT<Matrix> w_llt(x * x.transpose());
    const Matrix w_inv_x = w_llt.solve(x);                      // (X X^T)^{-1} X

    const double gamma_s = g_inv_xs2.squaredNorm();
    const double gamma_i = w_llt.solve(Matrix::Identity(n1, n1)).trace();
    const Matrix bias_gap = g_inv_xs2.transpose() * x - x.transpose() * w_inv_x;
    const double beta1 = (1.0 - e) / static_cast<double>(r) * bias_gap.squaredNorm();
    const double beta2 = gamma_s - gamma_i;

    b1.push_back(beta1);
    b2.push_back(beta2);
    total.push_back(beta1 + beta2 * (e + sigma * sigma));
  }
  return {MonteCarloEstimate::from_samples(b1), MonteCarloEstimate::from_samples(b2),
          MonteCarloEstimate::from_samples(total)};
}

ClosedFormResult trva_closed_form(const SpectrumModel& model, int n1, double sigma,
                                  const BetaOptions& beta) {
  const int r = model.rank;
  const double e = model.expressiveness;
  if (n1 < 1) throw Error(Errc::invalid_size, "n1 must be >= 1");
  if (r < 0) throw Error(Errc::invalid_argument, "rank must be non-negative");
  if (!(e >= 0.0 && e <= 1.0)) throw Error(Errc::invalid_argument, "expressiveness must lie in [0, 1]");
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be non-negative");
  if (const auto* general = std::get_if<GeneralSpectrum>(&model.spectrum);
      general && general->singular_values.size() != r)
    throw Error(Errc::dimension_mismatch, "spectrum length differs from rank");

  const double noise = sigma * sigma;
  ClosedFormResult out;

  if (r < n1 - 1) {
    const double a = alpha(n1, r).value();
    out.regime = RegimeTag::underparam;
    out.components.expressiveness_term = (1.0 + a) * e;
    out.components.noise_term = a * noise;
  } else if (r > n1 + 1) {
    const double a = alpha(r, n1).value();
    out.regime = RegimeTag::overparam;
    out.components.expressiveness_term = (static_cast<double>(n1) / r + a) * e;
    out.components.rank_penalty_term = static_cast<double>(r - n1) / r;
    out.components.noise_term = a * noise;
    if (const auto* general = std::get_if<GeneralSpectrum>(&model.spectrum)) {
      const auto est = estimate_beta(general->singular_values, n1, e, sigma, beta.samples,
                                     RngStream(beta.seed));
      out.components.beta_term = std::max(0.0, est.total.mean);
      out.beta_std_error = est.total.std_error;
    }
  } else {
    out.regime = RegimeTag::divergent;
    out.value = ExtendedReal::infinity();
    return out;
  }

  const auto& c = out.components;
  out.value = ExtendedReal(noise + c.expressiveness_term + c.rank_penalty_term + c.noise_term +
                           c.beta_term);
  return out;
}

double trtr_asymptotic(int n, int rank, double sigma) {
  if (n < 1) throw Error(Errc::invalid_size, "n must be >= 1");
  const int gap = std::max(0, n - rank);
  return sigma * sigma * static_cast<double>(gap) / static_cast<double>(n);
}

BadRepBound bad_rep_lower_bound(int d, int nbar1, double sigma) {
  if (d < 1 || nbar1 < 1) throw Error(Errc::invalid_dimensions, "d and nbar1 must be >= 1");
  const double s2 = sigma * sigma;
  const double dd = d;
  const double nb = nbar1;
  const double shared = 1.0 - nb / (dd * (1.0 + s2));
  const double noise_ratio_second = dd * s2 / ((1.0 + s2) * nb);
  const double shrinkage_second = dd * s2 / (nb + dd * s2);
  return {std::max(0.0, std::min(shared, noise_ratio_second)),
          std::max(0.0, std::min(shared, shrinkage_second))};
}

double optimal_trva_value(int n1, int k, double sigma) {
  if (n1 <= k + 1)
    throw Error(Errc::divergent_regime,
                "optimum is finite only for n1 > k + 1 (n1=" + std::to_string(n1) +
                    ", k=" + std::to_string(k) + ")");
  const double s2 = sigma * sigma;
  return s2 + s2 * static_cast<double>(k) / static_cast<double>(n1 - k - 1);
}

std::vector<RankScanEntry> rank_scan(int d, int k, int n1, double sigma) {
  if (k < 1 || k > d) throw Error(Errc::invalid_dimensions, "rank scan needs 1 <= k <= d");
  std::vector<RankScanEntry> out;
  out.reserve(static_cast<std::size_t>(d));
  for (int r = 1; r <= d; ++r) {
    const double e = static_cast<double>(std::max(0, k - r)) / static_cast<double>(k);
    SpectrumModel model{r, e, IsotropicSpectrum{1.0}};
    out.push_back({r, e, trva_closed_form(model, n1, sigma)});
  }
  return out;
}

std::vector<int> rank_scan_argmin(const std::vector<RankScanEntry>& scan, double tol) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& entry : scan)
    if (entry.result.value.is_finite()) best = std::min(best, entry.result.value.value());
  std::vector<int> ranks;
  if (!std::isfinite(best)) return ranks;
  for (const auto& entry : scan)
    if (entry.result.value.is_finite() && entry.result.value.value() <= best + tol)
      ranks.push_back(entry.rank);
  return ranks;
}

bool low_rank_conditions_hold(int k, int n1, double sigma) {
  const double s2 = sigma * sigma;
  return n1 >= 2 * k + 2 && s2 > 0.0 &&
         s2 < static_cast<double>(n1 - k - 1) / (3.0 * static_cast<double>(k));
}

namespace {

/// Haar orthogonal n x n: QR of a Gaussian matrix with the diagonal of R made positive.
Matrix haar_orthogonal(Index n, RngStream& rng) {
  const Matrix g = rng.gaussian_matrix(n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// Orthonormal basis of the complement of span(basis), in random orientation.
Matrix random_complement(const Matrix& basis, Index count, RngStream& rng) {
  const Index d = basis.rows();
  Matrix g = rng.gaussian_matrix(d, count);
  g -= basis * (basis.transpose() * g);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(d, count);
}

}  // namespace

Representation realize_spectrum(const SpectrumModel& model, const SubspaceInstance& instance,
                                RngStream& rng) {
  const int d = instance.d;
  const int k = instance.k;
  const int r = model.rank;
  const double e = model.expressiveness;
  if (r < 0 || r > d) throw Error(Errc::invalid_dimensions, "rank must lie in [0, d]");
  const int m = std::min(r, k);
  const double e_min = static_cast<double>(k - m) / k;
  if (e < e_min - 1e-12 || e > 1.0 + 1e-12)
    throw Error(Errc::invalid_argument, "expressiveness not achievable at this rank");

  Vector s;
  if (const auto* general = std::get_if<GeneralSpectrum>(&model.spectrum)) {
    if (general->singular_values.size() != r)
      throw Error(Errc::invalid_dimensions, "spectrum length must equal the rank");
    s = general->singular_values;
  } else {
    s = Vector::Constant(r, std::get<IsotropicSpectrum>(model.spectrum).kappa);
  }
  if (r == 0) return Representation(Matrix::Zero(d, d));

  // m columns at angle theta to basis directions, sin^2 theta = (e k - (k - m)) / m.
  const double sin2 = m > 0 ? std::clamp((e * k - (k - m)) / m, 0.0, 1.0) : 0.0;
  const bool tilted = sin2 > 0.0;
  const Index extra = r - m;
  const Index needed = (tilted ? m : 0) + extra;
  if (k + needed > d) throw Error(Errc::invalid_dimensions, "not enough room for the complement");

  const Matrix rotated_basis = instance.basis * haar_orthogonal(k, rng);
  const Matrix comp = random_complement(instance.basis, std::max<Index>(needed, 1), rng);
  Matrix u(d, r);
  const double c = std::sqrt(1.0 - sin2);
  const double sn = std::sqrt(sin2);
  for (Index j = 0; j < m; ++j) {
    u.col(j) = c * rotated_basis.col(j);
    if (tilted) u.col(j) += sn * comp.col(j);
  }
  for (Index j = 0; j < extra; ++j) u.col(m + j) = comp.col((tilted ? m : 0) + j);

  u = u * haar_orthogonal(r, rng);
  const Matrix v = haar_orthogonal(d, rng).leftCols(r);
  return Representation(u * s.asDiagonal() * v.transpose());
}

Representation rotate_within_column_space(const Representation& rep, RngStream& rng) {
  const auto& svd = rep.svd();
  const Index r = svd.rank;
  const Matrix u = svd.u.leftCols(r);
  const Matrix q = haar_orthogonal(r, rng);
  const Matrix rotated = u * q * svd.s.head(r).asDiagonal() * svd.v.leftCols(r).transpose();
  return Representation(rotated);
}

}  // namespace metasplit
