#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace metasplit {

/// Seeded Gaussian/uniform source. A stream is identified by (seed, stream_id);
/// two streams with the same identity produce the same draws.
///
/// Sub-streams are derived deterministically, so Monte Carlo loops hand
/// `substream(i)` to task i and stay reproducible irrespective of scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Independent child stream. Does not advance this stream.
  RngStream substream(std::uint64_t id) const;

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t uniform_index(std::uint64_t bound);

  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd gaussian_vector(Eigen::Index size);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace metasplit
