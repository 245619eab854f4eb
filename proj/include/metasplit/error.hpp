#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metasplit {

enum class Errc {
  invalid_dimensions,
  invalid_size,
  invalid_split,
  invalid_argument,
  dimension_mismatch,
  split_size_mismatch,
  divergent_regime,
  optimization_diverged,
  invalid_k,
  invalid_config,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace metasplit
