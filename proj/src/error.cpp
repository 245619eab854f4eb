#include "metasplit/error.hpp"

namespace metasplit {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_dimensions: return "invalid-dimensions";
    case Errc::invalid_size: return "invalid-size";
    case Errc::invalid_split: return "invalid-split";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::split_size_mismatch: return "split-size-mismatch";
    case Errc::divergent_regime: return "divergent-regime";
    case Errc::optimization_diverged: return "optimization-diverged";
    case Errc::invalid_k: return "invalid-k";
    case Errc::invalid_config: return "invalid-config";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace metasplit
