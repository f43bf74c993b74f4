#pragma once

#include <cstdint>
#include <string>

#include "cxr/core/text_io.hpp"

namespace cxr {

/// Identity stamped into every emitted artifact.
struct Provenance {
  std::uint64_t seed = 2020;
  std::string config_digest = "none";

  /// "# tool ...", "# seed ...", "# config_digest ..." lines, each ending in '\n'.
  std::string header(std::string_view comment = "# ") const {
    std::string out;
    out += std::string(comment) + "tool " + kToolName + " " + kToolVersion + "\n";
    out += std::string(comment) + "seed " + std::to_string(seed) + "\n";
    out += std::string(comment) + "config_digest " + config_digest + "\n";
    return out;
  }
};

}  // namespace cxr
