#pragma once
// Finite-difference gradient checks over every op, every layer and the full
// loss of each variant, at float64 with tiny dimensions.

#include <cstdint>
#include <string>
#include <vector>

namespace stancegen {

struct GradcheckResult {
  std::string component;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  double threshold = 1e-4;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failing() const;
};

GradcheckReport run_gradcheck(double threshold = 1e-4, std::uint64_t seed = 7);

}  // namespace stancegen
