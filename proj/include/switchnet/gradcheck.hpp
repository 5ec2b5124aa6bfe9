#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace switchnet {

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;  // number of scalar derivatives compared
};

/// Central-difference checks (step 1e-6) of every layer's parameter and input
/// gradients on randomized small shapes, including an even window, plus tiny
/// end-to-end models in all four configurations. The loss is a random linear
/// functional of the output.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, double step = 1e-6);

}  // namespace switchnet
