#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dccm {

struct GradientCase {
  std::string name;
  bool primitive = true;
  /// Max relative error of the check for one seed.
  std::function<double(std::uint64_t seed)> run;
};

/// Every primitive (each differentiable operand separately) plus the graph,
/// label, mutual-information, invariance and full objectives.
std::vector<GradientCase> gradient_cases();

struct GradientResult {
  std::string name;
  bool primitive = true;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradientReport {
  std::vector<GradientResult> results;
  double max_primitive_error = 0.0;
  double max_loss_error = 0.0;
  double seconds = 0.0;
  bool passed = false;
};

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kLossTolerance = 1e-4;

GradientReport run_gradient_suite(std::size_t seeds = 10);

}  // namespace dccm
