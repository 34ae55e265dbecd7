#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdcr/network.hpp"

namespace tdcr {

struct GradientEntry {
  std::string parameter;
  ParamKind kind;
  Eigen::Index index;
  double analytic;
  double numeric;
  double relative_error;
};

struct GradientCheckReport {
  std::vector<GradientEntry> entries;
  double tolerance = 0.0;

  std::size_t checked(ParamKind kind) const;
  std::size_t failed(ParamKind kind) const;
  double worst() const;
  bool passed() const;
};

struct GradientCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  double huber_delta = 0.1;
  std::uint64_t dropout_seed = 99;
  /// Upper bound per parameter tensor; 0 checks every element.
  std::size_t max_per_tensor = 0;
};

/// Compares backprop gradients of the full multi-task loss (train mode,
/// spectrum head on) against a fourth-order central difference. Relative
/// error is |a - n| / (|a| + 1e-8).
GradientCheckReport gradient_check(MultiTaskNet& net, const Batch& batch,
                                   const GradientCheckOptions& opts = {});

/// Tiny configuration used for gradient checks: 3 channels, trunk [8, 4].
ModelConfig tiny_model_config(double dropout_rate = 0.3);

} // namespace tdcr
