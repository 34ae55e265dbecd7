#pragma once

#include <cstdint>
#include <vector>

#include "tdcr/network.hpp"

namespace tdcr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators, one per trainable parameter.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  void reset(const ModelParams& params);
  bool operator==(const AdamState&) const;
};

/// Bias-corrected Adam update of every parameter with trainable[i] set.
/// Frozen parameters and their moments are left untouched. Throws
/// NumericalDivergence naming the parameter if a gradient is not finite.
void adam_step(ModelParams& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr, const AdamConfig& cfg, const std::vector<bool>& trainable);

} // namespace tdcr
