#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tdcr/adam.hpp"
#include "tdcr/network.hpp"

namespace tdcr {

/// Trainer position stored alongside the parameters for resumable training.
struct OptimizerSnapshot {
  int stage = 1;
  int epoch = 0;
  AdamState adam;
};

struct LoadedModel {
  ModelConfig config;
  ModelParams params;
  std::optional<OptimizerSnapshot> optimizer;

  MultiTaskNet network() const { return MultiTaskNet(config, params); }
};

/// "TDNN" + u16 version + config + f64 parameters + optional optimizer section.
std::vector<char> serialize_model(const MultiTaskNet& net,
                                  const std::optional<OptimizerSnapshot>& optimizer = {});
LoadedModel parse_model(std::vector<char> bytes);

void save_model(const std::string& path, const MultiTaskNet& net,
                const std::optional<OptimizerSnapshot>& optimizer = {});
LoadedModel load_model(const std::string& path);

} // namespace tdcr
