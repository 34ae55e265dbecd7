#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdcr/dataset.hpp"
#include "tdcr/metrics.hpp"
#include "tdcr/network.hpp"
#include "tdcr/trainer.hpp"

namespace tdcr {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything a pipeline run needs. One top-level seed feeds every random
/// stream through labeled derivation.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  SsimOptions metrics;

  /// Pushes the seed and detector/nuclide shape into the sub-configs.
  void sync();
  void validate() const;
};

/// Flat key = value text with [dataset], [detector], [nuclide] (repeatable),
/// [model], [train] and [metrics] sections; `seed` sits before any section.
/// Unknown sections or keys are errors carrying the line number.
RunConfig parse_run_config(std::istream& is, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Writes the effective configuration in the same format.
void write_run_config(std::ostream& os, const RunConfig& cfg);

} // namespace tdcr
