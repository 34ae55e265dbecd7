#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdcr/beta_spectra.hpp"
#include "tdcr/detector_response.hpp"
#include "tdcr/rng.hpp"

namespace tdcr {

/// One labeled example. Composite q2/q3 carry measurement noise; every other
/// field is noise-free ground truth.
struct SampleRecord {
  std::vector<double> proportions;
  double quench = 1.0;
  std::vector<double> eff2;  ///< per nuclide
  std::vector<double> eff3;  ///< per nuclide
  double tdcr = 0.0;         ///< mixture: sum p*eff3 / sum p*eff2
  std::vector<double> q2;
  std::vector<double> q3;
  std::vector<std::vector<double>> nuclide_q2; ///< [nuclide][channel]
  std::vector<std::vector<double>> nuclide_q3;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetConfig {
  int n_samples = 10000;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  double noise_level = 0.05;
  double quench_min = 0.001;
  std::uint64_t seed = 0;
  std::vector<NuclideSpec> nuclides{tritium(), carbon14()};
  DetectorConfig detector;

  void validate() const;
};

/// Samples in generation order; [0, n_train) train, then val, then test.
struct Dataset {
  int n_nuclides = 0;
  int n_channels = 0;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<SampleRecord> records;

  std::size_t n_test() const { return records.size() - n_train - n_val; }
  std::span<const SampleRecord> train() const { return {records.data(), n_train}; }
  std::span<const SampleRecord> val() const { return {records.data() + n_train, n_val}; }
  std::span<const SampleRecord> test() const {
    return {records.data() + n_train + n_val, n_test()};
  }
  /// Split by name: "train", "val" or "test".
  std::span<const SampleRecord> split(const std::string& name) const;

  bool operator==(const Dataset&) const = default;
};

/// Uniform draw on the simplex plus a quench factor in (quench_min, 1].
std::pair<std::vector<double>, double> sample_parameters(Rng& rng, int n_nuclides,
                                                         double quench_min);

/// Multiplicative Gaussian noise v * (1 + N(0, level)), clamped at zero.
std::vector<double> add_noise(std::span<const double> spectrum, double level, Rng& rng);

/// Floor for val/test sizes, remainder to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

/// Holds the precomputed primary spectra of a configuration.
class DatasetGenerator {
public:
  explicit DatasetGenerator(DatasetConfig cfg);

  const DatasetConfig& config() const { return cfg_; }
  const std::vector<BetaSpectrum>& spectra() const { return spectra_; }

  /// Deterministic in (config seed, index).
  SampleRecord sample(std::uint64_t index) const;
  /// Fixed proportions and quench, drawing only the noise from rng.
  SampleRecord sample_with(std::span<const double> proportions, double quench,
                           Rng& rng) const;

private:
  DatasetConfig cfg_;
  std::vector<BetaSpectrum> spectra_;
};

SampleRecord generate_sample(const DatasetGenerator& gen, Rng& rng);

/// Generates cfg.n_samples records. threads <= 0 reads TDCR_THREADS (default 1).
Dataset generate_dataset(const DatasetConfig& cfg, int threads = 0);

/// Binary layout: "TDCR", u16 version, header, then per-record f32 payloads.
std::vector<char> serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::vector<char> bytes);
void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

/// Rounds every floating payload to f32, i.e. what a file round-trip yields.
Dataset quantize_f32(Dataset dataset);

/// FNV-1a of the serialized bytes.
std::uint64_t dataset_checksum(const Dataset& dataset);
std::uint64_t fnv1a64(std::span<const char> bytes);

/// Labels as '#' rows, then channel,q2,q3 and per-nuclide clean spectra.
void write_record_csv(std::ostream& os, const SampleRecord& record,
                      std::span<const std::string> nuclide_names);

int thread_count_from_env();

} // namespace tdcr
