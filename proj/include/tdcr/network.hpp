#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdcr/dataset.hpp"

namespace tdcr {

/// Row-major semantics: one row per sample, one column per feature.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

class NumericalDivergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int n_nuclides = 2;
  int n_channels = 1024;
  std::vector<int> trunk_widths{512, 256};
  int head_width = 128;
  int spectrum_head_width = 512;
  double dropout_rate = 0.2;

  void validate() const;
  int input_width() const { return 2 * n_channels; }
  int trunk_output_width() const { return trunk_widths.back(); }
  int spectrum_width() const { return 2 * n_nuclides * n_channels; }
  /// The spectrum head predicts probability per channel times n_channels,
  /// which puts typical targets near 1.
  double spectrum_scale() const { return n_channels; }

  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup : std::uint8_t { trunk, activity, efficiency, spectrum, loss_weighting };
enum class ParamKind : std::uint8_t { weight, bias, bn_scale, bn_shift, log_variance };

struct Parameter {
  std::string name;
  ParamGroup group;
  ParamKind kind;
  Matrix value;
};

/// Trainable parameters in a fixed registry order, plus batch-norm running
/// statistics (not trained by gradient).
struct ModelParams {
  std::vector<Parameter> trainable;
  std::vector<RowVector> running_mean;
  std::vector<RowVector> running_var;

  std::size_t index_of(const std::string& name) const;
  double log_var_activity() const { return trainable[log_var_activity_index].value(0, 0); }
  double log_var_efficiency() const { return trainable[log_var_efficiency_index].value(0, 0); }

  std::size_t log_var_activity_index = 0;
  std::size_t log_var_efficiency_index = 0;
};

/// Network outputs for a batch. Efficiency columns are (eps2_1..eps2_n,
/// eps3_1..eps3_n); spectrum columns are per-nuclide Q2 blocks followed by
/// per-nuclide Q3 blocks, n_channels each.
struct Predictions {
  Matrix activity;
  Matrix efficiency;
  Matrix spectra;
};

/// Clamp-and-normalize activities, clamp efficiencies into [0,1], clamp
/// spectra at zero. An all-non-positive activity row becomes uniform.
Predictions postprocess(const Predictions& raw);

enum class Mode { train, eval };

struct DenseCache {
  Matrix input;
  Matrix pre; ///< pre-activation (only when followed by ReLU)
};

struct BatchNormCache {
  Matrix normalized; ///< x-hat
  RowVector inv_std;
  RowVector batch_mean;
  RowVector batch_var;
};

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  std::vector<DenseCache> trunk_dense;
  std::vector<BatchNormCache> trunk_bn;
  Matrix trunk_out;
  DenseCache act_hidden, act_out;
  Matrix dropout_mask;
  DenseCache eff_hidden, eff_out;
  DenseCache spec_hidden, spec_out;
  bool has_spectrum = false;
};

struct OutputGradients {
  Matrix activity;
  Matrix efficiency;
  Matrix spectra; ///< empty when the spectrum head is not trained
};

/// Shared trunk of FC+ReLU+batch-norm blocks feeding three heads: activity
/// (with dropout), efficiency, and spectrum (conditioned on the other two).
/// The spectrum output uses softplus, which keeps it positive without the
/// permanently dead units a final ReLU produces on sparse channels.
class MultiTaskNet {
public:
  /// He-normal weights from init_seed; zero biases and log-variances, except
  /// the spectrum output layer (scaled-down weights, positive bias).
  MultiTaskNet(ModelConfig cfg, std::uint64_t init_seed);
  MultiTaskNet(ModelConfig cfg, ModelParams params);

  /// Registry with every parameter zero and batch-norm statistics (0, 1).
  static ModelParams zero_params(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Train mode needs >= 2 rows and updates running statistics. The dropout
  /// mask is a pure function of dropout_seed.
  Predictions forward(const Matrix& input, Mode mode, std::uint64_t dropout_seed = 0,
                      bool with_spectrum = true, ForwardCache* cache = nullptr);

  /// Eval-mode inference in chunks; const and safe for concurrent callers.
  Predictions predict(const Matrix& input, std::size_t chunk = 256) const;

  /// Gradients for every trainable parameter (zero where unreachable).
  std::vector<Matrix> backward(const ForwardCache& cache, const OutputGradients& grads) const;

  static constexpr double kBatchNormEps = 1e-5;
  static constexpr double kBatchNormMomentum = 0.9;
  /// Inputs enter the trunk as log1p(x / floor) / log1p(1 / floor).
  static constexpr double kInputFloor = 1e-6;
  static constexpr double kSpectrumOutputGain = 0.1;
  /// softplus(bias) = 1, the typical scaled target
  static constexpr double kSpectrumOutputBias = 0.5413248546129181;

private:
  struct DenseIdx { std::size_t w, b; };
  struct BatchNormIdx { std::size_t gamma, beta, stats; };

  MultiTaskNet(ModelConfig cfg, ModelParams, int); // layout only
  void build_registry(bool allocate, std::uint64_t init_seed);
  Predictions run(const Matrix& input, Mode mode, std::uint64_t dropout_seed,
                  bool with_spectrum, ForwardCache& cache) const;

  ModelConfig cfg_;
  ModelParams params_;
  std::vector<DenseIdx> trunk_dense_;
  std::vector<BatchNormIdx> trunk_bn_;
  DenseIdx act1_{}, act2_{}, eff1_{}, eff2_{}, spec1_{}, spec2_{};
};

/// Network inputs and regression targets for a set of records.
struct Batch {
  Matrix input;     ///< [q2 | q3]
  Matrix activity;
  Matrix efficiency;
  Matrix spectra;

  Eigen::Index size() const { return input.rows(); }
  Batch rows(std::span<const Eigen::Index> idx) const;
};

Batch make_batch(std::span<const SampleRecord> records);

} // namespace tdcr
