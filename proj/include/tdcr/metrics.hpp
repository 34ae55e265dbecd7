#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tdcr/dataset.hpp"
#include "tdcr/network.hpp"

namespace tdcr {

double mse(std::span<const double> a, std::span<const double> b);
double mae(std::span<const double> a, std::span<const double> b);
double euclidean(std::span<const double> a, std::span<const double> b);
/// 1 - SS_res / SS_tot. Throws std::domain_error when truth has no variance.
double r_squared(std::span<const double> pred, std::span<const double> truth);

struct SsimOptions {
  int window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 0.0; ///< <= 0 selects max over both signals
};

/// Mean SSIM over all stride-1 uniform windows of two 1-D signals.
double ssim_1d(std::span<const double> x, std::span<const double> y,
               const SsimOptions& opts = {});

/// Per-sample truth, prediction and spectral scores. Spectrum-indexed vectors
/// follow the network layout: per-nuclide Q2 then per-nuclide Q3.
struct SampleEval {
  std::size_t sample_id = 0;
  double quench = 0.0;
  double eff3_mixture = 0.0; ///< true sum p*eff3
  std::vector<double> true_activity, pred_activity;
  std::vector<double> true_efficiency, pred_efficiency;
  std::vector<double> ssim;
  std::vector<double> distance;

  double activity_abs_error() const;
  double efficiency_abs_error() const;
};

struct EvalReport {
  double activity_mse = 0.0;
  double activity_mae = 0.0;
  double efficiency_mse = 0.0;
  double efficiency_mae = 0.0;
  std::vector<double> activity_r2;   ///< per output, NaN if undefined
  std::vector<double> efficiency_r2;
  double mean_ssim = 0.0;
  double mean_distance = 0.0;
  std::vector<SampleEval> samples;
};

/// Aggregates depend only on the per-sample rows.
EvalReport aggregate(std::vector<SampleEval> samples);

/// Scores post-processed predictions against records.
EvalReport evaluate_predictions(const Predictions& pred, std::span<const SampleRecord> records,
                                const SsimOptions& ssim = {});

/// Eval-mode inference, post-processing and scoring over a split.
EvalReport evaluate(const MultiTaskNet& net, std::span<const SampleRecord> records,
                    const SsimOptions& ssim = {});

/// The generative labels laid out as network predictions.
Predictions ground_truth_predictions(std::span<const SampleRecord> records);

void write_report_summary(std::ostream& os, const EvalReport& report,
                          std::span<const std::string> nuclide_names);
void write_report_csv(std::ostream& os, const EvalReport& report,
                      std::span<const std::string> nuclide_names);
/// Reads the per-sample rows written by write_report_csv.
std::vector<SampleEval> read_report_csv(std::istream& is);

} // namespace tdcr
