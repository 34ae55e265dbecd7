#pragma once

#include "tdcr/network.hpp"

namespace tdcr {

/// Raw task losses and the weighted objective.
struct LossTerms {
  double total = 0.0;
  double activity_mse = 0.0;
  double efficiency_mse = 0.0;
  double spectrum_huber = 0.0;

  /// Unweighted sum of the task terms.
  double raw() const { return activity_mse + efficiency_mse + spectrum_huber; }
};

struct LossResult {
  LossTerms terms;
  OutputGradients output_grads;
  double d_log_var_activity = 0.0;
  double d_log_var_efficiency = 0.0;
};

/// Huber(r; delta): r^2/2 inside the knee, delta(|r| - delta/2) outside.
double huber(double residual, double delta);
double huber_derivative(double residual, double delta);

/// exp(-s_a) MSE_a + exp(-s_e) MSE_e + s_a + s_e with learnable log-variances.
LossResult loss_stage1(const Predictions& pred, const Batch& target, const ModelParams& params);

/// Stage-1 objective plus spectrum_weight * mean Huber over spectrum outputs.
/// Residuals are multiplied by spectrum_scale before the Huber penalty, so the
/// knee sits in the units the spectrum head predicts in.
LossResult loss_stage2(const Predictions& pred, const Batch& target, const ModelParams& params,
                       double huber_delta, double spectrum_weight = 1.0,
                       double spectrum_scale = 1.0);

} // namespace tdcr
