#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "tdcr/adam.hpp"
#include "tdcr/loss.hpp"
#include "tdcr/network.hpp"

namespace tdcr {

struct TrainConfig {
  double stage1_lr = 1e-3;
  double stage2_lr = 1e-4;
  int batch_size = 64;
  int max_epochs = 200;  ///< per stage
  int patience = 20;
  double min_improvement = 1e-6;
  double huber_delta = 1.0;
  double spectrum_loss_weight = 1.0;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int stage = 1;
  int epoch = 0; ///< 0 is the evaluation before the first update of a stage
  LossTerms train;
  LossTerms val;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch_stage1 = 0;
  int best_epoch_stage2 = 0;

  void write_csv(std::ostream& os) const;
};

/// Two-stage optimizer driver. Stage 1 freezes the spectrum head and uses the
/// uncertainty-weighted activity/efficiency loss; stage 2 trains everything
/// with the added Huber spectrum term at the lower learning rate.
class Trainer {
public:
  Trainer(MultiTaskNet& net, TrainConfig cfg);

  /// Resets the optimizer and epoch counter for stage 1 or 2.
  void begin_stage(int stage);
  /// One pass over shuffled mini-batches; returns mean train-mode losses.
  LossTerms train_epoch(const Batch& data);
  /// Eval-mode loss of the current stage.
  LossTerms evaluate(const Batch& data) const;

  /// Both stages with early stopping and best-weight restoration.
  TrainingHistory fit(const Batch& train, const Batch& val,
                      const std::function<void(const EpochRecord&)>& progress = {});

  int stage() const { return stage_; }
  int epoch() const { return epoch_; }
  AdamState& optimizer() { return adam_; }
  const AdamState& optimizer() const { return adam_; }
  /// Restores a saved position so training can resume bitwise.
  void restore(int stage, int epoch, AdamState state);
  std::vector<bool> trainable_mask() const;

private:
  double lr() const { return stage_ == 1 ? cfg_.stage1_lr : cfg_.stage2_lr; }
  LossResult loss(const Predictions& pred, const Batch& target) const;
  void run_stage(int stage, const Batch& train, const Batch& val, TrainingHistory& history,
                 const std::function<void(const EpochRecord&)>& progress);

  MultiTaskNet& net_;
  TrainConfig cfg_;
  AdamState adam_;
  int stage_ = 1;
  int epoch_ = 0;
};

} // namespace tdcr
