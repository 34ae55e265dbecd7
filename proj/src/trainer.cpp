#include "tdcr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "tdcr/rng.hpp"

namespace tdcr {

void TrainConfig::validate() const {
  if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0))
    throw std::invalid_argument("train: learning rates must be > 0");
  if (!(stage2_lr < stage1_lr))
    throw std::invalid_argument("train: stage2_lr must be smaller than stage1_lr");
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("train: huber_delta must be > 0");
  if (!(spectrum_loss_weight >= 0.0))
    throw std::invalid_argument("train: spectrum_loss_weight must be >= 0");
}

void TrainingHistory::write_csv(std::ostream& os) const {
  const auto old = os.precision(17);
  os << "epoch,stage,train_total,train_activity_mse,train_efficiency_mse,train_spectrum_huber,"
        "val_total,val_activity_mse,val_efficiency_mse,val_spectrum_huber\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << e.stage << ',' << e.train.total << ',' << e.train.activity_mse << ','
       << e.train.efficiency_mse << ',' << e.train.spectrum_huber << ',' << e.val.total << ','
       << e.val.activity_mse << ',' << e.val.efficiency_mse << ',' << e.val.spectrum_huber
       << '\n';
  os.precision(old);
}

Trainer::Trainer(MultiTaskNet& net, TrainConfig cfg) : net_(net), cfg_(std::move(cfg)) {
  cfg_.validate();
  adam_.reset(net_.params());
}

void Trainer::begin_stage(int stage) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  stage_ = stage;
  epoch_ = 0;
  adam_.reset(net_.params());
}

void Trainer::restore(int stage, int epoch, AdamState state) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  stage_ = stage;
  epoch_ = epoch;
  adam_ = std::move(state);
}

std::vector<bool> Trainer::trainable_mask() const {
  const auto& reg = net_.params().trainable;
  std::vector<bool> mask(reg.size());
  for (std::size_t i = 0; i < reg.size(); ++i)
    mask[i] = stage_ == 2 || reg[i].group != ParamGroup::spectrum;
  return mask;
}

LossResult Trainer::loss(const Predictions& pred, const Batch& target) const {
  if (stage_ == 1) return loss_stage1(pred, target, net_.params());
  return loss_stage2(pred, target, net_.params(), cfg_.huber_delta, cfg_.spectrum_loss_weight,
                     net_.config().spectrum_scale());
}

LossTerms Trainer::train_epoch(const Batch& data) {
  const Eigen::Index n = data.size();
  if (n < 2) throw std::invalid_argument("training split needs at least 2 samples");
  ++epoch_;
  const auto stream = static_cast<std::uint64_t>(stage_) << 32 | static_cast<std::uint64_t>(epoch_);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffle_rng = make_rng(cfg_.seed, "shuffle", stream);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto mask = trainable_mask();
  const bool with_spectrum = stage_ == 2;
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  LossTerms sum;
  std::size_t start = 0;
  std::uint64_t batch_index = 0;
  while (start < order.size()) {
    std::size_t end = std::min(order.size(), start + bs);
    if (order.size() - end < 2) end = order.size(); // no trailing batch of one
    const std::span<const Eigen::Index> idx(order.data() + start, end - start);
    const Batch batch = data.rows(idx);

    ForwardCache cache;
    const std::uint64_t dropout_seed = derive_seed(cfg_.seed, "dropout", (stream << 20) | batch_index);
    const Predictions pred = net_.forward(batch.input, Mode::train, dropout_seed, with_spectrum, &cache);
    const LossResult res = loss(pred, batch);
    if (!std::isfinite(res.terms.total))
      throw NumericalDivergence("numerical divergence: non-finite loss in stage " +
                                std::to_string(stage_) + " epoch " + std::to_string(epoch_));
    std::vector<Matrix> grads = net_.backward(cache, res.output_grads);
    const auto& params = net_.params();
    grads[params.log_var_activity_index](0, 0) = res.d_log_var_activity;
    grads[params.log_var_efficiency_index](0, 0) = res.d_log_var_efficiency;
    adam_step(net_.params(), grads, adam_, lr(), cfg_.adam, mask);

    const double w = static_cast<double>(idx.size());
    sum.total += w * res.terms.total;
    sum.activity_mse += w * res.terms.activity_mse;
    sum.efficiency_mse += w * res.terms.efficiency_mse;
    sum.spectrum_huber += w * res.terms.spectrum_huber;
    start = end;
    ++batch_index;
  }
  const double inv = 1.0 / static_cast<double>(n);
  sum.total *= inv;
  sum.activity_mse *= inv;
  sum.efficiency_mse *= inv;
  sum.spectrum_huber *= inv;
  return sum;
}

LossTerms Trainer::evaluate(const Batch& data) const {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
  const Predictions pred = net_.predict(data.input);
  return loss(pred, data).terms;
}

void Trainer::run_stage(int stage, const Batch& train, const Batch& val,
                        TrainingHistory& history,
                        const std::function<void(const EpochRecord&)>& progress) {
  begin_stage(stage);
  auto emit = [&](const EpochRecord& rec) {
    history.epochs.push_back(rec);
    if (progress) progress(rec);
  };

  EpochRecord first{stage, 0, evaluate(train), evaluate(val)};
  emit(first);
  double best = first.val.total;
  int best_epoch = 0;
  ModelParams best_params = net_.params();
  int stale = 0;
  for (int e = 1; e <= cfg_.max_epochs; ++e) {
    EpochRecord rec;
    rec.stage = stage;
    rec.train = train_epoch(train);
    rec.epoch = epoch_;
    rec.val = evaluate(val);
    emit(rec);
    if (!std::isfinite(rec.val.total))
      throw NumericalDivergence("numerical divergence: non-finite validation loss in stage " +
                                std::to_string(stage) + " epoch " + std::to_string(epoch_));
    if (rec.val.total < best - cfg_.min_improvement) {
      best = rec.val.total;
      best_epoch = rec.epoch;
      best_params = net_.params();
      stale = 0;
    } else if (++stale >= cfg_.patience) {
      break;
    }
  }
  net_.params() = std::move(best_params);
  (stage == 1 ? history.best_epoch_stage1 : history.best_epoch_stage2) = best_epoch;
}

TrainingHistory Trainer::fit(const Batch& train, const Batch& val,
                             const std::function<void(const EpochRecord&)>& progress) {
  if (val.size() == 0) throw std::invalid_argument("fit: validation split is empty");
  TrainingHistory history;
  run_stage(1, train, val, history, progress);
  run_stage(2, train, val, history, progress);
  return history;
}

} // namespace tdcr
