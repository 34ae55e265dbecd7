#include "tdcr/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "tdcr/loss.hpp"

namespace tdcr {

std::size_t GradientCheckReport::checked(ParamKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.kind == kind; }));
}

std::size_t GradientCheckReport::failed(ParamKind kind) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
    return e.kind == kind && !(e.relative_error < tolerance);
  }));
}

double GradientCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.relative_error);
  return w;
}

bool GradientCheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [&](const auto& e) {
    return e.relative_error < tolerance;
  });
}

ModelConfig tiny_model_config(double dropout_rate) {
  ModelConfig cfg;
  cfg.n_nuclides = 2;
  cfg.n_channels = 3;
  cfg.trunk_widths = {8, 4};
  cfg.head_width = 5;
  cfg.spectrum_head_width = 6;
  cfg.dropout_rate = dropout_rate;
  return cfg;
}

GradientCheckReport gradient_check(MultiTaskNet& net, const Batch& batch,
                                   const GradientCheckOptions& opts) {
  auto& reg = net.params().trainable;
  const auto running_mean = net.params().running_mean;
  const auto running_var = net.params().running_var;

  const double scale = net.config().spectrum_scale();
  auto loss_at = [&]() {
    const auto pred = net.forward(batch.input, Mode::train, opts.dropout_seed, true);
    return loss_stage2(pred, batch, net.params(), opts.huber_delta, 1.0, scale).terms.total;
  };

  ForwardCache cache;
  const auto pred = net.forward(batch.input, Mode::train, opts.dropout_seed, true, &cache);
  const auto res = loss_stage2(pred, batch, net.params(), opts.huber_delta, 1.0, scale);
  auto grads = net.backward(cache, res.output_grads);
  grads[net.params().log_var_activity_index](0, 0) = res.d_log_var_activity;
  grads[net.params().log_var_efficiency_index](0, 0) = res.d_log_var_efficiency;

  GradientCheckReport report;
  report.tolerance = opts.tolerance;
  const double h = opts.step;
  for (std::size_t p = 0; p < reg.size(); ++p) {
    Matrix& value = reg[p].value;
    const Eigen::Index n = value.size();
    const Eigen::Index limit =
        opts.max_per_tensor == 0 ? n : std::min<Eigen::Index>(n, static_cast<Eigen::Index>(opts.max_per_tensor));
    for (Eigen::Index k = 0; k < limit; ++k) {
      // spread the sampled elements across the tensor
      const Eigen::Index idx = limit == n ? k : k * n / limit;
      const double orig = value.data()[idx];
      auto at = [&](double x) {
        value.data()[idx] = x;
        return loss_at();
      };
      const double numeric =
          (8 * (at(orig + h) - at(orig - h)) - (at(orig + 2 * h) - at(orig - 2 * h))) / (12 * h);
      value.data()[idx] = orig;
      const double analytic = grads[p].data()[idx];
      // A bias feeding a fully active ReLU into batch norm has exactly zero
      // gradient; the stencil then returns rounding noise only.
      const bool both_vanish = std::abs(analytic) < 1e-12 && std::abs(numeric) < 1e-9;
      const double rel =
          both_vanish ? 0.0 : std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
      report.entries.push_back({reg[p].name, reg[p].kind, idx, analytic, numeric, rel});
    }
  }
  net.params().running_mean = running_mean;
  net.params().running_var = running_var;
  return report;
}

} // namespace tdcr
