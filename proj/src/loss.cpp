#include "tdcr/loss.hpp"

#include <cmath>

namespace tdcr {

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) {
  if (r > delta) return delta;
  if (r < -delta) return -delta;
  return r;
}

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("loss: shape mismatch for ") + what);
}

} // namespace

LossResult loss_stage1(const Predictions& pred, const Batch& target, const ModelParams& params) {
  check_shapes(pred.activity, target.activity, "activity");
  check_shapes(pred.efficiency, target.efficiency, "efficiency");
  LossResult out;
  const double sa = params.log_var_activity();
  const double se = params.log_var_efficiency();
  const double wa = std::exp(-sa);
  const double we = std::exp(-se);

  const Matrix ra = pred.activity - target.activity;
  const Matrix re = pred.efficiency - target.efficiency;
  const auto na = static_cast<double>(ra.size());
  const auto ne = static_cast<double>(re.size());
  out.terms.activity_mse = ra.squaredNorm() / na;
  out.terms.efficiency_mse = re.squaredNorm() / ne;
  out.terms.total = wa * out.terms.activity_mse + we * out.terms.efficiency_mse + sa + se;

  out.output_grads.activity = (2.0 * wa / na) * ra;
  out.output_grads.efficiency = (2.0 * we / ne) * re;
  out.d_log_var_activity = 1.0 - wa * out.terms.activity_mse;
  out.d_log_var_efficiency = 1.0 - we * out.terms.efficiency_mse;
  return out;
}

LossResult loss_stage2(const Predictions& pred, const Batch& target, const ModelParams& params,
                       double huber_delta, double spectrum_weight, double spectrum_scale) {
  check_shapes(pred.spectra, target.spectra, "spectra");
  LossResult out = loss_stage1(pred, target, params);
  const auto ns = static_cast<double>(pred.spectra.size());
  const Matrix r = spectrum_scale * (pred.spectra - target.spectra);
  double sum = 0.0;
  out.output_grads.spectra.resize(r.rows(), r.cols());
  const double scale = spectrum_weight * spectrum_scale / ns;
  for (Eigen::Index c = 0; c < r.cols(); ++c)
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      sum += huber(r(i, c), huber_delta);
      out.output_grads.spectra(i, c) = scale * huber_derivative(r(i, c), huber_delta);
    }
  out.terms.spectrum_huber = sum / ns;
  out.terms.total += spectrum_weight * out.terms.spectrum_huber;
  return out;
}

} // namespace tdcr
