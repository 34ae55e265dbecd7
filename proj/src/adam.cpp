#include "tdcr/adam.hpp"

#include <cmath>

namespace tdcr {

void AdamState::reset(const ModelParams& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params.trainable) {
    m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

bool AdamState::operator==(const AdamState& o) const {
  if (step != o.step || m.size() != o.m.size() || v.size() != o.v.size()) return false;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] != o.m[i] || v[i] != o.v[i]) return false;
  return true;
}

void adam_step(ModelParams& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr, const AdamConfig& cfg, const std::vector<bool>& trainable) {
  auto& reg = params.trainable;
  if (grads.size() != reg.size() || trainable.size() != reg.size())
    throw std::invalid_argument("adam_step: gradient count does not match parameters");
  if (state.m.size() != reg.size()) state.reset(params);
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (trainable[i] && !grads[i].allFinite())
      throw NumericalDivergence("non-finite gradient for parameter '" + reg[i].name +
                                "' at optimizer step " + std::to_string(state.step + 1));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < reg.size(); ++i) {
    if (!trainable[i]) continue;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    reg[i].value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

} // namespace tdcr
