#include "tdcr/network.hpp"

#include <cmath>
#include <random>

#include "tdcr/rng.hpp"

namespace tdcr {

void ModelConfig::validate() const {
  if (n_nuclides < 1) throw std::invalid_argument("model: n_nuclides must be >= 1");
  if (n_channels < 1) throw std::invalid_argument("model: n_channels must be >= 1");
  if (trunk_widths.empty()) throw std::invalid_argument("model: trunk needs at least one layer");
  for (int w : trunk_widths)
    if (w < 1) throw std::invalid_argument("model: trunk widths must be >= 1");
  if (head_width < 1 || spectrum_head_width < 1)
    throw std::invalid_argument("model: head widths must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("model: dropout_rate must be in [0, 1)");
}

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < trainable.size(); ++i)
    if (trainable[i].name == name) return i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

Predictions postprocess(const Predictions& raw) {
  Predictions out;
  out.activity = raw.activity.cwiseMax(0.0);
  const auto n = out.activity.cols();
  for (Eigen::Index r = 0; r < out.activity.rows(); ++r) {
    const double sum = out.activity.row(r).sum();
    if (sum > 0.0)
      out.activity.row(r) /= sum;
    else
      out.activity.row(r).setConstant(1.0 / static_cast<double>(n));
  }
  out.efficiency = raw.efficiency.cwiseMax(0.0).cwiseMin(1.0);
  out.spectra = raw.spectra.cwiseMax(0.0);
  return out;
}

// ---------------------------------------------------------------------------

MultiTaskNet::MultiTaskNet(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_registry(true, init_seed);
}

MultiTaskNet::MultiTaskNet(ModelConfig cfg, ModelParams, int) : cfg_(std::move(cfg)) {
  build_registry(false, 0);
}

MultiTaskNet::MultiTaskNet(ModelConfig cfg, ModelParams params) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_registry(false, 0);
  if (params.trainable.size() != params_.trainable.size() ||
      params.running_mean.size() != params_.running_mean.size() ||
      params.running_var.size() != params_.running_var.size())
    throw std::invalid_argument("parameter set does not match model configuration");
  for (std::size_t i = 0; i < params.trainable.size(); ++i) {
    const Matrix& want = params_.trainable[i].value;
    const Matrix& got = params.trainable[i].value;
    if (want.rows() != got.rows() || want.cols() != got.cols())
      throw std::invalid_argument("parameter '" + params_.trainable[i].name + "' has wrong shape");
    params_.trainable[i].value = got;
  }
  for (std::size_t i = 0; i < params.running_mean.size(); ++i) {
    if (params.running_mean[i].size() != params_.running_mean[i].size() ||
        params.running_var[i].size() != params_.running_var[i].size())
      throw std::invalid_argument("batch-norm statistics have wrong shape");
    params_.running_mean[i] = params.running_mean[i];
    params_.running_var[i] = params.running_var[i];
  }
}

ModelParams MultiTaskNet::zero_params(const ModelConfig& cfg) {
  cfg.validate();
  MultiTaskNet net(cfg, ModelParams{}, 0);
  return std::move(net.params_);
}

void MultiTaskNet::build_registry(bool allocate, std::uint64_t init_seed) {
  Rng rng = make_rng(init_seed, "init");
  auto& reg = params_.trainable;

  auto add = [&](std::string name, ParamGroup g, ParamKind k, Eigen::Index rows,
                 Eigen::Index cols, double fill) {
    reg.push_back({std::move(name), g, k, Matrix::Constant(rows, cols, fill)});
    return reg.size() - 1;
  };
  auto dense = [&](const std::string& name, ParamGroup g, int in, int out, double gain = 1.0,
                   double bias = 0.0) {
    DenseIdx idx{};
    idx.w = add(name + ".weight", g, ParamKind::weight, in, out, 0.0);
    idx.b = add(name + ".bias", g, ParamKind::bias, 1, out, allocate ? bias : 0.0);
    if (allocate) {
      std::normal_distribution<double> he(0.0, gain * std::sqrt(2.0 / in));
      Matrix& w = reg[idx.w].value;
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = he(rng);
    }
    return idx;
  };

  int width = cfg_.input_width();
  for (std::size_t i = 0; i < cfg_.trunk_widths.size(); ++i) {
    const int out = cfg_.trunk_widths[i];
    const std::string name = "trunk." + std::to_string(i);
    trunk_dense_.push_back(dense(name + ".fc", ParamGroup::trunk, width, out));
    BatchNormIdx bn{};
    bn.gamma = add(name + ".bn.scale", ParamGroup::trunk, ParamKind::bn_scale, 1, out, 1.0);
    bn.beta = add(name + ".bn.shift", ParamGroup::trunk, ParamKind::bn_shift, 1, out, 0.0);
    bn.stats = params_.running_mean.size();
    params_.running_mean.push_back(RowVector::Zero(out));
    params_.running_var.push_back(RowVector::Ones(out));
    trunk_bn_.push_back(bn);
    width = out;
  }
  const int n = cfg_.n_nuclides;
  act1_ = dense("activity.fc0", ParamGroup::activity, width, cfg_.head_width);
  act2_ = dense("activity.fc1", ParamGroup::activity, cfg_.head_width, n);
  eff1_ = dense("efficiency.fc0", ParamGroup::efficiency, width, cfg_.head_width);
  eff2_ = dense("efficiency.fc1", ParamGroup::efficiency, cfg_.head_width, 2 * n);
  spec1_ = dense("spectrum.fc0", ParamGroup::spectrum, width + 3 * n, cfg_.spectrum_head_width);
  // Output units start small and positive: a unit pushed below zero for every
  // sample never recovers through the final ReLU.
  spec2_ = dense("spectrum.fc1", ParamGroup::spectrum, cfg_.spectrum_head_width,
                 cfg_.spectrum_width(), kSpectrumOutputGain, kSpectrumOutputBias);
  params_.log_var_activity_index =
      add("log_var.activity", ParamGroup::loss_weighting, ParamKind::log_variance, 1, 1, 0.0);
  params_.log_var_efficiency_index =
      add("log_var.efficiency", ParamGroup::loss_weighting, ParamKind::log_variance, 1, 1, 0.0);
}

namespace {

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& grad, const Matrix& pre) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

// Multiplicative measurement noise becomes additive on a log scale; the floor
// keeps empty channels at 0 and caps the dynamic range.
Matrix input_features(const Matrix& spectra) {
  const double floor = MultiTaskNet::kInputFloor;
  const double norm = 1.0 / std::log1p(1.0 / floor);
  return spectra.unaryExpr(
      [=](double v) { return std::log1p(std::max(v, 0.0) / floor) * norm; });
}

// log(1 + e^x) without overflow
Matrix softplus(const Matrix& x) {
  return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

Matrix softplus_backward(const Matrix& grad, const Matrix& pre) {
  const Matrix sig = pre.unaryExpr([](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return grad.cwiseProduct(sig);
}

} // namespace

Predictions MultiTaskNet::run(const Matrix& input, Mode mode, std::uint64_t dropout_seed,
                              bool with_spectrum, ForwardCache& cache) const {
  if (input.cols() != cfg_.input_width())
    throw std::invalid_argument("input width " + std::to_string(input.cols()) +
                                " does not match expected " +
                                std::to_string(cfg_.input_width()));
  if (mode == Mode::train && input.rows() < 2)
    throw std::invalid_argument("train-mode forward needs at least 2 rows for batch norm");
  const auto& p = params_.trainable;
  const double batch = static_cast<double>(input.rows());

  cache.trunk_dense.resize(trunk_dense_.size());
  cache.trunk_bn.resize(trunk_bn_.size());
  Matrix h = input_features(input);
  for (std::size_t i = 0; i < trunk_dense_.size(); ++i) {
    const auto& d = trunk_dense_[i];
    const auto& bn = trunk_bn_[i];
    auto& dc = cache.trunk_dense[i];
    auto& bc = cache.trunk_bn[i];
    dc.input = std::move(h);
    dc.pre = affine(dc.input, p[d.w].value, p[d.b].value);
    Matrix a = relu(dc.pre);
    if (mode == Mode::train) {
      bc.batch_mean = a.colwise().mean();
      a.rowwise() -= bc.batch_mean;
      bc.batch_var = a.array().square().colwise().sum() / batch;
    } else {
      bc.batch_mean = params_.running_mean[bn.stats];
      bc.batch_var = params_.running_var[bn.stats];
      a.rowwise() -= bc.batch_mean;
    }
    bc.inv_std = (bc.batch_var.array() + kBatchNormEps).rsqrt();
    bc.normalized = a.array().rowwise() * bc.inv_std.array();
    h = bc.normalized.array().rowwise() * p[bn.gamma].value.row(0).array();
    h.rowwise() += p[bn.beta].value.row(0);
  }
  cache.trunk_out = std::move(h);
  const Matrix& trunk = cache.trunk_out;

  Predictions out;
  // activity head
  cache.act_hidden.input = trunk;
  cache.act_hidden.pre = affine(trunk, p[act1_.w].value, p[act1_.b].value);
  Matrix ah = relu(cache.act_hidden.pre);
  if (mode == Mode::train && cfg_.dropout_rate > 0.0) {
    Rng rng(dropout_seed);
    std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
    const double scale = 1.0 / (1.0 - cfg_.dropout_rate);
    cache.dropout_mask.resize(ah.rows(), ah.cols());
    for (Eigen::Index c = 0; c < ah.cols(); ++c)
      for (Eigen::Index r = 0; r < ah.rows(); ++r)
        cache.dropout_mask(r, c) = keep(rng) ? scale : 0.0;
    ah = ah.cwiseProduct(cache.dropout_mask);
  } else {
    cache.dropout_mask.resize(0, 0);
  }
  cache.act_out.input = std::move(ah);
  out.activity = affine(cache.act_out.input, p[act2_.w].value, p[act2_.b].value);

  // efficiency head
  cache.eff_hidden.input = trunk;
  cache.eff_hidden.pre = affine(trunk, p[eff1_.w].value, p[eff1_.b].value);
  cache.eff_out.input = relu(cache.eff_hidden.pre);
  out.efficiency = affine(cache.eff_out.input, p[eff2_.w].value, p[eff2_.b].value);

  cache.has_spectrum = with_spectrum;
  if (with_spectrum) {
    const int n = cfg_.n_nuclides;
    Matrix joined(trunk.rows(), trunk.cols() + 3 * n);
    joined << trunk, out.activity, out.efficiency;
    cache.spec_hidden.input = std::move(joined);
    cache.spec_hidden.pre =
        affine(cache.spec_hidden.input, p[spec1_.w].value, p[spec1_.b].value);
    cache.spec_out.input = relu(cache.spec_hidden.pre);
    cache.spec_out.pre = affine(cache.spec_out.input, p[spec2_.w].value, p[spec2_.b].value);
    out.spectra = softplus(cache.spec_out.pre) / cfg_.spectrum_scale();
  } else {
    out.spectra.resize(input.rows(), 0);
  }

  if (!out.activity.allFinite() || !out.efficiency.allFinite() || !out.spectra.allFinite())
    throw NumericalDivergence("numerical divergence: non-finite network output");
  return out;
}

Predictions MultiTaskNet::forward(const Matrix& input, Mode mode, std::uint64_t dropout_seed,
                                  bool with_spectrum, ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  Predictions out = run(input, mode, dropout_seed, with_spectrum, c);
  if (mode == Mode::train) {
    const double m = kBatchNormMomentum;
    for (std::size_t i = 0; i < trunk_bn_.size(); ++i) {
      const auto s = trunk_bn_[i].stats;
      params_.running_mean[s] = m * params_.running_mean[s] + (1.0 - m) * c.trunk_bn[i].batch_mean;
      params_.running_var[s] = m * params_.running_var[s] + (1.0 - m) * c.trunk_bn[i].batch_var;
    }
  }
  return out;
}

Predictions MultiTaskNet::predict(const Matrix& input, std::size_t chunk) const {
  Predictions out;
  const Eigen::Index rows = input.rows();
  out.activity.resize(rows, cfg_.n_nuclides);
  out.efficiency.resize(rows, 2 * cfg_.n_nuclides);
  out.spectra.resize(rows, cfg_.spectrum_width());
  ForwardCache cache;
  const auto step = static_cast<Eigen::Index>(std::max<std::size_t>(chunk, 1));
  for (Eigen::Index r = 0; r < rows; r += step) {
    const Eigen::Index len = std::min(step, rows - r);
    Predictions part = run(input.middleRows(r, len), Mode::eval, 0, true, cache);
    out.activity.middleRows(r, len) = part.activity;
    out.efficiency.middleRows(r, len) = part.efficiency;
    out.spectra.middleRows(r, len) = part.spectra;
  }
  return out;
}

std::vector<Matrix> MultiTaskNet::backward(const ForwardCache& cache,
                                           const OutputGradients& grads) const {
  const auto& p = params_.trainable;
  std::vector<Matrix> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = Matrix::Zero(p[i].value.rows(), p[i].value.cols());

  auto dense_back = [&](const DenseIdx& d, const Matrix& x, const Matrix& dy) {
    g[d.w].noalias() += x.transpose() * dy;
    g[d.b] += dy.colwise().sum();
    return Matrix(dy * p[d.w].value.transpose());
  };

  Matrix d_act = grads.activity;
  Matrix d_eff = grads.efficiency;
  Matrix d_trunk = Matrix::Zero(cache.trunk_out.rows(), cache.trunk_out.cols());
  const int n = cfg_.n_nuclides;

  if (cache.has_spectrum && grads.spectra.size() > 0) {
    Matrix dy = softplus_backward(grads.spectra / cfg_.spectrum_scale(), cache.spec_out.pre);
    Matrix dh = dense_back(spec2_, cache.spec_out.input, dy);
    dh = relu_backward(dh, cache.spec_hidden.pre);
    Matrix dj = dense_back(spec1_, cache.spec_hidden.input, dh);
    const auto t = d_trunk.cols();
    d_trunk += dj.leftCols(t);
    d_act += dj.middleCols(t, n);
    d_eff += dj.middleCols(t + n, 2 * n);
  }

  {
    Matrix dh = dense_back(act2_, cache.act_out.input, d_act);
    if (cache.dropout_mask.size() > 0) dh = dh.cwiseProduct(cache.dropout_mask);
    dh = relu_backward(dh, cache.act_hidden.pre);
    d_trunk += dense_back(act1_, cache.act_hidden.input, dh);
  }
  {
    Matrix dh = dense_back(eff2_, cache.eff_out.input, d_eff);
    dh = relu_backward(dh, cache.eff_hidden.pre);
    d_trunk += dense_back(eff1_, cache.eff_hidden.input, dh);
  }

  const double batch = static_cast<double>(d_trunk.rows());
  Matrix dy = std::move(d_trunk);
  for (std::size_t i = trunk_dense_.size(); i-- > 0;) {
    const auto& bn = trunk_bn_[i];
    const auto& bc = cache.trunk_bn[i];
    g[bn.gamma] += dy.cwiseProduct(bc.normalized).colwise().sum();
    g[bn.beta] += dy.colwise().sum();
    // batch-norm backward with batch statistics
    Matrix dxhat = dy.array().rowwise() * p[bn.gamma].value.row(0).array();
    const RowVector sum_dxhat = dxhat.colwise().sum();
    const RowVector sum_dxhat_xhat = dxhat.cwiseProduct(bc.normalized).colwise().sum();
    Matrix da = (batch * dxhat).rowwise() - sum_dxhat;
    da -= (bc.normalized.array().rowwise() * sum_dxhat_xhat.array()).matrix();
    da = da.array().rowwise() * (bc.inv_std.array() / batch);
    da = relu_backward(da, cache.trunk_dense[i].pre);
    const auto& d = trunk_dense_[i];
    if (i == 0) {
      g[d.w].noalias() += cache.trunk_dense[i].input.transpose() * da;
      g[d.b] += da.colwise().sum();
    } else {
      dy = dense_back(d, cache.trunk_dense[i].input, da);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Batch make_batch(std::span<const SampleRecord> records) {
  Batch b;
  if (records.empty()) return b;
  const auto n = static_cast<Eigen::Index>(records.front().proportions.size());
  const auto c = static_cast<Eigen::Index>(records.front().q2.size());
  const auto rows = static_cast<Eigen::Index>(records.size());
  b.input.resize(rows, 2 * c);
  b.activity.resize(rows, n);
  b.efficiency.resize(rows, 2 * n);
  b.spectra.resize(rows, 2 * n * c);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(rec.proportions.size()) != n ||
        static_cast<Eigen::Index>(rec.q2.size()) != c)
      throw std::invalid_argument("make_batch: inconsistent record shapes");
    for (Eigen::Index s = 0; s < c; ++s) {
      b.input(r, s) = rec.q2[static_cast<std::size_t>(s)];
      b.input(r, c + s) = rec.q3[static_cast<std::size_t>(s)];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      b.activity(r, i) = rec.proportions[ui];
      b.efficiency(r, i) = rec.eff2[ui];
      b.efficiency(r, n + i) = rec.eff3[ui];
      for (Eigen::Index s = 0; s < c; ++s) {
        b.spectra(r, i * c + s) = rec.nuclide_q2[ui][static_cast<std::size_t>(s)];
        b.spectra(r, (n + i) * c + s) = rec.nuclide_q3[ui][static_cast<std::size_t>(s)];
      }
    }
  }
  return b;
}

Batch Batch::rows(std::span<const Eigen::Index> idx) const {
  Batch b;
  const auto k = static_cast<Eigen::Index>(idx.size());
  b.input.resize(k, input.cols());
  b.activity.resize(k, activity.cols());
  b.efficiency.resize(k, efficiency.cols());
  b.spectra.resize(k, spectra.cols());
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto src = idx[static_cast<std::size_t>(r)];
    b.input.row(r) = input.row(src);
    b.activity.row(r) = activity.row(src);
    b.efficiency.row(r) = efficiency.row(src);
    b.spectra.row(r) = spectra.row(src);
  }
  return b;
}

} // namespace tdcr
