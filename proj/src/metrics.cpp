#include "tdcr/metrics.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "tdcr/csv.hpp"

namespace tdcr {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("metric: length mismatch");
  if (a.empty()) throw std::invalid_argument("metric: empty input");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

double mse(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double mae(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double r_squared(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth);
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw std::domain_error("r_squared: truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double ssim_1d(std::span<const double> x, std::span<const double> y, const SsimOptions& opts) {
  if (x.size() != y.size()) throw std::invalid_argument("ssim_1d: length mismatch");
  if (opts.window < 1 || opts.window % 2 == 0)
    throw std::invalid_argument("ssim_1d: window must be a positive odd number");
  const auto w = static_cast<std::size_t>(opts.window);
  if (x.size() < w) throw std::invalid_argument("ssim_1d: window larger than signal");

  double range = opts.data_range;
  if (range <= 0.0) {
    range = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) range = std::max({range, x[i], y[i]});
    if (range <= 0.0) range = 1.0; // both signals vanish
  }
  const double c1 = (opts.k1 * range) * (opts.k1 * range);
  const double c2 = (opts.k2 * range) * (opts.k2 * range);
  const double inv_w = 1.0 / static_cast<double>(w);

  double total = 0.0;
  const std::size_t n_windows = x.size() - w + 1;
  for (std::size_t s = 0; s < n_windows; ++s) {
    double mx = 0.0, my = 0.0;
    for (std::size_t k = s; k < s + w; ++k) {
      mx += x[k];
      my += y[k];
    }
    mx *= inv_w;
    my *= inv_w;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t k = s; k < s + w; ++k) {
      const double dx = x[k] - mx, dy = y[k] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    vx *= inv_w;
    vy *= inv_w;
    cxy *= inv_w;
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(n_windows);
}

double SampleEval::activity_abs_error() const { return mae(pred_activity, true_activity); }
double SampleEval::efficiency_abs_error() const { return mae(pred_efficiency, true_efficiency); }

EvalReport aggregate(std::vector<SampleEval> samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalReport rep;
  const std::size_t na = samples.front().true_activity.size();
  const std::size_t ne = samples.front().true_efficiency.size();
  std::vector<std::vector<double>> ta(na), pa(na), te(ne), pe(ne);
  std::vector<double> ssim_means, dist_means;
  double a_se = 0.0, a_ae = 0.0, e_se = 0.0, e_ae = 0.0;
  for (const auto& s : samples) {
    if (s.true_activity.size() != na || s.true_efficiency.size() != ne)
      throw std::invalid_argument("evaluate: inconsistent sample rows");
    a_se += mse(s.pred_activity, s.true_activity);
    a_ae += mae(s.pred_activity, s.true_activity);
    e_se += mse(s.pred_efficiency, s.true_efficiency);
    e_ae += mae(s.pred_efficiency, s.true_efficiency);
    for (std::size_t i = 0; i < na; ++i) {
      ta[i].push_back(s.true_activity[i]);
      pa[i].push_back(s.pred_activity[i]);
    }
    for (std::size_t i = 0; i < ne; ++i) {
      te[i].push_back(s.true_efficiency[i]);
      pe[i].push_back(s.pred_efficiency[i]);
    }
    ssim_means.push_back(mean_of(s.ssim));
    dist_means.push_back(mean_of(s.distance));
  }
  const auto n = static_cast<double>(samples.size());
  rep.activity_mse = a_se / n;
  rep.activity_mae = a_ae / n;
  rep.efficiency_mse = e_se / n;
  rep.efficiency_mae = e_ae / n;
  auto r2_or_nan = [](const std::vector<double>& p, const std::vector<double>& t) {
    try {
      return r_squared(p, t);
    } catch (const std::domain_error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  for (std::size_t i = 0; i < na; ++i) rep.activity_r2.push_back(r2_or_nan(pa[i], ta[i]));
  for (std::size_t i = 0; i < ne; ++i) rep.efficiency_r2.push_back(r2_or_nan(pe[i], te[i]));
  rep.mean_ssim = mean_of(ssim_means);
  rep.mean_distance = mean_of(dist_means);
  rep.samples = std::move(samples);
  return rep;
}

EvalReport evaluate_predictions(const Predictions& pred, std::span<const SampleRecord> records,
                                const SsimOptions& ssim) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto rows = static_cast<Eigen::Index>(records.size());
  if (pred.activity.rows() != rows || pred.efficiency.rows() != rows || pred.spectra.rows() != rows)
    throw std::invalid_argument("evaluate: prediction rows do not match records");
  const Batch truth = make_batch(records);
  if (pred.spectra.cols() != truth.spectra.cols() || pred.activity.cols() != truth.activity.cols())
    throw std::invalid_argument("evaluate: prediction shape does not match records");
  const auto n_ch = static_cast<Eigen::Index>(records.front().q2.size());
  const Eigen::Index n_spectra = truth.spectra.cols() / n_ch;

  std::vector<SampleEval> samples(records.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    SampleEval& s = samples[static_cast<std::size_t>(r)];
    s.sample_id = static_cast<std::size_t>(r);
    s.quench = rec.quench;
    for (std::size_t i = 0; i < rec.proportions.size(); ++i)
      s.eff3_mixture += rec.proportions[i] * rec.eff3[i];
    auto row = [](const Matrix& m, Eigen::Index r) {
      std::vector<double> v(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
      return v;
    };
    s.true_activity = row(truth.activity, r);
    s.pred_activity = row(pred.activity, r);
    s.true_efficiency = row(truth.efficiency, r);
    s.pred_efficiency = row(pred.efficiency, r);
    const RowVector t = truth.spectra.row(r);
    const RowVector p = pred.spectra.row(r);
    for (Eigen::Index k = 0; k < n_spectra; ++k) {
      const std::span<const double> ts(t.data() + k * n_ch, static_cast<std::size_t>(n_ch));
      const std::span<const double> ps(p.data() + k * n_ch, static_cast<std::size_t>(n_ch));
      s.ssim.push_back(ssim_1d(ps, ts, ssim));
      s.distance.push_back(euclidean(ps, ts));
    }
  }
  return aggregate(std::move(samples));
}

EvalReport evaluate(const MultiTaskNet& net, std::span<const SampleRecord> records,
                    const SsimOptions& ssim) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty split");
  const Batch batch = make_batch(records);
  return evaluate_predictions(postprocess(net.predict(batch.input)), records, ssim);
}

Predictions ground_truth_predictions(std::span<const SampleRecord> records) {
  Batch b = make_batch(records);
  return {std::move(b.activity), std::move(b.efficiency), std::move(b.spectra)};
}

// ---------------------------------------------------------------------------

namespace {

std::string label(std::span<const std::string> names, std::size_t i) {
  return i < names.size() ? names[i] : "nuclide" + std::to_string(i);
}

// Column names for one spectrum-indexed block: <prefix>_q2_<nuc>..., <prefix>_q3_<nuc>...
std::vector<std::string> spectrum_columns(const std::string& prefix, std::size_t n,
                                          std::span<const std::string> names) {
  std::vector<std::string> cols;
  for (const char* mode : {"q2", "q3"})
    for (std::size_t i = 0; i < n; ++i) cols.push_back(prefix + "_" + mode + "_" + label(names, i));
  return cols;
}

} // namespace

void write_report_summary(std::ostream& os, const EvalReport& rep,
                          std::span<const std::string> names) {
  const auto old = os.precision(6);
  os << "samples            " << rep.samples.size() << '\n'
     << "activity MSE       " << rep.activity_mse << '\n'
     << "activity MAE       " << rep.activity_mae << '\n'
     << "efficiency MSE     " << rep.efficiency_mse << '\n'
     << "efficiency MAE     " << rep.efficiency_mae << '\n'
     << "mean spectral SSIM " << rep.mean_ssim << '\n'
     << "mean spectral L2   " << rep.mean_distance << '\n';
  for (std::size_t i = 0; i < rep.activity_r2.size(); ++i)
    os << "R2 activity " << label(names, i) << "  " << rep.activity_r2[i] << '\n';
  const std::size_t n = rep.activity_r2.size();
  for (std::size_t i = 0; i < rep.efficiency_r2.size(); ++i)
    os << "R2 " << (i < n ? "eff2 " : "eff3 ") << label(names, i % std::max<std::size_t>(n, 1))
       << "  " << rep.efficiency_r2[i] << '\n';
  os.precision(old);
}

void write_report_csv(std::ostream& os, const EvalReport& rep,
                      std::span<const std::string> names) {
  if (rep.samples.empty()) return;
  const std::size_t n = rep.samples.front().true_activity.size();
  std::vector<std::string> header{"sample_id", "quench", "eff3_mixture"};
  for (std::size_t i = 0; i < n; ++i) header.push_back("true_p_" + label(names, i));
  for (std::size_t i = 0; i < n; ++i) header.push_back("pred_p_" + label(names, i));
  for (const auto& c : spectrum_columns("true_eff", n, names)) header.push_back(c);
  for (const auto& c : spectrum_columns("pred_eff", n, names)) header.push_back(c);
  for (const auto& c : spectrum_columns("ssim", n, names)) header.push_back(c);
  for (const auto& c : spectrum_columns("euclid", n, names)) header.push_back(c);
  csv::write_row(os, header);
  for (const auto& s : rep.samples) {
    std::vector<std::string> row{std::to_string(s.sample_id), csv::format(s.quench),
                                 csv::format(s.eff3_mixture)};
    for (const auto* v : {&s.true_activity, &s.pred_activity, &s.true_efficiency,
                          &s.pred_efficiency, &s.ssim, &s.distance})
      for (double x : *v) row.push_back(csv::format(x));
    csv::write_row(os, row);
  }
}

std::vector<SampleEval> read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("report csv: missing header");
  const auto header = csv::parse_row(line);
  std::size_t n = 0;
  for (const auto& h : header)
    if (h.rfind("true_p_", 0) == 0) ++n;
  const std::size_t expected = 3 + 2 * n + 4 * 2 * n;
  if (n == 0 || header.size() != expected)
    throw std::runtime_error("report csv: unexpected header layout");

  std::vector<SampleEval> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::parse_row(line);
    if (f.size() != expected)
      throw std::runtime_error("report csv: wrong field count on line " + std::to_string(line_no));
    auto num = [&](std::size_t i) {
      double v = 0.0;
      const auto* b = f[i].data();
      const auto res = std::from_chars(b, b + f[i].size(), v);
      if (res.ec != std::errc{} || res.ptr != b + f[i].size())
        throw std::runtime_error("report csv: bad number '" + f[i] + "' on line " +
                                 std::to_string(line_no));
      return v;
    };
    SampleEval s;
    s.sample_id = static_cast<std::size_t>(num(0));
    s.quench = num(1);
    s.eff3_mixture = num(2);
    std::size_t col = 3;
    auto take = [&](std::vector<double>& v, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) v.push_back(num(col++));
    };
    take(s.true_activity, n);
    take(s.pred_activity, n);
    take(s.true_efficiency, 2 * n);
    take(s.pred_efficiency, 2 * n);
    take(s.ssim, 2 * n);
    take(s.distance, 2 * n);
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace tdcr
