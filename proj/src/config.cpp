#include "tdcr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>

#include "tdcr/csv.hpp"

namespace tdcr {

void RunConfig::sync() {
  dataset.seed = seed;
  train.seed = seed;
  model.n_nuclides = static_cast<int>(dataset.nuclides.size());
  model.n_channels = dataset.detector.n_channels;
}

void RunConfig::validate() const {
  dataset.validate();
  model.validate();
  train.validate();
  if (metrics.window < 1 || metrics.window % 2 == 0)
    throw ConfigError("metrics: ssim_window must be a positive odd number");
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Location {
  const std::string& source;
  int line;
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  }
};

template <class T> T parse_number(const std::string& text, const Location& at) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    at.fail("cannot parse '" + text + "' as a number");
  return v;
}

std::vector<int> parse_int_list(const std::string& text, const Location& at) {
  std::vector<int> out;
  for (const auto& f : csv::parse_row(text)) out.push_back(parse_number<int>(trim(f), at));
  return out;
}

using Setter = std::function<void(const std::string&, const Location&)>;

template <class T> Setter num(T& target) {
  return [&target](const std::string& v, const Location& at) { target = parse_number<T>(v, at); };
}

} // namespace

RunConfig parse_run_config(std::istream& is, const std::string& source) {
  RunConfig cfg;
  std::vector<NuclideSpec> nuclides;
  NuclideSpec* nuc = nullptr;

  std::map<std::string, std::map<std::string, Setter>> table;
  table[""] = {{"seed", num(cfg.seed)}};
  table["dataset"] = {
      {"n_samples", num(cfg.dataset.n_samples)},
      {"split_train", num(cfg.dataset.split_fractions[0])},
      {"split_val", num(cfg.dataset.split_fractions[1])},
      {"split_test", num(cfg.dataset.split_fractions[2])},
      {"noise_level", num(cfg.dataset.noise_level)},
      {"quench_min", num(cfg.dataset.quench_min)},
  };
  table["detector"] = {
      {"light_yield_alpha", num(cfg.dataset.detector.light_yield_alpha)},
      {"pmt_quantum_efficiency", num(cfg.dataset.detector.pmt_quantum_efficiency)},
      {"pmt_share", num(cfg.dataset.detector.pmt_share)},
      {"n_channels", num(cfg.dataset.detector.n_channels)},
  };
  table["nuclide"] = {
      {"name", [&](const std::string& v, const Location&) { nuc->name = v; }},
      {"z_daughter", [&](const std::string& v, const Location& at) { nuc->z_daughter = parse_number<int>(v, at); }},
      {"q_value_kev", [&](const std::string& v, const Location& at) { nuc->q_value_keV = parse_number<double>(v, at); }},
  };
  table["model"] = {
      {"trunk_widths", [&](const std::string& v, const Location& at) { cfg.model.trunk_widths = parse_int_list(v, at); }},
      {"head_width", num(cfg.model.head_width)},
      {"spectrum_head_width", num(cfg.model.spectrum_head_width)},
      {"dropout_rate", num(cfg.model.dropout_rate)},
  };
  table["train"] = {
      {"stage1_lr", num(cfg.train.stage1_lr)},
      {"stage2_lr", num(cfg.train.stage2_lr)},
      {"batch_size", num(cfg.train.batch_size)},
      {"max_epochs", num(cfg.train.max_epochs)},
      {"patience", num(cfg.train.patience)},
      {"min_improvement", num(cfg.train.min_improvement)},
      {"huber_delta", num(cfg.train.huber_delta)},
      {"spectrum_loss_weight", num(cfg.train.spectrum_loss_weight)},
      {"adam_beta1", num(cfg.train.adam.beta1)},
      {"adam_beta2", num(cfg.train.adam.beta2)},
      {"adam_eps", num(cfg.train.adam.eps)},
  };
  table["metrics"] = {
      {"ssim_window", num(cfg.metrics.window)},
      {"ssim_k1", num(cfg.metrics.k1)},
      {"ssim_k2", num(cfg.metrics.k2)},
  };

  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const Location at{source, line_no};
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') at.fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty() || !table.contains(section)) at.fail("unknown section [" + section + "]");
      if (section == "nuclide") nuc = &nuclides.emplace_back(NuclideSpec{"", 1, 0.0});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = table[section];
    const auto it = keys.find(key);
    if (it == keys.end())
      at.fail("unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    it->second(value, at);
  }
  if (!nuclides.empty()) cfg.dataset.nuclides = std::move(nuclides);
  cfg.sync();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(is, path);
}

void write_run_config(std::ostream& os, const RunConfig& c) {
  auto f = [](double v) { return csv::format(v); };
  os << "seed = " << c.seed << "\n\n[dataset]\n"
     << "n_samples = " << c.dataset.n_samples << '\n'
     << "split_train = " << f(c.dataset.split_fractions[0]) << '\n'
     << "split_val = " << f(c.dataset.split_fractions[1]) << '\n'
     << "split_test = " << f(c.dataset.split_fractions[2]) << '\n'
     << "noise_level = " << f(c.dataset.noise_level) << '\n'
     << "quench_min = " << f(c.dataset.quench_min) << "\n\n[detector]\n"
     << "light_yield_alpha = " << f(c.dataset.detector.light_yield_alpha) << '\n'
     << "pmt_quantum_efficiency = " << f(c.dataset.detector.pmt_quantum_efficiency) << '\n'
     << "pmt_share = " << f(c.dataset.detector.pmt_share) << '\n'
     << "n_channels = " << c.dataset.detector.n_channels << '\n';
  for (const auto& n : c.dataset.nuclides)
    os << "\n[nuclide]\nname = " << n.name << "\nz_daughter = " << n.z_daughter
       << "\nq_value_kev = " << f(n.q_value_keV) << '\n';
  os << "\n[model]\ntrunk_widths = ";
  for (std::size_t i = 0; i < c.model.trunk_widths.size(); ++i)
    os << (i ? "," : "") << c.model.trunk_widths[i];
  os << "\nhead_width = " << c.model.head_width
     << "\nspectrum_head_width = " << c.model.spectrum_head_width
     << "\ndropout_rate = " << f(c.model.dropout_rate) << "\n\n[train]\n"
     << "stage1_lr = " << f(c.train.stage1_lr) << '\n'
     << "stage2_lr = " << f(c.train.stage2_lr) << '\n'
     << "batch_size = " << c.train.batch_size << '\n'
     << "max_epochs = " << c.train.max_epochs << '\n'
     << "patience = " << c.train.patience << '\n'
     << "min_improvement = " << f(c.train.min_improvement) << '\n'
     << "huber_delta = " << f(c.train.huber_delta) << '\n'
     << "spectrum_loss_weight = " << f(c.train.spectrum_loss_weight) << '\n'
     << "adam_beta1 = " << f(c.train.adam.beta1) << '\n'
     << "adam_beta2 = " << f(c.train.adam.beta2) << '\n'
     << "adam_eps = " << f(c.train.adam.eps) << "\n\n[metrics]\n"
     << "ssim_window = " << c.metrics.window << '\n'
     << "ssim_k1 = " << f(c.metrics.k1) << '\n'
     << "ssim_k2 = " << f(c.metrics.k2) << '\n';
}

} // namespace tdcr
