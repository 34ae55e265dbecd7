// tdcr: dataset generation, training, evaluation and prediction from the
// command line.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tdcr/beta_spectra.hpp"
#include "tdcr/config.hpp"
#include "tdcr/csv.hpp"
#include "tdcr/dataset.hpp"
#include "tdcr/detector_response.hpp"
#include "tdcr/metrics.hpp"
#include "tdcr/model_io.hpp"
#include "tdcr/trainer.hpp"

namespace fs = std::filesystem;
using namespace tdcr;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

RunConfig effective_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  cfg.sync();
  cfg.validate();
  return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& output) {
  const std::string path = output + ".config.ini";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_run_config(os, cfg);
}

std::ofstream open_output(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  return os;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path))
    throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

std::vector<std::string> nuclide_names(const RunConfig& cfg, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i)
    names.push_back(i < cfg.dataset.nuclides.size() && cfg.dataset.nuclides.size() == n
                        ? cfg.dataset.nuclides[i].name
                        : "nuclide" + std::to_string(i));
  return names;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Globals& g, const std::string& out) {
  const RunConfig cfg = effective_config(g);
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = generate_dataset(cfg.dataset);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_dataset(out, data);
  echo_config(cfg, out);

  double mean_tdcr = 0.0;
  for (const auto& r : data.records) mean_tdcr += r.tdcr;
  if (!data.records.empty()) mean_tdcr /= static_cast<double>(data.records.size());
  if (!g.quiet) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "records    " << data.records.size() << '\n'
              << "train/val/test " << data.n_train << '/' << data.n_val << '/' << data.n_test()
              << '\n'
              << "mean tdcr  " << mean_tdcr << '\n'
              << "checksum   " << std::hex << std::setw(16) << std::setfill('0')
              << dataset_checksum(read_dataset(out)) << std::dec << std::setfill(' ') << '\n'
              << "wrote " << out << " in " << std::setprecision(3) << secs << " s\n";
  }
  return 0;
}

int cmd_train(const Globals& g, const std::string& dataset_path, const std::string& model_out,
              std::string history_out) {
  require_file(dataset_path, "dataset");
  RunConfig cfg = effective_config(g);
  const Dataset data = read_dataset(dataset_path);
  if (data.n_train < 2) throw UsageError("dataset has fewer than 2 training samples");
  if (data.n_val == 0) throw UsageError("dataset has an empty validation split");
  cfg.model.n_nuclides = data.n_nuclides;
  cfg.model.n_channels = data.n_channels;
  cfg.model.validate();

  MultiTaskNet net(cfg.model, derive_seed(cfg.seed, "init", 0));
  Trainer trainer(net, cfg.train);
  const auto t0 = std::chrono::steady_clock::now();
  const auto history = trainer.fit(make_batch(data.train()), make_batch(data.val()),
                                   [&](const EpochRecord& e) {
                                     if (g.quiet) return;
                                     const double secs = std::chrono::duration<double>(
                                                             std::chrono::steady_clock::now() - t0)
                                                             .count();
                                     std::cout << "stage " << e.stage << " epoch " << std::setw(3)
                                               << e.epoch << "  train " << e.train.total
                                               << " (act " << e.train.activity_mse << ", eff "
                                               << e.train.efficiency_mse << ", spec "
                                               << e.train.spectrum_huber << ")  val "
                                               << e.val.total << " (act " << e.val.activity_mse
                                               << ", eff " << e.val.efficiency_mse << ", spec "
                                               << e.val.spectrum_huber << ")  " << std::fixed
                                               << std::setprecision(1) << secs << " s"
                                               << std::defaultfloat << std::setprecision(6)
                                               << std::endl;
                                   });
  if (const auto parent = fs::path(model_out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_model(model_out, net);
  if (history_out.empty()) history_out = model_out + ".history.csv";
  auto hist = open_output(history_out);
  history.write_csv(hist);
  echo_config(cfg, model_out);
  if (!g.quiet)
    std::cout << "best epochs: stage 1 " << history.best_epoch_stage1 << ", stage 2 "
              << history.best_epoch_stage2 << "\nwrote " << model_out << " and " << history_out
              << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& model_path, const std::string& dataset_path,
                 const std::string& split, const std::string& report_out, bool ground_truth) {
  require_file(dataset_path, "dataset");
  const RunConfig cfg = effective_config(g);
  const Dataset data = read_dataset(dataset_path);
  const auto records = data.split(split);
  if (records.empty()) throw UsageError("split '" + split + "' is empty");

  EvalReport report;
  if (ground_truth) {
    report = evaluate_predictions(ground_truth_predictions(records), records, cfg.metrics);
  } else {
    if (model_path.empty()) throw UsageError("--model is required unless --ground-truth is set");
    require_file(model_path, "model");
    const auto model = load_model(model_path).network();
    if (model.config().n_channels != data.n_channels ||
        model.config().n_nuclides != data.n_nuclides)
      throw UsageError("model and dataset shapes differ");
    report = evaluate(model, records, cfg.metrics);
  }
  const auto names = nuclide_names(cfg, data.n_nuclides);
  if (!g.quiet) write_report_summary(std::cout, report, names);
  if (!report_out.empty()) {
    auto os = open_output(report_out);
    write_report_csv(os, report, names);
    auto summary = open_output(report_out + ".summary.txt");
    write_report_summary(summary, report, names);
    echo_config(cfg, report_out);
    if (!g.quiet) std::cout << "wrote " << report_out << '\n';
  }
  return 0;
}

/// Reads the q2 and q3 columns of a CSV; '#' lines are skipped.
std::pair<std::vector<double>, std::vector<double>> read_spectrum_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open spectrum file '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = csv::parse_row(line);
    break;
  }
  const auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw UsageError("spectrum file '" + path + "' has no '" + name + "' column");
  };
  const std::size_t c2 = col("q2"), c3 = col("q3");
  std::vector<double> q2, q3;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = csv::parse_row(line);
    if (fields.size() <= std::max(c2, c3))
      throw UsageError(path + ": row " + std::to_string(line_no) + " is too short");
    try {
      q2.push_back(std::stod(fields[c2]));
      q3.push_back(std::stod(fields[c3]));
    } catch (const std::logic_error&) {
      throw UsageError(path + ": row " + std::to_string(line_no) + " is not numeric");
    }
  }
  return {q2, q3};
}

int cmd_predict(const Globals& g, const std::string& model_path, const std::string& input,
                const std::string& out) {
  require_file(model_path, "model");
  const RunConfig cfg = effective_config(g);
  const auto net = load_model(model_path).network();
  const auto [q2, q3] = read_spectrum_csv(input);
  const int n_ch = net.config().n_channels;
  if (q2.size() != static_cast<std::size_t>(n_ch))
    throw UsageError("shape error: spectrum has " + std::to_string(q2.size()) +
                     " channels, model expects " + std::to_string(n_ch));

  const auto t0 = std::chrono::steady_clock::now();
  Matrix x(1, 2 * n_ch);
  for (int s = 0; s < n_ch; ++s) {
    x(0, s) = q2[static_cast<std::size_t>(s)];
    x(0, n_ch + s) = q3[static_cast<std::size_t>(s)];
  }
  const bool all_zero = x.isZero(0.0);
  const Predictions p = postprocess(net.predict(x));
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const int n = net.config().n_nuclides;
  const auto names = nuclide_names(cfg, static_cast<std::size_t>(n));
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += p.activity(0, i) * p.efficiency(0, n + i);
    den += p.activity(0, i) * p.efficiency(0, i);
  }
  if (all_zero)
    std::cerr << "warning: input spectra are all zero; predictions are not meaningful\n";
  if (!g.quiet) {
    std::cout << std::setprecision(6);
    for (int i = 0; i < n; ++i)
      std::cout << names[static_cast<std::size_t>(i)] << "  proportion " << p.activity(0, i)
                << "  eff2 " << p.efficiency(0, i) << "  eff3 " << p.efficiency(0, n + i) << '\n';
    std::cout << "tdcr " << (den > 0.0 ? num / den : 0.0) << "\nlatency " << std::setprecision(3)
              << ms << " ms\n";
  }
  if (!out.empty()) {
    auto os = open_output(out);
    std::vector<std::string> header{"channel"};
    for (const char* kind : {"q2_", "q3_"})
      for (const auto& name : names) header.push_back(kind + name);
    csv::write_row(os, header);
    for (int s = 0; s < n_ch; ++s) {
      std::vector<std::string> row{std::to_string(s)};
      for (int k = 0; k < 2 * n; ++k) row.push_back(csv::format(p.spectra(0, k * n_ch + s)));
      csv::write_row(os, row);
    }
    if (!g.quiet) std::cout << "wrote " << out << '\n';
  }
  return 0;
}

int cmd_export_plots(const Globals& g, const std::string& report_path,
                     const std::string& dataset_path, const std::string& model_path,
                     const std::string& split, std::size_t sample, bool normalize,
                     const std::string& out_dir) {
  const RunConfig cfg = effective_config(g);
  fs::create_directories(out_dir);
  if (!report_path.empty()) {
    require_file(report_path, "report");
    std::ifstream is(report_path);
    std::string header_line;
    std::getline(is, header_line);
    std::vector<std::string> names;
    for (const auto& h : csv::parse_row(header_line))
      if (h.rfind("true_p_", 0) == 0) names.push_back(h.substr(7));
    is.seekg(0);
    const auto samples = read_report_csv(is);
    auto os = open_output((fs::path(out_dir) / "scatter.csv").string());
    csv::write_row(os, {"sample_id", "true", "predicted", "nuclide", "quantity"});
    const std::size_t n = names.size();
    for (const auto& s : samples) {
      auto emit = [&](double t, double p, std::size_t i, const char* quantity) {
        csv::write_row(os, {std::to_string(s.sample_id), csv::format(t), csv::format(p),
                            names[i], quantity});
      };
      for (std::size_t i = 0; i < n; ++i) emit(s.true_activity[i], s.pred_activity[i], i, "activity");
      for (std::size_t i = 0; i < n; ++i)
        emit(s.true_efficiency[i], s.pred_efficiency[i], i, "eff2");
      for (std::size_t i = 0; i < n; ++i)
        emit(s.true_efficiency[n + i], s.pred_efficiency[n + i], i, "eff3");
    }
    if (!g.quiet) std::cout << "wrote " << (fs::path(out_dir) / "scatter.csv").string() << '\n';
  }
  if (!dataset_path.empty()) {
    if (model_path.empty()) throw UsageError("--model is required for the spectral overlay");
    require_file(dataset_path, "dataset");
    require_file(model_path, "model");
    const Dataset data = read_dataset(dataset_path);
    const auto records = data.split(split);
    if (sample >= records.size())
      throw UsageError("sample " + std::to_string(sample) + " is outside the " + split +
                       " split (" + std::to_string(records.size()) + " records)");
    const auto net = load_model(model_path).network();
    const auto rec = records.subspan(sample, 1);
    const Batch truth = make_batch(rec);
    Matrix pred = postprocess(net.predict(truth.input)).spectra;
    Matrix target = truth.spectra;
    const int n_ch = data.n_channels;
    const int blocks = 2 * data.n_nuclides;
    if (normalize) {
      for (Matrix* m : {&pred, &target})
        for (int k = 0; k < blocks; ++k) {
          auto block = m->block(0, k * n_ch, 1, n_ch);
          const double peak = block.maxCoeff();
          if (peak > 0.0) block /= peak;
        }
    }
    const auto names = nuclide_names(cfg, static_cast<std::size_t>(data.n_nuclides));
    const std::string path =
        (fs::path(out_dir) / ("overlay_" + split + "_" + std::to_string(sample) + ".csv")).string();
    auto os = open_output(path);
    std::vector<std::string> header{"channel"};
    for (const char* kind : {"q2_", "q3_"})
      for (const auto& name : names) {
        header.push_back(std::string("true_") + kind + name);
        header.push_back(std::string("pred_") + kind + name);
      }
    csv::write_row(os, header);
    for (int s = 0; s < n_ch; ++s) {
      std::vector<std::string> row{std::to_string(s)};
      for (int k = 0; k < blocks; ++k) {
        row.push_back(csv::format(target(0, k * n_ch + s)));
        row.push_back(csv::format(pred(0, k * n_ch + s)));
      }
      csv::write_row(os, row);
    }
    if (!g.quiet) std::cout << "wrote " << path << '\n';
  }
  if (report_path.empty() && dataset_path.empty())
    throw UsageError("nothing to export: pass --report and/or --dataset with --model");
  return 0;
}

int cmd_export_record(const Globals& g, const std::string& dataset_path, const std::string& split,
                      std::size_t index, const std::string& out) {
  require_file(dataset_path, "dataset");
  const RunConfig cfg = effective_config(g);
  const Dataset data = read_dataset(dataset_path);
  const auto records = data.split(split);
  if (index >= records.size())
    throw UsageError("record " + std::to_string(index) + " is outside the " + split + " split");
  auto os = open_output(out);
  write_record_csv(os, records[index], nuclide_names(cfg, data.n_nuclides));
  if (!g.quiet) std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_spectrum(const Globals& g, const std::string& nuclide, double quench,
                 const std::string& out) {
  const RunConfig cfg = effective_config(g);
  const NuclideSpec* spec = nullptr;
  for (const auto& n : cfg.dataset.nuclides)
    if (n.name == nuclide) spec = &n;
  if (!spec) throw UsageError("nuclide '" + nuclide + "' is not in the configuration");
  const auto beta = build_spectrum(*spec, 1.0);
  const auto c = coincidence_spectra(beta, quench, cfg.dataset.detector);
  auto os = open_output(out);
  write_coincidence_csv(os, c);
  if (!g.quiet)
    std::cout << nuclide << " at quench " << quench << ": eff2 " << c.eff2 << ", eff3 " << c.eff3
              << ", tdcr " << c.tdcr << ", mean energy " << beta.mean_energy() << " keV\nwrote "
              << out << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"TDCR liquid scintillation spectra: simulation and multi-task network"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  app.add_flag("--quiet", g.quiet, "Suppress progress and summaries");

  std::string out, dataset, model, report, history, input, split = "test", nuclide;
  std::size_t sample = 0;
  double quench = 1.0;
  bool ground_truth = false, normalize = false;

  auto* gen = app.add_subcommand("generate", "Simulate a labeled dataset");
  gen->add_option("-o,--output", out, "Dataset file to write")->required();

  auto* train = app.add_subcommand("train", "Two-stage training with early stopping");
  train->add_option("--dataset", dataset, "Dataset file")->required();
  train->add_option("-o,--output", out, "Model file to write")->required();
  train->add_option("--history", history, "History CSV (default <output>.history.csv)");

  auto* eval = app.add_subcommand("evaluate", "Score a model on a dataset split");
  eval->add_option("--model", model, "Model file");
  eval->add_option("--dataset", dataset, "Dataset file")->required();
  eval->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("-o,--output", report, "Per-sample report CSV");
  eval->add_flag("--ground-truth", ground_truth, "Score the generative labels against themselves");

  auto* pred = app.add_subcommand("predict", "Predict from one pair of Q2/Q3 spectra");
  pred->add_option("--model", model, "Model file")->required();
  pred->add_option("--input", input, "CSV with q2 and q3 columns")->required();
  pred->add_option("-o,--output", out, "Reconstructed spectra CSV");

  auto* plots = app.add_subcommand("export-plots", "Write CSV data for scatter and overlay plots");
  plots->add_option("--report", report, "Report CSV from evaluate");
  plots->add_option("--dataset", dataset, "Dataset file for the spectral overlay");
  plots->add_option("--model", model, "Model file for the spectral overlay");
  plots->add_option("--split", split, "Split holding the overlay sample")
      ->check(CLI::IsMember({"train", "val", "test"}));
  plots->add_option("--sample", sample, "Index within the split");
  plots->add_flag("--normalize", normalize, "Scale each spectrum to unit maximum");
  plots->add_option("--out-dir", out, "Output directory")->required();

  auto* rec = app.add_subcommand("export-record", "Write one dataset record as CSV");
  rec->add_option("--dataset", dataset, "Dataset file")->required();
  rec->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  rec->add_option("--index", sample, "Index within the split");
  rec->add_option("-o,--output", out, "CSV to write")->required();

  auto* spec = app.add_subcommand("spectrum", "Coincidence spectra of one configured nuclide");
  spec->add_option("--nuclide", nuclide, "Nuclide name")->required();
  spec->add_option("--quench", quench, "Quench factor in (0, 1]");
  spec->add_option("-o,--output", out, "CSV to write")->required();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_generate(g, out);
    if (*train) return cmd_train(g, dataset, out, history);
    if (*eval) return cmd_evaluate(g, model, dataset, split, report, ground_truth);
    if (*pred) return cmd_predict(g, model, input, out);
    if (*plots) return cmd_export_plots(g, report, dataset, model, split, sample, normalize, out);
    if (*rec) return cmd_export_record(g, dataset, split, sample, out);
    if (*spec) return cmd_spectrum(g, nuclide, quench, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
