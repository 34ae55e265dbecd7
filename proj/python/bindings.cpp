#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tdcr/beta_spectra.hpp"
#include "tdcr/config.hpp"
#include "tdcr/dataset.hpp"
#include "tdcr/detector_response.hpp"
#include "tdcr/metrics.hpp"
#include "tdcr/model_io.hpp"
#include "tdcr/rng.hpp"
#include "tdcr/trainer.hpp"

namespace py = pybind11;
using namespace tdcr;

namespace {

using Vector = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vector to_array(const std::vector<double>& v) { return Vector(static_cast<py::ssize_t>(v.size()), v.data()); }

std::vector<double> to_vector(const Vector& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

Matrix to_matrix(const Vector& a, const char* what) {
  if (a.ndim() == 1) {
    Matrix m(1, a.shape(0));
    for (py::ssize_t j = 0; j < a.shape(0); ++j) m(0, j) = a.data()[j];
    return m;
  }
  if (a.ndim() != 2) throw py::value_error(std::string(what) + " must be 1-D or 2-D");
  Matrix m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = a.data()[i * a.shape(1) + j];
  return m;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["activity_mse"] = r.activity_mse;
  d["activity_mae"] = r.activity_mae;
  d["efficiency_mse"] = r.efficiency_mse;
  d["efficiency_mae"] = r.efficiency_mae;
  d["activity_r2"] = r.activity_r2;
  d["efficiency_r2"] = r.efficiency_r2;
  d["mean_ssim"] = r.mean_ssim;
  d["mean_distance"] = r.mean_distance;
  d["n_samples"] = r.samples.size();
  return d;
}

py::dict predictions_dict(const Predictions& p) {
  py::dict d;
  d["activity"] = p.activity;
  d["efficiency"] = p.efficiency;
  d["spectra"] = p.spectra;
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Beta-spectrum TDCR simulation and multi-task network";

  py::register_exception<NumericalDivergence>(m, "NumericalDivergence", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<NuclideSpec>(m, "Nuclide")
      .def(py::init([](std::string name, int z, double q) {
             NuclideSpec n{std::move(name), z, q};
             n.validate();
             return n;
           }),
           py::arg("name"), py::arg("z_daughter"), py::arg("q_value_keV"))
      .def_readonly("name", &NuclideSpec::name)
      .def_readonly("z_daughter", &NuclideSpec::z_daughter)
      .def_readonly("q_value_keV", &NuclideSpec::q_value_keV)
      .def("__repr__", [](const NuclideSpec& n) {
        return "Nuclide(" + n.name + ", Z=" + std::to_string(n.z_daughter) +
               ", Q=" + std::to_string(n.q_value_keV) + " keV)";
      });
  m.def("tritium", &tritium);
  m.def("carbon14", &carbon14);

  m.def("fermi_function", &fermi_function, py::arg("z_daughter"), py::arg("energy_keV"));
  m.def(
      "beta_spectrum",
      [](const NuclideSpec& n, double bin_width) { return to_array(build_spectrum(n, bin_width).density); },
      py::arg("nuclide"), py::arg("bin_width_keV") = 1.0,
      "Normalized emission density per bin; bin k is centred at (k + 0.5) * bin_width_keV.");

  py::class_<DetectorConfig>(m, "DetectorConfig")
      .def(py::init<>())
      .def_readwrite("light_yield_alpha", &DetectorConfig::light_yield_alpha)
      .def_readwrite("pmt_quantum_efficiency", &DetectorConfig::pmt_quantum_efficiency)
      .def_readwrite("pmt_share", &DetectorConfig::pmt_share)
      .def_readwrite("n_channels", &DetectorConfig::n_channels);

  m.def("double_coincidence_pmf", &double_coincidence_pmf, py::arg("n"), py::arg("lam"));
  m.def("triple_coincidence_pmf", &triple_coincidence_pmf, py::arg("n"), py::arg("lam"));
  m.def("double_coincidence_total", &double_coincidence_total, py::arg("lam"));
  m.def("triple_coincidence_total", &triple_coincidence_total, py::arg("lam"));
  m.def(
      "coincidence_spectra",
      [](const NuclideSpec& n, double quench, const DetectorConfig& det, double bin_width) {
        const CoincidenceSpectra s = coincidence_spectra(build_spectrum(n, bin_width), quench, det);
        py::dict d;
        d["q2"] = to_array(s.q2);
        d["q3"] = to_array(s.q3);
        d["eff2"] = s.eff2;
        d["eff3"] = s.eff3;
        d["tdcr"] = s.tdcr;
        return d;
      },
      py::arg("nuclide"), py::arg("quench"), py::arg("detector") = DetectorConfig{},
      py::arg("bin_width_keV") = 1.0);

  py::class_<SampleRecord>(m, "Sample")
      .def_readonly("proportions", &SampleRecord::proportions)
      .def_readonly("quench", &SampleRecord::quench)
      .def_readonly("eff2", &SampleRecord::eff2)
      .def_readonly("eff3", &SampleRecord::eff3)
      .def_readonly("tdcr", &SampleRecord::tdcr)
      .def_property_readonly("q2", [](const SampleRecord& r) { return to_array(r.q2); })
      .def_property_readonly("q3", [](const SampleRecord& r) { return to_array(r.q3); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("n_nuclides", &Dataset::n_nuclides)
      .def_readonly("n_channels", &Dataset::n_channels)
      .def_readonly("noise_level", &Dataset::noise_level)
      .def_readonly("seed", &Dataset::seed)
      .def_readonly("n_train", &Dataset::n_train)
      .def_readonly("n_val", &Dataset::n_val)
      .def_property_readonly("n_test", &Dataset::n_test)
      .def("__len__", [](const Dataset& d) { return d.records.size(); })
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.records.size()) throw py::index_error();
             return d.records[i];
           })
      .def("checksum", &dataset_checksum)
      .def("save", [](const Dataset& d, const std::string& path) { write_dataset(path, d); },
           py::arg("path"))
      .def_static("load", &read_dataset, py::arg("path"))
      .def(py::self == py::self);

  m.def(
      "generate_dataset",
      [](int n_samples, std::uint64_t seed, double noise_level, double quench_min,
         std::optional<std::vector<NuclideSpec>> nuclides, std::optional<DetectorConfig> detector,
         int threads) {
        DatasetConfig cfg;
        cfg.n_samples = n_samples;
        cfg.seed = seed;
        cfg.noise_level = noise_level;
        cfg.quench_min = quench_min;
        if (nuclides) cfg.nuclides = *nuclides;
        if (detector) cfg.detector = *detector;
        py::gil_scoped_release release;
        return generate_dataset(cfg, threads);
      },
      py::arg("n_samples"), py::arg("seed") = 0, py::arg("noise_level") = 0.05,
      py::arg("quench_min") = 0.001, py::arg("nuclides") = py::none(),
      py::arg("detector") = py::none(), py::arg("threads") = 0);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("trunk_widths", &ModelConfig::trunk_widths)
      .def_readwrite("head_width", &ModelConfig::head_width)
      .def_readwrite("spectrum_head_width", &ModelConfig::spectrum_head_width)
      .def_readwrite("dropout_rate", &ModelConfig::dropout_rate)
      .def_readonly("n_nuclides", &ModelConfig::n_nuclides)
      .def_readonly("n_channels", &ModelConfig::n_channels);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("stage1_lr", &TrainConfig::stage1_lr)
      .def_readwrite("stage2_lr", &TrainConfig::stage2_lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("min_improvement", &TrainConfig::min_improvement)
      .def_readwrite("huber_delta", &TrainConfig::huber_delta)
      .def_readwrite("spectrum_loss_weight", &TrainConfig::spectrum_loss_weight)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<MultiTaskNet>(m, "Model")
      .def_property_readonly("config", &MultiTaskNet::config)
      .def(
          "predict",
          [](const MultiTaskNet& net, const Vector& q2, const Vector& q3) {
            const Matrix a = to_matrix(q2, "q2"), b = to_matrix(q3, "q3");
            const auto n = net.config().n_channels;
            if (a.rows() != b.rows() || a.cols() != n || b.cols() != n)
              throw py::value_error("q2 and q3 must both have " + std::to_string(n) + " channels per row");
            Matrix input(a.rows(), 2 * n);
            input << a, b;
            Predictions p;
            {
              py::gil_scoped_release release;
              p = postprocess(net.predict(input));
            }
            return predictions_dict(p);
          },
          py::arg("q2"), py::arg("q3"),
          "Post-processed activity, efficiency and per-nuclide spectra for each row.")
      .def(
          "evaluate",
          [](const MultiTaskNet& net, const Dataset& data, const std::string& split) {
            const auto records = data.split(split);
            py::gil_scoped_release release;
            return evaluate(net, records);
          },
          py::arg("dataset"), py::arg("split") = "test")
      .def("save", [](const MultiTaskNet& net, const std::string& path) { save_model(path, net); },
           py::arg("path"))
      .def_static("load", [](const std::string& path) { return load_model(path).network(); },
                  py::arg("path"));

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("activity_mse", &EvalReport::activity_mse)
      .def_readonly("activity_mae", &EvalReport::activity_mae)
      .def_readonly("efficiency_mse", &EvalReport::efficiency_mse)
      .def_readonly("efficiency_mae", &EvalReport::efficiency_mae)
      .def_readonly("activity_r2", &EvalReport::activity_r2)
      .def_readonly("efficiency_r2", &EvalReport::efficiency_r2)
      .def_readonly("mean_ssim", &EvalReport::mean_ssim)
      .def_readonly("mean_distance", &EvalReport::mean_distance)
      .def("as_dict", &report_dict);

  m.def(
      "train",
      [](const Dataset& data, std::uint64_t seed, std::optional<ModelConfig> model,
         std::optional<TrainConfig> train, std::function<void(int, int, double, double)> progress) {
        ModelConfig mcfg = model.value_or(ModelConfig{});
        mcfg.n_nuclides = data.n_nuclides;
        mcfg.n_channels = data.n_channels;
        mcfg.validate();
        TrainConfig tcfg = train.value_or(TrainConfig{});
        tcfg.seed = seed;
        if (data.n_train < 2 || data.n_val == 0)
          throw py::value_error("dataset needs at least 2 training and 1 validation sample");
        MultiTaskNet net(mcfg, derive_seed(seed, "init", 0));
        Trainer trainer(net, tcfg);
        TrainingHistory history;
        {
          py::gil_scoped_release release;
          history = trainer.fit(make_batch(data.train()), make_batch(data.val()),
                                [&](const EpochRecord& e) {
                                  if (!progress) return;
                                  py::gil_scoped_acquire acquire;
                                  progress(e.stage, e.epoch, e.train.total, e.val.total);
                                });
        }
        py::list rows;
        for (const auto& e : history.epochs) {
          py::dict row;
          row["stage"] = e.stage;
          row["epoch"] = e.epoch;
          row["train_total"] = e.train.total;
          row["val_total"] = e.val.total;
          row["val_activity_mse"] = e.val.activity_mse;
          row["val_efficiency_mse"] = e.val.efficiency_mse;
          row["val_spectrum_huber"] = e.val.spectrum_huber;
          rows.append(row);
        }
        return py::make_tuple(std::move(net), rows);
      },
      py::arg("dataset"), py::arg("seed") = 0, py::arg("model") = py::none(),
      py::arg("train") = py::none(), py::arg("progress") = py::none(),
      "Two-stage fit with early stopping. Returns (model, history rows).");

  m.def(
      "ssim",
      [](const Vector& x, const Vector& y, int window, double data_range) {
        SsimOptions o;
        o.window = window;
        o.data_range = data_range;
        return ssim_1d(to_vector(x), to_vector(y), o);
      },
      py::arg("x"), py::arg("y"), py::arg("window") = 11, py::arg("data_range") = 0.0);
  m.def("r_squared", [](const Vector& p, const Vector& t) { return r_squared(to_vector(p), to_vector(t)); },
        py::arg("pred"), py::arg("truth"));
}
