#include "tdcr/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "tdcr/binary_io.hpp"

namespace tdcr {

namespace {
constexpr std::string_view kMagic = "TDCR";
constexpr std::uint16_t kVersion = 1;
} // namespace

void DatasetConfig::validate() const {
  if (n_samples < 0) throw std::invalid_argument("dataset: n_samples must be >= 0");
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("dataset: split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("dataset: split fractions must sum to 1");
  if (!(noise_level >= 0.0)) throw std::invalid_argument("dataset: noise_level must be >= 0");
  if (!(quench_min > 0.0 && quench_min < 1.0))
    throw std::invalid_argument("dataset: quench_min must be in (0, 1)");
  if (nuclides.empty()) throw std::invalid_argument("dataset: no nuclides configured");
  if (nuclides.size() > 65535) throw std::invalid_argument("dataset: too many nuclides");
  for (const auto& n : nuclides) n.validate();
  detector.validate();
  if (detector.n_channels > 65535)
    throw std::invalid_argument("dataset: n_channels exceeds file format limit");
}

std::span<const SampleRecord> Dataset::split(const std::string& name) const {
  if (name == "train") return train();
  if (name == "val") return val();
  if (name == "test") return test();
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

std::pair<std::vector<double>, double> sample_parameters(Rng& rng, int n_nuclides,
                                                         double quench_min) {
  if (n_nuclides < 1) throw std::invalid_argument("sample_parameters: n_nuclides < 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(n_nuclides), 1.0);
  if (n_nuclides == 2) {
    p[0] = unit(rng);
    p[1] = 1.0 - p[0];
  } else if (n_nuclides > 2) {
    std::exponential_distribution<double> expo(1.0);
    double sum = 0.0;
    for (double& v : p) sum += (v = expo(rng));
    for (double& v : p) v /= sum;
  }
  // u in [0,1) maps to q in (quench_min, 1]
  const double q = 1.0 - unit(rng) * (1.0 - quench_min);
  return {std::move(p), q};
}

std::vector<double> add_noise(std::span<const double> spectrum, double level, Rng& rng) {
  if (!(level >= 0.0)) throw std::invalid_argument("add_noise: level must be >= 0");
  std::vector<double> out(spectrum.begin(), spectrum.end());
  if (level == 0.0) return out;
  std::normal_distribution<double> eps(0.0, level);
  for (double& v : out) v = std::max(0.0, v * (1.0 + eps(rng)));
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  const auto dn = static_cast<double>(n);
  const auto n_val = static_cast<std::size_t>(std::floor(dn * fractions[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(dn * fractions[2] + 1e-9));
  return {n - n_val - n_test, n_val, n_test};
}

DatasetGenerator::DatasetGenerator(DatasetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  spectra_.reserve(cfg_.nuclides.size());
  for (const auto& n : cfg_.nuclides) spectra_.push_back(build_spectrum(n, 1.0));
}

SampleRecord DatasetGenerator::sample_with(std::span<const double> proportions, double quench,
                                           Rng& rng) const {
  const std::size_t n = spectra_.size();
  if (proportions.size() != n)
    throw std::invalid_argument("sample: proportion count does not match nuclide count");
  const auto n_ch = static_cast<std::size_t>(cfg_.detector.n_channels);

  SampleRecord r;
  r.proportions.assign(proportions.begin(), proportions.end());
  r.quench = quench;
  std::vector<double> q2(n_ch, 0.0), q3(n_ch, 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CoincidenceSpectra c = coincidence_spectra(spectra_[i], quench, cfg_.detector);
    const double p = proportions[i];
    for (std::size_t s = 0; s < n_ch; ++s) {
      q2[s] += p * c.q2[s];
      q3[s] += p * c.q3[s];
    }
    num += p * c.eff3;
    den += p * c.eff2;
    r.eff2.push_back(c.eff2);
    r.eff3.push_back(c.eff3);
    r.nuclide_q2.push_back(std::move(c.q2));
    r.nuclide_q3.push_back(std::move(c.q3));
  }
  r.tdcr = den > 0.0 ? num / den : 0.0;
  r.q2 = add_noise(q2, cfg_.noise_level, rng);
  r.q3 = add_noise(q3, cfg_.noise_level, rng);
  return r;
}

SampleRecord generate_sample(const DatasetGenerator& gen, Rng& rng) {
  const auto& cfg = gen.config();
  auto [p, q] = sample_parameters(rng, static_cast<int>(cfg.nuclides.size()), cfg.quench_min);
  return gen.sample_with(p, q, rng);
}

SampleRecord DatasetGenerator::sample(std::uint64_t index) const {
  Rng rng = make_rng(cfg_.seed, "dataset", index);
  return generate_sample(*this, rng);
}

int thread_count_from_env() {
  if (const char* env = std::getenv("TDCR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

Dataset generate_dataset(const DatasetConfig& cfg, int threads) {
  DatasetGenerator gen(cfg);
  const auto n = static_cast<std::size_t>(cfg.n_samples);
  const auto sizes = split_sizes(n, cfg.split_fractions);

  Dataset d;
  d.n_nuclides = static_cast<int>(cfg.nuclides.size());
  d.n_channels = cfg.detector.n_channels;
  d.noise_level = cfg.noise_level;
  d.seed = cfg.seed;
  d.n_train = sizes[0];
  d.n_val = sizes[1];
  d.records.resize(n);

  if (threads <= 0) threads = thread_count_from_env();
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(n, 1));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) d.records[i] = gen.sample(i);
    return d;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += n_threads) d.records[i] = gen.sample(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return d;
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

void put_f32s(ByteWriter& w, std::span<const double> v) {
  for (double x : v) w.f32(static_cast<float>(x));
}

std::vector<double> get_f32s(ByteReader& r, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = r.f32();
  return v;
}

void check_shape(const Dataset& d, const SampleRecord& r) {
  const auto n = static_cast<std::size_t>(d.n_nuclides);
  const auto c = static_cast<std::size_t>(d.n_channels);
  bool ok = r.proportions.size() == n && r.eff2.size() == n && r.eff3.size() == n &&
            r.q2.size() == c && r.q3.size() == c && r.nuclide_q2.size() == n &&
            r.nuclide_q3.size() == n;
  for (std::size_t i = 0; ok && i < n; ++i)
    ok = r.nuclide_q2[i].size() == c && r.nuclide_q3[i].size() == c;
  if (!ok) throw std::invalid_argument("dataset record shape does not match header");
}

} // namespace

std::vector<char> serialize_dataset(const Dataset& d) {
  if (d.records.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("dataset too large for format");
  if (d.n_train + d.n_val > d.records.size())
    throw std::invalid_argument("dataset split offsets exceed record count");
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(d.records.size()));
  w.u16(static_cast<std::uint16_t>(d.n_nuclides));
  w.u16(static_cast<std::uint16_t>(d.n_channels));
  w.f32(static_cast<float>(d.noise_level));
  w.u64(d.seed);
  w.u32(static_cast<std::uint32_t>(d.n_train));                // val offset
  w.u32(static_cast<std::uint32_t>(d.n_train + d.n_val));      // test offset
  for (const auto& r : d.records) {
    check_shape(d, r);
    put_f32s(w, r.proportions);
    w.f32(static_cast<float>(r.quench));
    put_f32s(w, r.eff2);
    put_f32s(w, r.eff3);
    w.f32(static_cast<float>(r.tdcr));
    put_f32s(w, r.q2);
    put_f32s(w, r.q3);
    for (const auto& s : r.nuclide_q2) put_f32s(w, s);
    for (const auto& s : r.nuclide_q3) put_f32s(w, s);
  }
  return w.buffer();
}

Dataset parse_dataset(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic(kMagic);
  const auto version = r.u16();
  if (version != kVersion)
    r.fail("unsupported dataset version " + std::to_string(version));
  Dataset d;
  const std::uint32_t n = r.u32();
  d.n_nuclides = r.u16();
  d.n_channels = r.u16();
  d.noise_level = r.f32();
  d.seed = r.u64();
  const std::uint32_t val_off = r.u32();
  const std::uint32_t test_off = r.u32();
  if (val_off > test_off || test_off > n) r.fail("inconsistent split offsets");
  d.n_train = val_off;
  d.n_val = test_off - val_off;

  const auto nn = static_cast<std::size_t>(d.n_nuclides);
  const auto nc = static_cast<std::size_t>(d.n_channels);
  const std::uint64_t record_bytes = 4 * (3 * nn + 2 + 2 * nc + 2 * nn * nc);
  if (record_bytes * n != r.remaining())
    r.fail("payload size " + std::to_string(r.remaining()) + " does not match " +
           std::to_string(n) + " records of " + std::to_string(record_bytes) + " bytes");

  d.records.resize(n);
  for (auto& rec : d.records) {
    rec.proportions = get_f32s(r, nn);
    rec.quench = r.f32();
    rec.eff2 = get_f32s(r, nn);
    rec.eff3 = get_f32s(r, nn);
    rec.tdcr = r.f32();
    rec.q2 = get_f32s(r, nc);
    rec.q3 = get_f32s(r, nc);
    rec.nuclide_q2.resize(nn);
    rec.nuclide_q3.resize(nn);
    for (auto& s : rec.nuclide_q2) s = get_f32s(r, nc);
    for (auto& s : rec.nuclide_q3) s = get_f32s(r, nc);
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  const auto bytes = serialize_dataset(dataset);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  return parse_dataset(read_file_bytes(path));
}

Dataset quantize_f32(Dataset d) {
  auto q = [](double& x) { x = static_cast<float>(x); };
  auto qv = [&](std::vector<double>& v) { for (double& x : v) q(x); };
  q(d.noise_level);
  for (auto& r : d.records) {
    qv(r.proportions);
    q(r.quench);
    qv(r.eff2);
    qv(r.eff3);
    q(r.tdcr);
    qv(r.q2);
    qv(r.q3);
    for (auto& s : r.nuclide_q2) qv(s);
    for (auto& s : r.nuclide_q3) qv(s);
  }
  return d;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t dataset_checksum(const Dataset& dataset) {
  const auto bytes = serialize_dataset(dataset);
  return fnv1a64(bytes);
}

void write_record_csv(std::ostream& os, const SampleRecord& r,
                      std::span<const std::string> names) {
  const auto old = os.precision(17);
  auto label = [&](std::size_t i) {
    return i < names.size() ? names[i] : "nuclide" + std::to_string(i);
  };
  for (std::size_t i = 0; i < r.proportions.size(); ++i)
    os << "# proportion_" << label(i) << ',' << r.proportions[i] << '\n';
  os << "# quench," << r.quench << '\n';
  for (std::size_t i = 0; i < r.eff2.size(); ++i)
    os << "# eff2_" << label(i) << ',' << r.eff2[i] << '\n'
       << "# eff3_" << label(i) << ',' << r.eff3[i] << '\n';
  os << "# tdcr," << r.tdcr << '\n';
  os << "channel,q2,q3";
  for (std::size_t i = 0; i < r.nuclide_q2.size(); ++i) os << ",q2_" << label(i);
  for (std::size_t i = 0; i < r.nuclide_q3.size(); ++i) os << ",q3_" << label(i);
  os << '\n';
  for (std::size_t s = 0; s < r.q2.size(); ++s) {
    os << s << ',' << r.q2[s] << ',' << r.q3[s];
    for (const auto& v : r.nuclide_q2) os << ',' << v[s];
    for (const auto& v : r.nuclide_q3) os << ',' << v[s];
    os << '\n';
  }
  os.precision(old);
}

} // namespace tdcr
