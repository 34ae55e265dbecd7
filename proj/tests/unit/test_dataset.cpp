#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "tdcr/binary_io.hpp"
#include "tdcr/dataset.hpp"

using namespace tdcr;

namespace {

DatasetConfig small_config(int n, std::uint64_t seed = 11) {
  DatasetConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tdcr_test_" + name)).string();
}

} // namespace

TEST_CASE("sample_parameters") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    auto [p, q] = sample_parameters(rng, 1, 0.001);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == 1.0);
    CHECK(q > 0.001);
    CHECK(q <= 1.0);
  }
  for (int n : {2, 3, 5}) {
    for (int i = 0; i < 200; ++i) {
      auto [p, q] = sample_parameters(rng, n, 0.001);
      double s = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(sample_parameters(rng, 0, 0.1), std::invalid_argument);
}

TEST_CASE("sample_parameters moments") {
  Rng rng(99);
  const int n = 100000;
  double mp = 0.0, mq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto [p, q] = sample_parameters(rng, 2, 0.001);
    mp += p[0];
    mq += q;
  }
  CHECK(std::abs(mp / n - 0.5) < 0.005);
  CHECK(std::abs(mq / n - (0.001 + 1.0) / 2) < 0.005);
}

TEST_CASE("add_noise") {
  Rng rng(5);
  const std::vector<double> v{0.0, 0.1, 0.5, 2.0};
  CHECK(add_noise(v, 0.0, rng) == v);
  const std::vector<double> zeros(16, 0.0);
  CHECK(add_noise(zeros, 0.05, rng) == zeros);
  CHECK_THROWS_AS(add_noise(v, -0.1, rng), std::invalid_argument);

  const std::vector<double> flat(8, 3.0);
  const int trials = 10000;
  std::vector<double> sum(8, 0.0), sq(8, 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto out = add_noise(flat, 0.05, rng);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(out[k] >= 0.0);
      sum[k] += out[k];
      sq[k] += out[k] * out[k];
    }
  }
  for (std::size_t k = 0; k < 8; ++k) {
    const double mean = sum[k] / trials;
    const double sd = std::sqrt(sq[k] / trials - mean * mean);
    CHECK(std::abs(sd / mean - 0.05) < 0.002);
  }
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(10000, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8000, 1000, 1000});
  CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(split_sizes(2500, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{2000, 250, 250});
  CHECK(split_sizes(7, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{7, 0, 0});
  CHECK(split_sizes(0, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{0, 0, 0});
}

TEST_CASE("config validation") {
  DatasetConfig cfg;
  cfg.split_fractions = {0.8, 0.1, 0.2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.split_fractions = {0.9, 0.1, 0.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DatasetConfig{};
  cfg.quench_min = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(cfg), std::invalid_argument);
}

TEST_CASE("generated sample labels") {
  const DatasetGenerator gen(small_config(1));
  const auto& det = gen.config().detector;

  SUBCASE("pure tritium") {
    Rng rng(1);
    auto cfg = gen.config();
    cfg.noise_level = 0.0;
    const DatasetGenerator clean(cfg);
    const std::vector<double> p{1.0, 0.0};
    const auto r = clean.sample_with(p, 1.0, rng);
    const auto h = coincidence_spectra(clean.spectra()[0], 1.0, det);
    CHECK(r.q2 == h.q2);
    CHECK(r.q3 == h.q3);
    CHECK(r.tdcr == doctest::Approx(h.tdcr).epsilon(1e-15));
  }
  SUBCASE("balanced mixture areas") {
    Rng rng(2);
    const std::vector<double> p{0.5, 0.5};
    const auto r = gen.sample_with(p, 0.37, rng);
    double area2 = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (double v : r.nuclide_q2[i]) area2 += 0.5 * v;
    CHECK(area2 == doctest::Approx((r.eff2[0] + r.eff2[1]) / 2).epsilon(1e-12));
  }
  SUBCASE("determinism") {
    CHECK(gen.sample(17) == gen.sample(17));
    CHECK(!(gen.sample(17) == gen.sample(18)));
  }
}

TEST_CASE("dataset invariants") {
  const auto d = generate_dataset(small_config(60));
  CHECK(d.n_train == 48);
  CHECK(d.n_val == 6);
  CHECK(d.n_test() == 6);
  CHECK(d.train().size() + d.val().size() + d.test().size() == d.records.size());
  CHECK(d.val().data() == d.train().data() + d.train().size());
  CHECK(d.test().data() == d.val().data() + d.val().size());
  std::size_t beyond_6_sigma = 0;
  for (const auto& r : d.records) {
    double psum = 0.0;
    for (double p : r.proportions) psum += p;
    CHECK(std::abs(psum - 1.0) < 1e-9);
    CHECK(r.quench > 0.001);
    CHECK(r.quench <= 1.0);
    double area2 = 0.0, area3 = 0.0, e2 = 0.0, e3 = 0.0;
    for (std::size_t i = 0; i < r.proportions.size(); ++i) {
      CHECK(r.eff3[i] <= r.eff2[i]);
      e2 += r.proportions[i] * r.eff2[i];
      e3 += r.proportions[i] * r.eff3[i];
      for (std::size_t s = 0; s < r.q2.size(); ++s) {
        area2 += r.proportions[i] * r.nuclide_q2[i][s];
        area3 += r.proportions[i] * r.nuclide_q3[i][s];
      }
    }
    CHECK(std::abs(area2 - e2) < 1e-9);
    CHECK(std::abs(area3 - e3) < 1e-9);
    CHECK(r.tdcr == doctest::Approx(e3 / e2).epsilon(1e-12));
    CHECK(r.q2[0] == 0.0);
    CHECK(r.q2[1] == 0.0);
    CHECK(r.q3[2] == 0.0);
    for (std::size_t s = 0; s < r.q2.size(); ++s) {
      double clean = 0.0;
      for (std::size_t i = 0; i < r.proportions.size(); ++i)
        clean += r.proportions[i] * r.nuclide_q2[i][s];
      if (std::abs(r.q2[s] - clean) > 6 * 0.05 * clean + 1e-300) ++beyond_6_sigma;
    }
  }
  if (beyond_6_sigma > 0) MESSAGE("bins beyond 6 sigma: " << beyond_6_sigma);
}

TEST_CASE("generation is deterministic and thread-count independent") {
  const auto cfg = small_config(24, 77);
  const auto a = generate_dataset(cfg, 1);
  const auto b = generate_dataset(cfg, 3);
  CHECK(a == b);
  CHECK(dataset_checksum(a) == dataset_checksum(b));
  const auto c = generate_dataset(small_config(24, 78), 1);
  CHECK(dataset_checksum(a) != dataset_checksum(c));
}

TEST_CASE("file round trip") {
  SUBCASE("empty dataset") {
    const auto d = generate_dataset(small_config(0));
    const auto path = temp_path("empty.tdcr");
    write_dataset(path, d);
    const auto back = read_dataset(path);
    CHECK(back.records.empty());
    CHECK(back == quantize_f32(d));
    std::filesystem::remove(path);
  }
  SUBCASE("f32-valued payloads are preserved bitwise") {
    const auto d = quantize_f32(generate_dataset(small_config(100)));
    const auto path = temp_path("hundred.tdcr");
    write_dataset(path, d);
    const auto back = read_dataset(path);
    CHECK(back == d);
    CHECK(serialize_dataset(back) == serialize_dataset(d));
    CHECK(read_file_bytes(path) == serialize_dataset(d));
    std::filesystem::remove(path);
  }
  SUBCASE("double payloads round to f32 once") {
    const auto d = generate_dataset(small_config(5));
    const auto back = parse_dataset(serialize_dataset(d));
    CHECK(back == quantize_f32(d));
    CHECK(parse_dataset(serialize_dataset(back)) == back);
  }
}

TEST_CASE("corrupted files are rejected") {
  const auto bytes = serialize_dataset(generate_dataset(small_config(3)));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_dataset(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(parse_dataset(bad_version), doctest::Contains("version"), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 7);
  try {
    parse_dataset(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() > 0);
  }

  std::vector<char> header_only(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(parse_dataset(header_only), FormatError);
  CHECK_THROWS_AS(parse_dataset({}), FormatError);
  CHECK_THROWS_AS(read_dataset(temp_path("does_not_exist.tdcr")), std::runtime_error);
}

TEST_CASE("record csv") {
  const auto d = generate_dataset(small_config(1));
  std::ostringstream os;
  const std::vector<std::string> names{"H3", "C14"};
  write_record_csv(os, d.records[0], names);
  const auto t = os.str();
  CHECK(t.find("# proportion_H3,") != std::string::npos);
  CHECK(t.find("channel,q2,q3,q2_H3,q2_C14,q3_H3,q3_C14\n") != std::string::npos);
}
