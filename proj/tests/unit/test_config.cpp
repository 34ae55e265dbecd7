#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "tdcr/config.hpp"

using namespace tdcr;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_run_config(is, "test.ini");
}

} // namespace

TEST_CASE("empty config gives defaults") {
  const auto cfg = parse("");
  CHECK(cfg.seed == 0);
  CHECK(cfg.dataset.n_samples == 10000);
  CHECK(cfg.model.n_channels == 1024);
  CHECK(cfg.model.n_nuclides == 2);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.metrics.window == 11);
}

TEST_CASE("sections and keys") {
  const auto cfg = parse(R"(# comment
seed = 1234

[dataset]
n_samples = 500
noise_level = 0.02
split_train = 0.6
split_val = 0.2
split_test = 0.2

[detector]
n_channels = 512
; another comment
light_yield_alpha = 8.5

[model]
trunk_widths = 64, 32 ,16
dropout_rate = 0.1

[train]
batch_size = 32
stage2_lr = 5e-5
adam_beta2 = 0.99

[metrics]
ssim_window = 7
)");
  CHECK(cfg.seed == 1234);
  CHECK(cfg.dataset.seed == 1234);
  CHECK(cfg.train.seed == 1234);
  CHECK(cfg.dataset.n_samples == 500);
  CHECK(cfg.dataset.noise_level == 0.02);
  CHECK(cfg.dataset.split_fractions[0] == 0.6);
  CHECK(cfg.dataset.detector.n_channels == 512);
  CHECK(cfg.model.n_channels == 512);
  CHECK(cfg.dataset.detector.light_yield_alpha == 8.5);
  CHECK(cfg.model.trunk_widths == std::vector<int>{64, 32, 16});
  CHECK(cfg.model.dropout_rate == 0.1);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.stage2_lr == 5e-5);
  CHECK(cfg.train.adam.beta2 == 0.99);
  CHECK(cfg.metrics.window == 7);
}

TEST_CASE("repeatable nuclide sections replace the default pair") {
  const auto cfg = parse(R"([nuclide]
name = H3
z_daughter = 2
q_value_kev = 18.591
[nuclide]
name = S35
z_daughter = 17
q_value_kev = 167.3
[nuclide]
name = C14
z_daughter = 7
q_value_kev = 156.476
)");
  REQUIRE(cfg.dataset.nuclides.size() == 3);
  CHECK(cfg.dataset.nuclides[1].name == "S35");
  CHECK(cfg.dataset.nuclides[1].z_daughter == 17);
  CHECK(cfg.dataset.nuclides[1].q_value_keV == 167.3);
  CHECK(cfg.model.n_nuclides == 3);
}

TEST_CASE("errors name the source and line") {
  CHECK_THROWS_WITH_AS(parse("seed = 1\n[train]\nlearning_rate = 0.1\n"),
                       doctest::Contains("test.ini:3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("\n[optimizer]\n"), doctest::Contains("test.ini:2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("[dataset]\nn_samples = lots\n"), doctest::Contains("test.ini:2"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse("[model\n"), doctest::Contains("test.ini:1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("[train]\nbatch_size\n"), doctest::Contains("test.ini:2"),
                       ConfigError);
  CHECK_THROWS_AS(parse("[train]\nstage2_lr = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[metrics]\nssim_window = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse("[nuclide]\nname = X\nz_daughter = 1\nq_value_kev = -3\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("written config parses back to the same values") {
  auto cfg = parse("seed = 99\n[model]\ntrunk_widths = 40,20\n[train]\nhuber_delta = 0.37\n");
  cfg.dataset.noise_level = 1.0 / 3.0;
  cfg.dataset.nuclides.push_back({"P32", 16, 1710.66});
  cfg.sync();
  std::ostringstream os;
  write_run_config(os, cfg);
  const auto back = parse(os.str());
  CHECK(back.seed == 99);
  CHECK(back.dataset.noise_level == cfg.dataset.noise_level);
  CHECK(back.dataset.nuclides.size() == 3);
  CHECK(back.dataset.nuclides[2].q_value_keV == 1710.66);
  CHECK(back.model == cfg.model);
  CHECK(back.train.huber_delta == 0.37);
  CHECK(back.train.adam.eps == cfg.train.adam.eps);
  std::ostringstream again;
  write_run_config(again, back);
  CHECK(again.str() == os.str());
}
