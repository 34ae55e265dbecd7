#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tdcr/binary_io.hpp"
#include "tdcr/dataset.hpp"
#include "tdcr/model_io.hpp"
#include "tdcr/trainer.hpp"

using namespace tdcr;

namespace {

const Dataset& shared_data() {
  static const Dataset data = [] {
    DatasetConfig cfg;
    cfg.n_samples = 60;
    cfg.seed = 5;
    return generate_dataset(cfg, 1);
  }();
  return data;
}

ModelConfig small_model(double dropout = 0.2) {
  ModelConfig cfg;
  cfg.n_nuclides = 2;
  cfg.n_channels = 1024;
  cfg.trunk_widths = {16, 8};
  cfg.head_width = 8;
  cfg.spectrum_head_width = 16;
  cfg.dropout_rate = dropout;
  return cfg;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 8;
  t.max_epochs = 3;
  t.patience = 5;
  t.seed = 77;
  return t;
}

bool same_params(const ModelParams& a, const ModelParams& b) {
  if (a.trainable.size() != b.trainable.size()) return false;
  for (std::size_t i = 0; i < a.trainable.size(); ++i)
    if (a.trainable[i].value != b.trainable[i].value) return false;
  return a.running_mean == b.running_mean && a.running_var == b.running_var;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tdcr_train_" + name)).string();
}

} // namespace

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.stage2_lr = t.stage1_lr;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.batch_size = 1;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("stage 1 leaves the spectrum head bitwise frozen") {
  const auto train = make_batch(shared_data().train());
  MultiTaskNet net(small_model(), 3);
  const auto before = net.params();
  Trainer trainer(net, quick_train());
  trainer.begin_stage(1);
  trainer.train_epoch(train);
  trainer.train_epoch(train);
  const auto& reg = net.params().trainable;
  bool trunk_moved = false;
  for (std::size_t i = 0; i < reg.size(); ++i) {
    if (reg[i].group == ParamGroup::spectrum)
      CHECK(reg[i].value == before.trainable[i].value);
    else if (reg[i].group == ParamGroup::trunk && reg[i].value != before.trainable[i].value)
      trunk_moved = true;
  }
  CHECK(trunk_moved);
  CHECK(net.params().log_var_activity() != 0.0);

  trainer.begin_stage(2);
  trainer.train_epoch(train);
  const auto idx = net.params().index_of("spectrum.fc1.weight");
  CHECK(net.params().trainable[idx].value != before.trainable[idx].value);
}

TEST_CASE("early stopping restores the best epoch") {
  const auto& data = shared_data();
  const auto train = make_batch(data.train());
  const auto val = make_batch(data.val());
  MultiTaskNet net(small_model(), 3);
  const auto initial = net.params();
  TrainConfig t = quick_train();
  t.patience = 1;
  t.max_epochs = 10;
  t.min_improvement = 1e9; // no epoch can beat the pre-training evaluation
  Trainer trainer(net, t);
  const auto history = trainer.fit(train, val);
  CHECK(history.best_epoch_stage1 == 0);
  CHECK(history.best_epoch_stage2 == 0);
  CHECK(history.epochs.size() == 4); // epochs 0 and 1 of each stage
  CHECK(same_params(net.params(), initial));

  std::ostringstream csv;
  history.write_csv(csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("epoch,stage,train_total", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto& data = shared_data();
  const auto train = make_batch(data.train());
  const auto val = make_batch(data.val());
  auto fit = [&](std::uint64_t seed) {
    MultiTaskNet net(small_model(), 9);
    TrainConfig t = quick_train();
    t.seed = seed;
    Trainer trainer(net, t);
    const auto h = trainer.fit(train, val);
    return std::make_pair(net.params(), h.epochs.back().val.total);
  };
  const auto a = fit(1), b = fit(1);
  CHECK(same_params(a.first, b.first));
  CHECK(a.second == b.second);

  // the seed drives shuffling and dropout
  auto epochs = [&](std::uint64_t seed) {
    MultiTaskNet net(small_model(), 9);
    TrainConfig t = quick_train();
    t.seed = seed;
    Trainer trainer(net, t);
    trainer.begin_stage(2);
    trainer.train_epoch(train);
    return net.params();
  };
  CHECK(same_params(epochs(1), epochs(1)));
  CHECK(!same_params(epochs(1), epochs(2)));
}

TEST_CASE("a trailing batch of one is merged") {
  DatasetConfig cfg;
  cfg.n_samples = 11;
  cfg.seed = 2;
  const auto data = generate_dataset(cfg, 1);
  REQUIRE(data.n_train == 9);
  const auto train = make_batch(data.train());
  MultiTaskNet net(small_model(), 1);
  TrainConfig t = quick_train();
  t.batch_size = 4; // 9 = 4 + 5, never 4 + 4 + 1
  Trainer trainer(net, t);
  trainer.begin_stage(1);
  CHECK_NOTHROW(trainer.train_epoch(train));
  CHECK(trainer.optimizer().step == 2);
}

TEST_CASE("model file round trip") {
  MultiTaskNet net(small_model(0.35), 4);
  const auto train = make_batch(shared_data().train());
  Trainer trainer(net, quick_train());
  trainer.begin_stage(1);
  trainer.train_epoch(train);

  const std::string path = temp_path("model.bin");
  save_model(path, net, OptimizerSnapshot{trainer.stage(), trainer.epoch(), trainer.optimizer()});
  const auto loaded = load_model(path);
  CHECK(loaded.config == net.config());
  CHECK(same_params(loaded.params, net.params()));
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->stage == 1);
  CHECK(loaded.optimizer->epoch == 1);
  CHECK(loaded.optimizer->adam == trainer.optimizer());

  const auto copy = loaded.network();
  const auto p1 = net.predict(train.input);
  const auto p2 = copy.predict(train.input);
  CHECK(p1.activity == p2.activity);
  CHECK(p1.spectra == p2.spectra);

  const auto plain = parse_model(serialize_model(net));
  CHECK(!plain.optimizer.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("corrupted model files are rejected") {
  const MultiTaskNet net(small_model(), 4);
  const auto bytes = serialize_model(net);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(parse_model(truncated), FormatError);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(parse_model(magic), FormatError);

  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_WITH_AS(parse_model(version), doctest::Contains("version"), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_model(trailing), FormatError);

  CHECK_THROWS(load_model(temp_path("does_not_exist.bin")));
}

TEST_CASE("resuming from a snapshot matches an uninterrupted run") {
  const auto train = make_batch(shared_data().train());
  const TrainConfig t = quick_train();

  MultiTaskNet straight(small_model(), 6);
  Trainer a(straight, t);
  a.begin_stage(2);
  for (int e = 0; e < 4; ++e) a.train_epoch(train);

  MultiTaskNet first(small_model(), 6);
  Trainer b(first, t);
  b.begin_stage(2);
  b.train_epoch(train);
  b.train_epoch(train);
  const auto bytes = serialize_model(first, OptimizerSnapshot{b.stage(), b.epoch(), b.optimizer()});

  auto loaded = parse_model(bytes);
  MultiTaskNet resumed = loaded.network();
  Trainer c(resumed, t);
  c.restore(loaded.optimizer->stage, loaded.optimizer->epoch, loaded.optimizer->adam);
  c.train_epoch(train);
  c.train_epoch(train);

  CHECK(same_params(resumed.params(), straight.params()));
  CHECK(c.optimizer() == a.optimizer());
}

TEST_CASE("a small clean set can be fit closely") {
  DatasetConfig cfg;
  cfg.n_samples = 20;
  cfg.seed = 8;
  cfg.noise_level = 0.0;
  const auto data = generate_dataset(cfg, 1);
  REQUIRE(data.n_train == 16);
  const auto train = make_batch(data.train());
  MultiTaskNet net(small_model(0.0), 12);
  TrainConfig t = quick_train();
  t.batch_size = 16;
  Trainer trainer(net, t);
  trainer.begin_stage(1);
  const double start = trainer.evaluate(train).raw();
  double last = start;
  for (int e = 0; e < 300; ++e) last = trainer.train_epoch(train).raw();
  MESSAGE("raw loss " << start << " -> " << last);
  CHECK(last < 0.05 * start);
}
