#include "tdcr/model_io.hpp"

#include <fstream>

#include "tdcr/binary_io.hpp"

namespace tdcr {

namespace {

constexpr std::string_view kMagic = "TDNN";
constexpr std::uint16_t kVersion = 1;

void put_matrix(ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

Matrix get_matrix(ByteReader& r, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const auto got_rows = r.u32();
  const auto got_cols = r.u32();
  if (got_rows != rows || got_cols != cols)
    r.fail("shape mismatch for " + what);
  if (r.remaining() < static_cast<std::uint64_t>(rows * cols) * 8) r.fail("unexpected end of file");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

void put_row(ByteWriter& w, const RowVector& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

RowVector get_row(ByteReader& r, Eigen::Index size) {
  if (r.u32() != size) r.fail("batch-norm statistics size mismatch");
  RowVector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = r.f64();
  return v;
}

} // namespace

std::vector<char> serialize_model(const MultiTaskNet& net,
                                  const std::optional<OptimizerSnapshot>& optimizer) {
  const auto& cfg = net.config();
  const auto& params = net.params();
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg.n_nuclides));
  w.u32(static_cast<std::uint32_t>(cfg.n_channels));
  w.u32(static_cast<std::uint32_t>(cfg.trunk_widths.size()));
  for (int width : cfg.trunk_widths) w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(cfg.head_width));
  w.u32(static_cast<std::uint32_t>(cfg.spectrum_head_width));
  w.f64(cfg.dropout_rate);

  w.u32(static_cast<std::uint32_t>(params.trainable.size()));
  for (const auto& p : params.trainable) put_matrix(w, p.value);
  w.u32(static_cast<std::uint32_t>(params.running_mean.size()));
  for (std::size_t i = 0; i < params.running_mean.size(); ++i) {
    put_row(w, params.running_mean[i]);
    put_row(w, params.running_var[i]);
  }

  w.u8(optimizer ? 1 : 0);
  if (optimizer) {
    const auto& adam = optimizer->adam;
    if (adam.m.size() != params.trainable.size() || adam.v.size() != params.trainable.size())
      throw std::invalid_argument("optimizer state does not match parameters");
    w.u8(static_cast<std::uint8_t>(optimizer->stage));
    w.u32(static_cast<std::uint32_t>(optimizer->epoch));
    w.u64(adam.step);
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
      put_matrix(w, adam.m[i]);
      put_matrix(w, adam.v[i]);
    }
  }
  return w.buffer();
}

LoadedModel parse_model(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic(kMagic);
  const auto version = r.u16();
  if (version != kVersion)
    r.fail("model file version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kVersion) + ")");

  LoadedModel out;
  auto& cfg = out.config;
  cfg.n_nuclides = static_cast<int>(r.u32());
  cfg.n_channels = static_cast<int>(r.u32());
  const auto depth = r.u32();
  if (depth == 0 || depth > 64) r.fail("implausible trunk depth");
  cfg.trunk_widths.resize(depth);
  for (int& width : cfg.trunk_widths) width = static_cast<int>(r.u32());
  cfg.head_width = static_cast<int>(r.u32());
  cfg.spectrum_head_width = static_cast<int>(r.u32());
  cfg.dropout_rate = r.f64();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid model configuration: ") + e.what());
  }

  // Shapes come from the registry of the stored configuration, never from
  // the file alone.
  out.params = MultiTaskNet::zero_params(cfg);
  const auto n_params = r.u32();
  if (n_params != out.params.trainable.size()) r.fail("parameter count mismatch");
  for (auto& p : out.params.trainable)
    p.value = get_matrix(r, p.value.rows(), p.value.cols(), p.name);
  const auto n_bn = r.u32();
  if (n_bn != out.params.running_mean.size()) r.fail("batch-norm layer count mismatch");
  for (std::size_t i = 0; i < n_bn; ++i) {
    out.params.running_mean[i] = get_row(r, out.params.running_mean[i].size());
    out.params.running_var[i] = get_row(r, out.params.running_var[i].size());
  }

  const auto has_optimizer = r.u8();
  if (has_optimizer > 1) r.fail("bad optimizer flag");
  if (has_optimizer) {
    OptimizerSnapshot snap;
    snap.stage = r.u8();
    if (snap.stage != 1 && snap.stage != 2) r.fail("bad optimizer stage");
    snap.epoch = static_cast<int>(r.u32());
    snap.adam.step = r.u64();
    for (const auto& p : out.params.trainable) {
      snap.adam.m.push_back(get_matrix(r, p.value.rows(), p.value.cols(), p.name + " (adam m)"));
      snap.adam.v.push_back(get_matrix(r, p.value.rows(), p.value.cols(), p.name + " (adam v)"));
    }
    out.optimizer = std::move(snap);
  }
  if (!r.at_end()) r.fail("trailing bytes after model payload");
  return out;
}

void save_model(const std::string& path, const MultiTaskNet& net,
                const std::optional<OptimizerSnapshot>& optimizer) {
  const auto bytes = serialize_model(net, optimizer);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

LoadedModel load_model(const std::string& path) { return parse_model(read_file_bytes(path)); }

} // namespace tdcr
