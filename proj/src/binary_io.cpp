#include "tdcr/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace tdcr {

void ByteWriter::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return data;
}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() ||
      std::string_view(buf_.data() + pos_, magic.size()) != magic)
    fail("bad magic, expected '" + std::string(magic) + "'");
  pos_ += magic.size();
}

} // namespace tdcr
