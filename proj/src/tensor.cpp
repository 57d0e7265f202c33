#include "orgtrl/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace orgtrl {

namespace {

constexpr char kMagic[4] = {'O', 'R', 'G', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF32 = 0x01;

static_assert(std::endian::native == std::endian::little,
              "tensor io assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t take_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void FeatureTensor::validate(const std::string& what) const {
  if (count() != data.size()) {
    throw ShapeError(what + ": element count " + std::to_string(data.size()) +
                     " does not match shape product " + std::to_string(count()));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError(what + ": non-finite value in payload");
  }
}

FeatureTensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open tensor file: " + path.string());

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic in tensor file: " + path.string());
  }
  std::uint8_t version = 0, dtype = 0, rank = 0;
  in.read(reinterpret_cast<char*>(&version), 1);
  in.read(reinterpret_cast<char*>(&dtype), 1);
  in.read(reinterpret_cast<char*>(&rank), 1);
  if (!in) throw CorruptionError("truncated tensor header: " + path.string());
  if (version != kVersion) throw FormatError("unsupported tensor version in " + path.string());
  if (dtype != kDtypeF32) throw FormatError("unsupported tensor dtype in " + path.string());

  FeatureTensor t;
  t.shape.resize(rank);
  for (std::uint8_t i = 0; i < rank; ++i) t.shape[i] = take_u32(in);
  if (!in) throw CorruptionError("truncated tensor dims: " + path.string());

  const std::size_t n = t.count();
  t.data.resize(n);
  if (n > 0) {
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(in.gcount()) != n * 4) {
      throw CorruptionError("truncated tensor payload: " + path.string());
    }
  }
  t.validate(path.string());
  return t;
}

void write_tensor_file(const std::filesystem::path& path, const FeatureTensor& t) {
  t.validate(path.string());
  if (t.shape.size() > 255) throw ShapeError("tensor rank exceeds 255");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open tensor file for writing: " + path.string());
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  out.put(static_cast<char>(kDtypeF32));
  out.put(static_cast<char>(t.shape.size()));
  for (auto d : t.shape) put_u32(out, d);
  if (!t.data.empty()) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * 4));
  }
  if (!out) throw LoadError("write failed: " + path.string());
}

}  // namespace orgtrl
