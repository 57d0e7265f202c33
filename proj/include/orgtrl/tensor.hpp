#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl {

// Dense 32-bit real tensor, row-major.
struct FeatureTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  FeatureTensor() = default;
  FeatureTensor(std::vector<std::uint32_t> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {}

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::uint32_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  // product(shape) == data.size() and all values finite
  void validate(const std::string& what) const;
};

// File layout: "ORGT", version 0x01, dtype 0x01 (f32), rank byte,
// rank little-endian u32 dims, row-major little-endian f32 payload.
FeatureTensor read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const std::filesystem::path& path, const FeatureTensor& t);

}  // namespace orgtrl
