#pragma once

#include "dimnas/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace dimnas {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw contents of a DTEN file: "DTEN1", u8 axis count, u32 LE dims, f32 LE data.
struct DtenArray {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

void write_dten(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                std::span<const float> data);
DtenArray read_dten(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dten(std::span<const std::uint32_t> shape, std::span<const float> data);
DtenArray decode_dten(std::span<const std::uint8_t> bytes);

/// Values are narrowed to 32-bit floats on save.
template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const Tensor<Scalar>& tensor);

Tensor<float> load_tensor(const std::filesystem::path& path);

}  // namespace dimnas
