#include "dimnas/dten.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dimnas {
namespace {

constexpr char kMagic[] = {'D', 'T', 'E', 'N', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_dten(std::span<const std::uint32_t> shape, std::span<const float> data) {
  if (shape.size() > 255) throw FormatError("DTEN: too many axes");
  std::uint64_t count = 1;
  for (auto d : shape) count *= d;
  if (count != data.size()) throw FormatError("DTEN: shape does not match data length");

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(sizeof(kMagic) + 1 + 4 * shape.size() + 4 * data.size());
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) put_u32(out, d);
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

DtenArray decode_dten(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + 1 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("DTEN: bad magic");
  }
  std::size_t at = sizeof(kMagic);
  const std::size_t axes = bytes[at++];
  if (bytes.size() < at + 4 * axes) throw FormatError("DTEN: truncated header");
  DtenArray array;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < axes; ++i, at += 4) {
    array.shape.push_back(get_u32(bytes, at));
    count *= array.shape.back();
  }
  if (bytes.size() != at + 4 * count) {
    throw FormatError("DTEN: payload is " + std::to_string(bytes.size() - at) + " bytes, expected " +
                      std::to_string(4 * count));
  }
  array.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, at += 4) {
    array.data[i] = std::bit_cast<float>(get_u32(bytes, at));
  }
  return array;
}

void write_dten(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                std::span<const float> data) {
  const auto bytes = encode_dten(shape, data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

DtenArray read_dten(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_dten(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const Tensor<Scalar>& tensor) {
  std::vector<std::uint32_t> shape;
  for (Index d : tensor.shape().dims()) shape.push_back(static_cast<std::uint32_t>(d));
  std::vector<float> data(static_cast<std::size_t>(tensor.numel()));
  for (Index i = 0; i < tensor.numel(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(tensor.value()(i));
  write_dten(path, shape, data);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
  auto array = read_dten(path);
  std::vector<Index> dims(array.shape.begin(), array.shape.end());
  try {
    return Tensor<float>::from(Shape(std::move(dims)), array.data);
  } catch (const ShapeError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template void save_tensor<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const Tensor<double>&);

}  // namespace dimnas
