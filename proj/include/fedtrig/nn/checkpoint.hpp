#pragma once

// Model checkpoint file, all integers and values little-endian:
//
//   offset  type      field
//   0       char[4]   magic "FTCK"
//   4       u32       format version (1)
//   8       u32       input height
//   12      u32       input width
//   16      u32       input channels
//   20      u32       class count
//   24      u32       hidden layer count L
//   28      u32[L]    hidden widths
//   ..      u64       layout digest (FNV-1a, see Layout::digest)
//   ..      u64       parameter count P
//   ..      f64[P]    parameters in ParamVector order

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedtrig/nn/model.hpp"

namespace fedtrig::nn {

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw TruncatedFileError(path_ + ": checkpoint truncated");
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t pos_ = 4;
};

}  // namespace detail

inline constexpr std::array<char, 4> kCheckpointMagic{'F', 'T', 'C', 'K'};

inline void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const auto& s = model.spec;
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(s.input.height));
  detail::put_u32(out, static_cast<std::uint32_t>(s.input.width));
  detail::put_u32(out, static_cast<std::uint32_t>(s.input.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(s.classes));
  detail::put_u32(out, static_cast<std::uint32_t>(s.hidden.size()));
  for (auto w : s.hidden) detail::put_u32(out, static_cast<std::uint32_t>(w));
  detail::put_u64(out, model.net.layout().digest());
  detail::put_u64(out, model.net.params().size());
  for (double v : model.net.params()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(path.string() + ": cannot open for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(path.string() + ": write failed");
}

inline Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError(path.string() + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) {
    throw BadMagicError(path.string() + ": not a checkpoint");
  }
  detail::ByteReader in(bytes, path.string());
  if (in.uint(4) != 1) throw FormatError(path.string() + ": unsupported checkpoint version");
  ClassifierSpec spec;
  spec.input.height = in.uint(4);
  spec.input.width = in.uint(4);
  spec.input.channels = in.uint(4);
  spec.classes = in.uint(4);
  const std::size_t layers = in.uint(4);
  for (std::size_t i = 0; i < layers; ++i) spec.hidden.push_back(in.uint(4));
  spec.validate();
  const std::uint64_t digest = in.uint(8);
  const std::uint64_t count = in.uint(8);
  Classifier model{spec, DenseStack(spec.layer_sizes())};
  if (digest != model.net.layout().digest() || count != model.net.layout().total) {
    throw FormatError(path.string() + ": layout digest or count does not match header spec");
  }
  in.need(count * 8);
  for (auto& v : model.net.params()) v = std::bit_cast<double>(in.uint(8));
  if (in.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace fedtrig::nn
