#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedtrig/autodiff/tensor.hpp"
#include "fedtrig/flcore/types.hpp"

namespace fedtrig::harness {

inline constexpr const char* kRoundCsvHeader = "round,ma,asr,n_removed,removed_ids,wall_ms";

// Fixed-precision rendering so that CSV bytes depend only on the values.
inline std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string format_round_row(const RoundRecord& r) {
  std::ostringstream row;
  row << r.round << ',';
  if (r.ma) row << format_fraction(*r.ma);
  row << ',';
  if (r.asr) row << format_fraction(*r.asr);
  row << ',' << r.removed.size() << ',';
  for (std::size_t i = 0; i < r.removed.size(); ++i) {
    if (i != 0) row << ';';
    row << r.removed[i];
  }
  row << ',' << static_cast<long long>(std::llround(r.wall_ms));
  return row.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

// Header plus one row per record: round,ma,asr,n_removed,removed_ids,wall_ms.
// MA/ASR are fractions with six decimals (empty on rounds not evaluated);
// removed ids are semicolon-joined.
inline void write_round_csv(const std::vector<RoundRecord>& records, const std::filesystem::path& path) {
  std::string text = std::string(kRoundCsvHeader) + "\n";
  for (const auto& r : records) text += format_round_row(r) + "\n";
  write_text(path, text);
}

// Binary PGM (P5, maxval 255) of a single-channel image in [0, 1], given as
// (H, W) or (H, W, 1).
inline std::vector<unsigned char> encode_pgm(const ad::Tensor& image) {
  const auto& s = image.shape();
  if (!(s.size() == 2 || (s.size() == 3 && s[2] == 1))) {
    throw ShapeError("dump_pgm: need a single-channel (H, W[, 1]) image, got " + ad::to_string(s));
  }
  const std::string header = "P5\n" + std::to_string(s[1]) + " " + std::to_string(s[0]) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : image.data()) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    bytes.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0)));
  }
  return bytes;
}

inline void dump_pgm(const ad::Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace fedtrig::harness
