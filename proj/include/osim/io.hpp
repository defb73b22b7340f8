#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "osim/error.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"

namespace osim::io {

namespace fs = std::filesystem;

/// OpenCV stores colour as BGR(A); maps an RGB(A) channel index to it.
constexpr int swap_rb(int c, int channels) noexcept { return channels >= 3 && c < 3 ? 2 - c : c; }

/// Decodes an 8-bit PNG/JPEG into RGB(A) or single-channel floats in [0,1].
inline Image load_image(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::FileNotFound, path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorKind::Io, "cannot decode image " + path.string());
  if (m.depth() != CV_8U) {
    cv::Mat tmp;
    m.convertTo(tmp, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    m = tmp;
  }
  const int ch = m.channels();
  Image img(m.cols, m.rows, ch);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < ch; ++c) img.at(x, y, c) = row[x * ch + swap_rb(c, ch)] / 255.0f;
  }
  return img;
}

/// Quantizes to 8 bits and encodes by file extension (.png / .jpg).
inline void save_image(const fs::path& path, const Image& img) {
  if (img.empty()) fail(ErrorKind::EmptyImage, "cannot save an empty image");
  cv::Mat m(img.height, img.width, CV_8UC(img.channels));
  const int ch = img.channels;
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < ch; ++c)
        row[x * ch + swap_rb(c, ch)] =
            static_cast<std::uint8_t>(std::lround(std::clamp(img.at(x, y, c), 0.0f, 1.0f) * 255.0f));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp" + path.extension().string();
  if (!cv::imwrite(tmp.string(), m)) fail(ErrorKind::Io, "cannot write image " + path.string());
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Feature dump: "OSFM", u32 version (1), u32 W, u32 H, u32 D, then W*H*D
// float32 values in cell-major (HWC) order. Everything little-endian.

inline constexpr char kFeatureMagic[4] = {'O', 'S', 'F', 'M'};

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
}  // namespace detail

inline std::string encode_feature_map(const FeatureMap& f) {
  std::string out(kFeatureMagic, 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(f.width));
  detail::put_u32(out, static_cast<std::uint32_t>(f.height));
  detail::put_u32(out, static_cast<std::uint32_t>(f.depth));
  for (float v : f.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline FeatureMap decode_feature_map(std::span<const char> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
    fail(ErrorKind::UnsupportedModelFormat, "not a feature dump (bad magic)");
  if (detail::get_u32(bytes.data() + 4) != 1) fail(ErrorKind::UnsupportedModelFormat, "unknown feature dump version");
  const auto w = detail::get_u32(bytes.data() + 8), h = detail::get_u32(bytes.data() + 12),
             d = detail::get_u32(bytes.data() + 16);
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h * d;
  if (n == 0 || bytes.size() != 20 + n * 4) fail(ErrorKind::UnsupportedModelFormat, "feature dump length mismatch");
  FeatureMap f(static_cast<int>(w), static_cast<int>(h), static_cast<int>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    f.data[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + 20 + i * 4));
  f.check_valid();
  return f;
}

inline void save_feature_map(const fs::path& path, const FeatureMap& f) { write_atomic(path, encode_feature_map(f)); }

inline FeatureMap load_feature_map(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return decode_feature_map(bytes);
}

}  // namespace osim::io
