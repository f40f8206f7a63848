#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadnet/core/image.hpp"
#include "fadnet/stenosis/detection.hpp"

namespace fadnet {

class PgmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class PgmFormatError : public PgmError {
 public:
  using PgmError::PgmError;
};
class PgmTruncatedError : public PgmError {
 public:
  using PgmError::PgmError;
};
class PgmMaxvalError : public PgmError {
 public:
  using PgmError::PgmError;
};
class MaskValueError : public PgmError {
 public:
  using PgmError::PgmError;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// Binary P5 with maxval 255.
inline Image8 decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& what = "pgm") {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw PgmFormatError(what + ": not a binary PGM (magic must be P5)");
  }
  pos = 2;
  auto next_int = [&](const char* field) {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size()) throw PgmTruncatedError(what + ": header ends before " + field);
    if (!std::isdigit(bytes[pos])) throw PgmFormatError(what + ": malformed " + std::string(field));
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) throw PgmFormatError(what + ": " + field + " out of range");
    }
    return v;
  };
  const long w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (w <= 0 || h <= 0) throw PgmFormatError(what + ": zero extent");
  if (maxval != 255) throw PgmMaxvalError(what + ": maxval " + std::to_string(maxval) + " (only 255 supported)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw PgmFormatError(what + ": missing separator after maxval");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < need) {
    throw PgmTruncatedError(what + ": payload has " + std::to_string(bytes.size() - pos) + " of " +
                            std::to_string(need) + " bytes");
  }
  Image8 img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  std::copy(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + need), img.pixels.begin());
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const Image8& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline Image8 read_pgm(const std::string& path) { return decode_pgm(read_file_bytes(path), path); }
inline void write_pgm(const Image8& img, const std::string& path) { write_file_bytes(path, encode_pgm(img)); }

/// Reads a {0,255} mask as 0/1.
inline Image8 read_mask(const std::string& path) {
  Image8 m = read_pgm(path);
  for (auto& v : m.pixels) {
    if (v != 0 && v != 255) throw MaskValueError(path + ": mask value " + std::to_string(v) + " not in {0,255}");
    v = v ? 1 : 0;
  }
  return m;
}

inline void write_mask(const Image8& mask, const std::string& path) {
  Image8 out(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.size(); ++i) out.pixels[i] = mask.pixels[i] ? 255 : 0;
  write_pgm(out, path);
}

/// RGB overlay: grayscale image, vessel mask tinted, stenosis points as
/// 5x5 squares colored green / blue / yellow / red by severity.
inline std::vector<std::uint8_t> encode_overlay_ppm(const Image8& image, const Image8& mask,
                                                    const std::vector<StenosisPoint>& points) {
  require_same_extent(image, mask, "overlay");
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + 3 * image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::uint8_t g = image.pixels[i];
    std::uint8_t* px = &out[base + 3 * i];
    px[0] = g;
    px[1] = g;
    px[2] = mask.pixels[i] ? static_cast<std::uint8_t>(std::min(255, g + 60)) : g;
  }
  for (const auto& p : points) {
    std::uint8_t c[3];
    switch (p.severity) {
      case Severity::minimal: c[0] = 0, c[1] = 200, c[2] = 0; break;
      case Severity::mild: c[0] = 0, c[1] = 80, c[2] = 255; break;
      case Severity::moderate: c[0] = 255, c[1] = 220, c[2] = 0; break;
      default: c[0] = 255, c[1] = 0, c[2] = 0; break;
    }
    for (long dy = -2; dy <= 2; ++dy)
      for (long dx = -2; dx <= 2; ++dx) {
        const long y = p.y + dy, x = p.x + dx;
        if (y < 0 || x < 0 || y >= static_cast<long>(image.height) || x >= static_cast<long>(image.width)) continue;
        std::uint8_t* px = &out[base + 3 * (static_cast<std::size_t>(y) * image.width + static_cast<std::size_t>(x))];
        px[0] = c[0], px[1] = c[1], px[2] = c[2];
      }
  }
  return out;
}

}  // namespace fadnet
