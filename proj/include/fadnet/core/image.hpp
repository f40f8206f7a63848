#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadnet/core/tensor.hpp"

namespace fadnet {

/// 8-bit single-channel raster. Binary masks use 0 / nonzero.
struct Image8 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool on(long y, long x) const {
    return y >= 0 && x >= 0 && y < static_cast<long>(height) && x < static_cast<long>(width) &&
           pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] != 0;
  }
  std::size_t size() const { return pixels.size(); }
  bool operator==(const Image8&) const = default;
};

inline void require_same_extent(const Image8& a, const Image8& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(op) + ": extent " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

/// Maps nonzero to 1.
inline Image8 binarized(const Image8& m) {
  Image8 out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.pixels[i] = m.pixels[i] ? 1 : 0;
  return out;
}

/// Stacks images into an (n,1,h,w) tensor scaled to [0,1].
template <typename T>
Tensor4<T> images_to_tensor(const std::vector<const Image8*>& images, double scale = 1.0 / 255.0) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  Tensor4<T> t(images.size(), 1, images[0]->height, images[0]->width);
  for (std::size_t n = 0; n < images.size(); ++n) {
    require_same_extent(*images[0], *images[n], "images_to_tensor");
    T* p = t.plane(n, 0);
    for (std::size_t i = 0; i < images[n]->size(); ++i) p[i] = static_cast<T>(images[n]->pixels[i] * scale);
  }
  return t;
}

/// Thresholds channel 0 of sample n at `threshold` (strictly greater is foreground).
template <typename T>
Image8 threshold_plane(const Tensor4<T>& t, std::size_t n, double threshold = 0.5) {
  Image8 out(t.h(), t.w());
  const T* p = t.plane(n, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = p[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace fadnet
