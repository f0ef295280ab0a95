#pragma once

#include <cstdint>
#include <vector>

namespace slm {

/// 2-D grayscale image, float64 intensities in [0,1], row-major, with
/// physical pixel spacing in mm/pixel (sy rows, sx columns).
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pix;
  double sy = 1.0;
  double sx = 1.0;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0, double sy_ = 1.0, double sx_ = 1.0)
      : height(h), width(w), pix(static_cast<std::size_t>(h) * w, fill), sy(sy_), sx(sx_) {}

  double& at(int r, int c) { return pix[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pix[static_cast<std::size_t>(r) * width + c]; }
};

/// Boolean foreground mask with the same spacing convention as GrayImage.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;
  double sy = 1.0;
  double sx = 1.0;

  BinaryMask() = default;
  BinaryMask(int h, int w, double sy_ = 1.0, double sx_ = 1.0)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0), sy(sy_), sx(sx_) {}

  void set(int r, int c, bool v) { bits[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0; }
  bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c] != 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty_mask() const { return count() == 0; }
};

}  // namespace slm
