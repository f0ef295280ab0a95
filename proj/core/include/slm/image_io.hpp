#pragma once

#include <string>

#include "slm/image.hpp"

namespace slm {

/// 16-bit grayscale PNG; intensities mapped [0,1] <-> [0,65535].
/// Spacing is not stored in the file (the dataset manifest carries it).
void write_image_png(const std::string& path, const GrayImage& img);
GrayImage read_image_png(const std::string& path);

/// 8-bit PNG, 0 = background, 255 = foreground.
void write_mask_png(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::string& path);

}  // namespace slm
