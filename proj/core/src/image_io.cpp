#include "slm/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slm {

namespace {
// Fixed PNG options so identical pixels produce identical bytes.
const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};
}  // namespace

void write_image_png(const std::string& path, const GrayImage& img) {
  cv::Mat m(img.height, img.width, CV_16UC1);
  for (int r = 0; r < img.height; ++r) {
    auto* row = m.ptr<std::uint16_t>(r);
    for (int c = 0; c < img.width; ++c) {
      double v = std::clamp(img.at(r, c), 0.0, 1.0);
      row[c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  if (!cv::imwrite(path, m, kPngParams))
    throw std::runtime_error("failed to write image: " + path);
}

GrayImage read_image_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("failed to read image: " + path);
  if (m.channels() != 1) throw std::runtime_error("expected grayscale image: " + path);
  GrayImage img(m.rows, m.cols);
  if (m.depth() == CV_16U) {
    for (int r = 0; r < m.rows; ++r) {
      const auto* row = m.ptr<std::uint16_t>(r);
      for (int c = 0; c < m.cols; ++c) img.at(r, c) = row[c] / 65535.0;
    }
  } else if (m.depth() == CV_8U) {
    for (int r = 0; r < m.rows; ++r) {
      const auto* row = m.ptr<std::uint8_t>(r);
      for (int c = 0; c < m.cols; ++c) img.at(r, c) = row[c] / 255.0;
    }
  } else {
    throw std::runtime_error("unsupported image depth: " + path);
  }
  return img;
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int r = 0; r < mask.height; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width; ++c) row[c] = mask.at(r, c) ? 255 : 0;
  }
  if (!cv::imwrite(path, m, kPngParams))
    throw std::runtime_error("failed to write mask: " + path);
}

BinaryMask read_mask_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("failed to read mask: " + path);
  BinaryMask mask(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < m.cols; ++c) mask.set(r, c, row[c] >= 128);
  }
  return mask;
}

}  // namespace slm
