#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slm/image.hpp"

namespace slm {

/// One case: image, optional ground-truth mask, ground-truth length and
/// patient/case grouping ids.
struct Sample {
  GrayImage image;
  std::optional<BinaryMask> mask;
  double length_mm = 0.0;
  double length_px = 0.0;
  int patient_id = 0;
  int case_id = 0;
};

/// Directory layout: manifest.csv, images/, masks/. The manifest carries
/// columns (case_id, patient_id, image_path, mask_path, sy_mm, sx_mm,
/// length_mm, length_px); lengths round-trip exactly as decimal strings.
/// The master seed, when known, is recorded in a leading '#' comment.
void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   std::uint64_t master_seed = 0);

std::vector<Sample> read_dataset(const std::string& dir);

}  // namespace slm
