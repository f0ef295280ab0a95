#pragma once

#include <cstdint>
#include <vector>

#include "slm/dataset.hpp"
#include "slm/image.hpp"

namespace slm {
namespace phantom {

/// Configuration for the synthetic spleen phantom generator. Lengths are in
/// pixels; spacing converts to mm. Every sample is a pure function of
/// (master_seed, case index).
struct PhantomConfig {
  int height = 64;
  int width = 96;
  double sy = 1.0;  // mm per pixel, rows
  double sx = 1.0;  // mm per pixel, cols
  double semi_major_min = 14.0;
  double semi_major_max = 25.0;
  double semi_minor_min = 6.0;
  double semi_minor_max = 11.0;
  double bend_max = 0.15;          // bean-shape warp factor
  double contrast_delta = 0.2;     // intensity contrast spleen vs fat band
  double speckle_strength = 0.1;   // variance of the mean-1 multiplicative noise
  bool burn_calipers = false;      // burn caliper crosses at the endpoints
  int count = 108;
  std::uint64_t master_seed = 7;

  void validate() const;
};

struct PhantomSet {
  std::vector<Sample> samples;
  /// Per-sample masks of burned caliper pixels; empty when burn_calipers is off.
  std::vector<BinaryMask> caliper_masks;
};

/// Deterministic generator. Each case rasterizes a rotated, optionally bent
/// ellipse; the analytic ground-truth length is the extent of the continuous
/// shape along its principal axis (dense sampling), and the generator
/// self-checks that the mask-measured length agrees within 2 px.
PhantomSet generate(const PhantomConfig& config);

}  // namespace phantom
}  // namespace slm
