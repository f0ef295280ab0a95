#pragma once

#include "slm/dataset.hpp"
#include "slm/image.hpp"
#include "slm/rng.hpp"

namespace slm {
namespace preprocess {

/// Fills the defect region with the solution of the discrete biharmonic
/// equation (13-point stencil), clamped to the surrounding intact values,
/// solved iteratively to residual inf-norm < 1e-6. Non-defect pixels are
/// unchanged; running it twice with the same defect is a no-op the second
/// time. Throws if the defect comes within 2 px of the border, covers
/// >= 20% of the image, or the solver does not converge within the
/// iteration cap.
GrayImage inpaint_biharmonic(const GrayImage& image, const BinaryMask& defect);

/// Per-image z-score mapped affinely so mean -> 0.5 and +-3 sd -> [0,1],
/// clipped. A constant image maps to uniform 0.5.
GrayImage normalize_intensity(const GrayImage& image);

/// Pointwise u^gamma; gamma must be > 0.
GrayImage gamma_correct(const GrayImage& image, double gamma);

/// Tile-based adaptive histogram equalization (CLAHE): per-tile clipped
/// histogram mapping with bilinear blending between tile mappings.
/// clip_limit is the fraction of each tile's histogram mass a single bin
/// may hold; the excess is redistributed uniformly.
GrayImage adaptive_equalize(const GrayImage& image, int tiles = 8, double clip_limit = 0.01);

/// Rotation about the image center, out-of-bounds filled with 0.
/// Images interpolate bilinearly, masks nearest-neighbor. |degrees| <= 45.
GrayImage rotate_image(const GrayImage& image, double degrees);
BinaryMask rotate_mask(const BinaryMask& mask, double degrees);

struct AugmentationSpec {
  double rotation_min_deg = -20.0;
  double rotation_max_deg = 20.0;
  double gamma_min = 0.7;
  double gamma_max = 1.5;
  double equalize_probability = 0.5;
};

/// Draws (angle, gamma, equalize?) from the keyed stream and applies spatial
/// transforms to image+mask jointly, intensity transforms to the image only.
/// The sample's stored ground-truth lengths are left untouched.
Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng rng);

}  // namespace preprocess
}  // namespace slm
