#pragma once

#include <optional>

#include "slm/image.hpp"

namespace slm {
namespace geometry {

/// Centroid, unit principal axis and projection-range length of a mask.
/// Coordinates follow the (row, col) convention; the axis is canonicalized so
/// its first nonzero component is non-negative.
struct AxisMeasurement {
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  double axis_row = 0.0;  // unit vector, mm space
  double axis_col = 0.0;
  double length_px = 0.0;
  double length_mm = 0.0;
};

/// Keeps only the largest 8-connected foreground component. Ties broken by
/// the smallest label in row-major scan order. Empty in, empty out.
BinaryMask largest_component(const BinaryMask& mask);

/// Principal axis of the pixel-center coordinates in mm space: eigenvector of
/// the 2x2 coordinate covariance with the largest eigenvalue. An isotropic
/// blob (eigenvalue tie) resolves to the canonical (1,0) direction.
/// Throws std::invalid_argument for masks with fewer than 2 pixels.
AxisMeasurement principal_axis(const BinaryMask& mask);

/// Range (max - min) of pixel-center projections onto the given unit axis.
/// length_mm projects mm coordinates; length_px projects raw pixel indices.
void length_along_axis(const BinaryMask& mask, double axis_row, double axis_col,
                       double& length_mm, double& length_px);

/// largest_component -> principal_axis -> length_along_axis.
/// Returns nullopt when the mask is empty after component filtering
/// ("no spleen found").
std::optional<AxisMeasurement> measure_mask(const BinaryMask& mask);

}  // namespace geometry
}  // namespace slm
