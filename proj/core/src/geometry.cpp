#include "slm/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace slm {
namespace geometry {

BinaryMask largest_component(const BinaryMask& mask) {
  const int H = mask.height, W = mask.width;
  std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
  std::vector<std::size_t> counts;
  std::vector<std::size_t> stack;

  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * W + c;
      if (!mask.bits[idx] || label[idx] >= 0) continue;
      const int lab = static_cast<int>(counts.size());
      counts.push_back(0);
      label[idx] = lab;
      stack.push_back(idx);
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        ++counts[static_cast<std::size_t>(lab)];
        const int cr = static_cast<int>(cur) / W, cc = static_cast<int>(cur) % W;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int nr = cr + dr, nc = cc + dc;
            if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
            const std::size_t ni = static_cast<std::size_t>(nr) * W + nc;
            if (mask.bits[ni] && label[ni] < 0) {
              label[ni] = lab;
              stack.push_back(ni);
            }
          }
        }
      }
    }
  }

  BinaryMask out(H, W, mask.sy, mask.sx);
  if (counts.empty()) return out;
  int best = 0;
  for (int l = 1; l < static_cast<int>(counts.size()); ++l)
    if (counts[static_cast<std::size_t>(l)] > counts[static_cast<std::size_t>(best)]) best = l;
  for (std::size_t i = 0; i < label.size(); ++i) out.bits[i] = label[i] == best ? 1 : 0;
  return out;
}

AxisMeasurement principal_axis(const BinaryMask& mask) {
  const int H = mask.height, W = mask.width;
  std::size_t n = 0;
  double sr = 0.0, sc = 0.0;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!mask.at(r, c)) continue;
      ++n;
      sr += r * mask.sy;
      sc += c * mask.sx;
    }
  }
  if (n < 2) throw std::invalid_argument("principal_axis: mask must have at least 2 pixels");
  const double mr = sr / static_cast<double>(n), mc = sc / static_cast<double>(n);

  double srr = 0.0, scc = 0.0, src = 0.0;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!mask.at(r, c)) continue;
      const double dr = r * mask.sy - mr, dc = c * mask.sx - mc;
      srr += dr * dr;
      scc += dc * dc;
      src += dr * dc;
    }
  }
  srr /= static_cast<double>(n);
  scc /= static_cast<double>(n);
  src /= static_cast<double>(n);

  AxisMeasurement m;
  m.centroid_row = mr / mask.sy;
  m.centroid_col = mc / mask.sx;

  const double disc = std::sqrt((srr - scc) * (srr - scc) + 4.0 * src * src);
  double ar, ac;
  if (disc <= 1e-12 * std::max(srr + scc, 1e-300)) {
    // isotropic blob: eigenvalue tie, canonical direction
    ar = 1.0;
    ac = 0.0;
  } else if (src == 0.0) {
    ar = srr >= scc ? 1.0 : 0.0;
    ac = srr >= scc ? 0.0 : 1.0;
  } else {
    const double lmax = 0.5 * (srr + scc + disc);
    // eigenvector of [[srr,src],[src,scc]] for lmax; pick the better-conditioned form
    if (std::abs(lmax - scc) >= std::abs(lmax - srr)) {
      ar = lmax - scc;
      ac = src;
    } else {
      ar = src;
      ac = lmax - srr;
    }
    const double norm = std::hypot(ar, ac);
    ar /= norm;
    ac /= norm;
  }
  if (ar < 0.0 || (ar == 0.0 && ac < 0.0)) {
    ar = -ar;
    ac = -ac;
  }
  m.axis_row = ar;
  m.axis_col = ac;
  return m;
}

void length_along_axis(const BinaryMask& mask, double axis_row, double axis_col,
                       double& length_mm, double& length_px) {
  const double norm = std::hypot(axis_row, axis_col);
  if (std::abs(norm - 1.0) > 1e-9)
    throw std::invalid_argument("length_along_axis: axis must be a unit vector");
  bool any = false;
  double lo_mm = 0.0, hi_mm = 0.0, lo_px = 0.0, hi_px = 0.0;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      const double pmm = r * mask.sy * axis_row + c * mask.sx * axis_col;
      const double ppx = r * axis_row + c * axis_col;
      if (!any) {
        lo_mm = hi_mm = pmm;
        lo_px = hi_px = ppx;
        any = true;
      } else {
        lo_mm = std::min(lo_mm, pmm);
        hi_mm = std::max(hi_mm, pmm);
        lo_px = std::min(lo_px, ppx);
        hi_px = std::max(hi_px, ppx);
      }
    }
  }
  if (!any) throw std::invalid_argument("length_along_axis: empty mask");
  length_mm = hi_mm - lo_mm;
  length_px = hi_px - lo_px;
}

std::optional<AxisMeasurement> measure_mask(const BinaryMask& mask) {
  BinaryMask largest = largest_component(mask);
  if (largest.empty_mask()) return std::nullopt;
  if (largest.count() == 1) {
    AxisMeasurement m;
    for (int r = 0; r < largest.height; ++r)
      for (int c = 0; c < largest.width; ++c)
        if (largest.at(r, c)) {
          m.centroid_row = r;
          m.centroid_col = c;
        }
    m.axis_row = 1.0;
    m.axis_col = 0.0;
    m.length_mm = 0.0;
    m.length_px = 0.0;
    return m;
  }
  AxisMeasurement m = principal_axis(largest);
  length_along_axis(largest, m.axis_row, m.axis_col, m.length_mm, m.length_px);
  return m;
}

}  // namespace geometry
}  // namespace slm
