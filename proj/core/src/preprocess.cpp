#include "slm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace slm {
namespace preprocess {

namespace {

// 13-point discrete biharmonic stencil.
struct StencilTap {
  int dr, dc;
  double w;
};
constexpr StencilTap kBiharmonic[] = {
    {0, 0, 20.0}, {-1, 0, -8.0}, {1, 0, -8.0},  {0, -1, -8.0}, {0, 1, -8.0},
    {-1, -1, 2.0}, {-1, 1, 2.0}, {1, -1, 2.0},  {1, 1, 2.0},
    {-2, 0, 1.0},  {2, 0, 1.0},  {0, -2, 1.0},  {0, 2, 1.0},
};

}  // namespace

GrayImage inpaint_biharmonic(const GrayImage& image, const BinaryMask& defect) {
  if (defect.height != image.height || defect.width != image.width)
    throw std::invalid_argument("inpaint: defect mask shape mismatch");
  const int H = image.height, W = image.width;

  std::vector<std::size_t> unknowns;  // flat indices of defect pixels
  std::vector<int> idx_of(static_cast<std::size_t>(H) * W, -1);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!defect.at(r, c)) continue;
      if (r < 2 || r >= H - 2 || c < 2 || c >= W - 2)
        throw std::invalid_argument("inpaint: defect region touches the image border");
      idx_of[static_cast<std::size_t>(r) * W + c] = static_cast<int>(unknowns.size());
      unknowns.push_back(static_cast<std::size_t>(r) * W + c);
    }
  }
  const std::size_t n = unknowns.size();
  if (n == 0) return image;
  if (static_cast<double>(n) >= 0.2 * static_cast<double>(H) * W)
    throw std::invalid_argument("inpaint: defect covers 20% or more of the image");

  GrayImage out = image;

  // Solve A u = b on defect pixels with conjugate gradients, where A is the
  // biharmonic stencil restricted to unknowns (SPD) and b collects the
  // clamped contributions of the surrounding intact pixels. The initial
  // guess is the current content, so an already-solved defect returns as-is.
  auto apply_stencil_unknowns = [&](const std::vector<double>& u, std::vector<double>& Au) {
    for (std::size_t i = 0; i < n; ++i) {
      const int r = static_cast<int>(unknowns[i]) / W;
      const int c = static_cast<int>(unknowns[i]) % W;
      double s = 0.0;
      for (const auto& t : kBiharmonic) {
        const int j = idx_of[static_cast<std::size_t>(r + t.dr) * W + (c + t.dc)];
        if (j >= 0) s += t.w * u[static_cast<std::size_t>(j)];
      }
      Au[i] = s;
    }
  };

  std::vector<double> b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int r = static_cast<int>(unknowns[i]) / W;
    const int c = static_cast<int>(unknowns[i]) % W;
    double s = 0.0;
    for (const auto& t : kBiharmonic) {
      const std::size_t fi = static_cast<std::size_t>(r + t.dr) * W + (c + t.dc);
      if (idx_of[fi] < 0) s += t.w * image.pix[fi];
    }
    b[i] = -s;
  }

  std::vector<double> u(n), r_(n), p(n), Ap(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = image.pix[unknowns[i]];
  apply_stencil_unknowns(u, Ap);
  double rr = 0.0, rinf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r_[i] = b[i] - Ap[i];
    rr += r_[i] * r_[i];
    rinf = std::max(rinf, std::abs(r_[i]));
  }
  p = r_;

  const double tol = 1e-6;
  const std::size_t cap = 50 * n;
  std::size_t it = 0;
  while (rinf >= tol) {
    if (it++ >= cap) throw std::runtime_error("inpaint: solver did not converge within cap");
    apply_stencil_unknowns(p, Ap);
    double pAp = 0.0;
    for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    const double alpha = rr / pAp;
    double rr_new = 0.0;
    rinf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += alpha * p[i];
      r_[i] -= alpha * Ap[i];
      rr_new += r_[i] * r_[i];
      rinf = std::max(rinf, std::abs(r_[i]));
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r_[i] + beta * p[i];
  }

  for (std::size_t i = 0; i < n; ++i) out.pix[unknowns[i]] = u[i];
  return out;
}

GrayImage normalize_intensity(const GrayImage& image) {
  const std::size_t n = image.pix.size();
  if (n == 0) throw std::invalid_argument("normalize_intensity: empty image");
  double mean = 0.0;
  for (double v : image.pix) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : image.pix) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  GrayImage out = image;
  if (var == 0.0) {
    std::fill(out.pix.begin(), out.pix.end(), 0.5);
    return out;
  }
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (image.pix[i] - mean) / sd;
    out.pix[i] = std::clamp(0.5 + z / 6.0, 0.0, 1.0);
  }
  return out;
}

GrayImage gamma_correct(const GrayImage& image, double gamma) {
  if (gamma <= 0.0) throw std::invalid_argument("gamma_correct: gamma must be > 0");
  GrayImage out = image;
  for (double& v : out.pix) v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
  return out;
}

GrayImage adaptive_equalize(const GrayImage& image, int tiles, double clip_limit) {
  if (tiles < 1) throw std::invalid_argument("adaptive_equalize: tiles must be >= 1");
  const int H = image.height, W = image.width;
  constexpr int kBins = 256;
  const int th = (H + tiles - 1) / tiles;
  const int tw = (W + tiles - 1) / tiles;
  const int ty_n = (H + th - 1) / th;
  const int tx_n = (W + tw - 1) / tw;

  auto bin_of = [](double v) {
    int b = static_cast<int>(std::clamp(v, 0.0, 1.0) * kBins);
    return std::min(b, kBins - 1);
  };

  // Per-tile clipped-histogram CDF mappings, bin -> [0,1].
  std::vector<std::vector<double>> mapping(static_cast<std::size_t>(ty_n) * tx_n);
  for (int ty = 0; ty < ty_n; ++ty) {
    for (int tx = 0; tx < tx_n; ++tx) {
      const int r0 = ty * th, r1 = std::min(H, r0 + th);
      const int c0 = tx * tw, c1 = std::min(W, c0 + tw);
      const double npx = static_cast<double>(r1 - r0) * (c1 - c0);
      std::vector<double> hist(kBins, 0.0);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) hist[static_cast<std::size_t>(bin_of(image.at(r, c)))] += 1.0;
      const double limit = clip_limit * npx;
      double excess = 0.0;
      for (double& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      const double redistribute = excess / kBins;
      for (double& h : hist) h += redistribute;
      std::vector<double>& map = mapping[static_cast<std::size_t>(ty) * tx_n + tx];
      map.resize(kBins);
      double cdf = 0.0;
      for (int bVal = 0; bVal < kBins; ++bVal) {
        cdf += hist[static_cast<std::size_t>(bVal)];
        map[static_cast<std::size_t>(bVal)] = cdf / npx;
      }
    }
  }

  GrayImage out = image;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const int b = bin_of(image.at(r, c));
      // position relative to tile centers for bilinear blending
      const double fy = (r - th / 2.0) / th;
      const double fx = (c - tw / 2.0) / tw;
      int ty0 = static_cast<int>(std::floor(fy));
      int tx0 = static_cast<int>(std::floor(fx));
      const double wy = fy - ty0;
      const double wx = fx - tx0;
      const int ty1 = std::clamp(ty0 + 1, 0, ty_n - 1);
      const int tx1 = std::clamp(tx0 + 1, 0, tx_n - 1);
      ty0 = std::clamp(ty0, 0, ty_n - 1);
      tx0 = std::clamp(tx0, 0, tx_n - 1);
      auto m = [&](int ty, int tx) {
        return mapping[static_cast<std::size_t>(ty) * tx_n + tx][static_cast<std::size_t>(b)];
      };
      out.at(r, c) = (1.0 - wy) * ((1.0 - wx) * m(ty0, tx0) + wx * m(ty0, tx1)) +
                     wy * ((1.0 - wx) * m(ty1, tx0) + wx * m(ty1, tx1));
    }
  }
  return out;
}

namespace {

void check_angle(double degrees) {
  if (std::abs(degrees) > 45.0)
    throw std::invalid_argument("rotate: |degrees| must be <= 45");
}

}  // namespace

GrayImage rotate_image(const GrayImage& image, double degrees) {
  check_angle(degrees);
  if (degrees == 0.0) return image;
  const int H = image.height, W = image.width;
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double rad = degrees * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  GrayImage out(H, W, 0.0, image.sy, image.sx);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      // inverse rotation of the output coordinate
      const double dy = r - cy, dx = c - cx;
      const double sy_ = ca * dy + sa * dx + cy;
      const double sx_ = -sa * dy + ca * dx + cx;
      const int y0 = static_cast<int>(std::floor(sy_));
      const int x0 = static_cast<int>(std::floor(sx_));
      const double fy = sy_ - y0, fx = sx_ - x0;
      auto px = [&](int y, int x) -> double {
        return (y >= 0 && y < H && x >= 0 && x < W) ? image.at(y, x) : 0.0;
      };
      out.at(r, c) = (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                     fy * ((1.0 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
    }
  }
  return out;
}

BinaryMask rotate_mask(const BinaryMask& mask, double degrees) {
  check_angle(degrees);
  if (degrees == 0.0) return mask;
  const int H = mask.height, W = mask.width;
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double rad = degrees * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  BinaryMask out(H, W, mask.sy, mask.sx);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double dy = r - cy, dx = c - cx;
      const int sy_ = static_cast<int>(std::lround(ca * dy + sa * dx + cy));
      const int sx_ = static_cast<int>(std::lround(-sa * dy + ca * dx + cx));
      if (sy_ >= 0 && sy_ < H && sx_ >= 0 && sx_ < W) out.set(r, c, mask.at(sy_, sx_));
    }
  }
  return out;
}

Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng rng) {
  const double angle = rng.uniform(spec.rotation_min_deg, spec.rotation_max_deg);
  const double gamma = rng.uniform(spec.gamma_min, spec.gamma_max);
  const bool equalize = rng.bernoulli(spec.equalize_probability);

  Sample out = sample;
  out.image = rotate_image(sample.image, angle);
  if (sample.mask) out.mask = rotate_mask(*sample.mask, angle);
  if (equalize) out.image = adaptive_equalize(out.image);
  out.image = gamma_correct(out.image, gamma);
  return out;
}

}  // namespace preprocess
}  // namespace slm
