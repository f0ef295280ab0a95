#include "slm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "slm/geometry.hpp"
#include "slm/rng.hpp"

namespace slm {
namespace phantom {

namespace {

struct Shape {
  double cy, cx;       // center, px
  double a, b;         // semi-axes, px
  double angle;        // radians, principal direction in (row,col)
  double bend;         // bean warp factor
};

// Local coordinates: u along the major axis, v across it.
inline void to_local(const Shape& s, double r, double c, double& u, double& v) {
  const double dy = r - s.cy, dx = c - s.cx;
  u = dy * std::cos(s.angle) + dx * std::sin(s.angle);
  v = -dy * std::sin(s.angle) + dx * std::cos(s.angle);
}

inline bool inside(const Shape& s, double r, double c, double grow = 0.0) {
  double u, v;
  to_local(s, r, c, u, v);
  const double a = s.a + grow, b = s.b + grow;
  const double t = u / a;
  const double vs = v - s.bend * s.b * t * t;
  return t * t + (vs / b) * (vs / b) <= 1.0;
}

// Boundary point for parameter phi, world px coordinates.
inline void boundary_point(const Shape& s, double phi, double& r, double& c) {
  const double u = s.a * std::cos(phi);
  const double v = s.b * std::sin(phi) + s.bend * s.b * std::cos(phi) * std::cos(phi);
  r = s.cy + u * std::cos(s.angle) - v * std::sin(s.angle);
  c = s.cx + u * std::sin(s.angle) + v * std::cos(s.angle);
}

// Principal axis of the continuous shape from a dense interior sample
// (sub-pixel grid over the bounding box), then extent of the boundary
// projections onto that axis. Also reports the extreme boundary points.
void analytic_measurement(const Shape& s, double sy, double sx, double& length_mm,
                          double& length_px, double end_px[2][2]) {
  // covariance of interior points in mm coordinates, 4x sub-pixel sampling
  const double reach = s.a + std::abs(s.bend) * s.b + 2.0;
  double srr = 0.0, scc = 0.0, src = 0.0, mr = 0.0, mc = 0.0;
  std::size_t n = 0;
  const double step = 0.25;
  for (double r = s.cy - reach; r <= s.cy + reach; r += step) {
    for (double c = s.cx - reach; c <= s.cx + reach; c += step) {
      if (!inside(s, r, c)) continue;
      ++n;
      mr += r * sy;
      mc += c * sx;
    }
  }
  if (n == 0) throw std::runtime_error("phantom: degenerate shape");
  mr /= static_cast<double>(n);
  mc /= static_cast<double>(n);
  for (double r = s.cy - reach; r <= s.cy + reach; r += step) {
    for (double c = s.cx - reach; c <= s.cx + reach; c += step) {
      if (!inside(s, r, c)) continue;
      const double dr = r * sy - mr, dc = c * sx - mc;
      srr += dr * dr;
      scc += dc * dc;
      src += dr * dc;
    }
  }
  double ar, ac;
  const double disc = std::sqrt((srr - scc) * (srr - scc) + 4.0 * src * src);
  if (disc <= 1e-12 * std::max(srr + scc, 1e-300)) {
    ar = 1.0;
    ac = 0.0;
  } else {
    const double lmax = 0.5 * (srr + scc + disc);
    if (std::abs(lmax - scc) >= std::abs(lmax - srr)) {
      ar = lmax - scc;
      ac = src;
    } else {
      ar = src;
      ac = lmax - srr;
    }
    const double nn = std::hypot(ar, ac);
    ar /= nn;
    ac /= nn;
  }

  const int K = 10000;
  double lo = 0.0, hi = 0.0, lo_px = 0.0, hi_px = 0.0;
  for (int k = 0; k < K; ++k) {
    const double phi = 2.0 * M_PI * k / K;
    double r, c;
    boundary_point(s, phi, r, c);
    const double pmm = r * sy * ar + c * sx * ac;
    const double ppx = r * ar + c * ac;
    if (k == 0 || pmm < lo) lo = pmm;
    if (k == 0 || pmm > hi) hi = pmm;
    if (k == 0 || ppx < lo_px) {
      lo_px = ppx;
      end_px[0][0] = r;
      end_px[0][1] = c;
    }
    if (k == 0 || ppx > hi_px) {
      hi_px = ppx;
      end_px[1][0] = r;
      end_px[1][1] = c;
    }
  }
  length_mm = hi - lo;
  length_px = hi_px - lo_px;
}

// Number of cases per patient: one 4-case and one 3-case patient, a band of
// 2-case patients, singletons for the rest. For count=108 this yields 93
// distinct patients, mirroring the clinical 108-images/93-patients split.
std::vector<int> patient_sizes(int count) {
  std::vector<int> sizes;
  int remaining = count;
  if (count >= 12) {
    sizes.push_back(4);
    sizes.push_back(3);
    remaining -= 7;
    int twos = (count - 7) / 10;
    for (int i = 0; i < twos && remaining >= 2 + 1; ++i) {
      sizes.push_back(2);
      remaining -= 2;
    }
  }
  while (remaining > 0) {
    sizes.push_back(1);
    --remaining;
  }
  return sizes;
}

void burn_cross(GrayImage& img, BinaryMask& defect, double ry, double cx_) {
  const int r0 = static_cast<int>(std::lround(ry));
  const int c0 = static_cast<int>(std::lround(cx_));
  for (int d = -2; d <= 2; ++d) {
    for (auto [rr, cc] : {std::pair{r0 + d, c0 + d}, std::pair{r0 + d, c0 - d}}) {
      if (rr >= 2 && rr < img.height - 2 && cc >= 2 && cc < img.width - 2) {
        img.at(rr, cc) = 1.0;
        defect.set(rr, cc, true);
      }
    }
  }
}

}  // namespace

void PhantomConfig::validate() const {
  if (count < 1) throw std::invalid_argument("phantom: count must be >= 1");
  if (height < 16 || width < 16) throw std::invalid_argument("phantom: image too small");
  if (sy <= 0.0 || sx <= 0.0) throw std::invalid_argument("phantom: spacing must be > 0");
  if (!(semi_major_min > semi_minor_max))
    throw std::invalid_argument("phantom: semi-major range must exceed semi-minor range");
  if (semi_major_max * 2.0 + 8.0 > std::max(height, width))
    throw std::invalid_argument("phantom: semi-major range does not fit inside the image");
  if (contrast_delta <= 0.0) throw std::invalid_argument("phantom: contrast delta must be > 0");
  if (speckle_strength < 0.0) throw std::invalid_argument("phantom: speckle must be >= 0");
}

PhantomSet generate(const PhantomConfig& cfg) {
  cfg.validate();
  const int H = cfg.height, W = cfg.width;
  const auto sizes = patient_sizes(cfg.count);

  PhantomSet out;
  out.samples.reserve(static_cast<std::size_t>(cfg.count));

  int patient = 0, left_in_patient = sizes.empty() ? cfg.count : sizes[0];
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng = Rng::keyed({cfg.master_seed, static_cast<std::uint64_t>(i)});

    Shape s{};
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      s.a = rng.uniform(cfg.semi_major_min, cfg.semi_major_max);
      s.b = rng.uniform(cfg.semi_minor_min, cfg.semi_minor_max);
      s.angle = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
      s.bend = rng.uniform(0.0, cfg.bend_max);
      s.cy = H / 2.0 + rng.uniform(-0.08, 0.08) * H;
      s.cx = W / 2.0 + rng.uniform(-0.08, 0.08) * W;
      // must fit with room for the fat band and caliper arms
      const double reach = s.a + std::abs(s.bend) * s.b + 5.0;
      placed = s.cy - reach >= 0 && s.cy + reach < H && s.cx - reach >= 0 && s.cx + reach < W;
    }
    if (!placed) throw std::runtime_error("phantom: could not place shape within image bounds");

    BinaryMask mask(H, W, cfg.sy, cfg.sx);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        if (inside(s, r, c)) mask.set(r, c, true);

    double length_mm = 0.0, length_px = 0.0, ends[2][2] = {};
    analytic_measurement(s, cfg.sy, cfg.sx, length_mm, length_px, ends);

    // generator self-check against the measurement pipeline
    auto measured = geometry::measure_mask(mask);
    if (!measured || std::abs(measured->length_px - length_px) > 2.0)
      throw std::runtime_error("phantom: mask-measured length deviates from analytic length");

    // render: base levels, fat band, speckle, depth attenuation
    const double spleen_level = 0.55;
    const double fat_level = spleen_level - cfg.contrast_delta;
    const double bg_level = 0.25;
    GrayImage img(H, W, bg_level, cfg.sy, cfg.sx);
    // mild smooth background variation
    const double gy = rng.uniform(-0.03, 0.03), gx = rng.uniform(-0.03, 0.03);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        double v = bg_level + gy * (r - H / 2.0) / H + gx * (c - W / 2.0) / W;
        if (mask.at(r, c))
          v = spleen_level;
        else if (inside(s, r, c, 3.0))
          v = fat_level;
        img.at(r, c) = v;
      }
    }
    if (cfg.speckle_strength > 0.0) {
      const double k = 1.0 / cfg.speckle_strength;
      for (double& v : img.pix) v *= rng.gamma(k, cfg.speckle_strength);
    }
    for (int r = 0; r < H; ++r) {
      const double atten = 1.0 - 0.3 * r / (H - 1);
      for (int c = 0; c < W; ++c) img.at(r, c) = std::clamp(img.at(r, c) * atten, 0.0, 1.0);
    }

    BinaryMask defect(H, W, cfg.sy, cfg.sx);
    if (cfg.burn_calipers) {
      burn_cross(img, defect, ends[0][0], ends[0][1]);
      burn_cross(img, defect, ends[1][0], ends[1][1]);
    }

    Sample sample;
    sample.image = std::move(img);
    sample.mask = std::move(mask);
    sample.length_mm = length_mm;
    sample.length_px = length_px;
    sample.case_id = i;
    sample.patient_id = patient;
    out.samples.push_back(std::move(sample));
    if (cfg.burn_calipers) out.caliper_masks.push_back(std::move(defect));

    if (--left_in_patient == 0 && patient + 1 < static_cast<int>(sizes.size()))
      left_in_patient = sizes[static_cast<std::size_t>(++patient)];
  }
  return out;
}

}  // namespace phantom
}  // namespace slm
