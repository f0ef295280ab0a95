#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slm/metrics.hpp"
#include "slm/preprocess.hpp"
#include "slm/rng.hpp"

using namespace slm;

namespace {

GrayImage ramp_image(int h, int w, double gr, double gc, double offset) {
  GrayImage img(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.at(r, c) = offset + gr * r + gc * c;
  return img;
}

}  // namespace

TEST_CASE("inpaint restores an affine ramp to < 1e-4 inside the defect") {
  // affine functions are biharmonic, so the exact solution is the ramp itself
  GrayImage img = ramp_image(24, 30, 0.01, 0.02, 0.1);
  GrayImage truth = img;
  BinaryMask defect(24, 30);
  for (int r = 9; r <= 14; ++r)
    for (int c = 12; c <= 18; ++c) {
      defect.set(r, c, true);
      img.at(r, c) = 0.9;  // burn a blot
    }
  GrayImage fixed = preprocess::inpaint_biharmonic(img, defect);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 30; ++c) {
      if (defect.at(r, c))
        CHECK(std::abs(fixed.at(r, c) - truth.at(r, c)) < 1e-4);
      else
        CHECK(fixed.at(r, c) == img.at(r, c));  // intact pixels untouched
    }
}

TEST_CASE("inpaint is idempotent on an already-consistent region") {
  GrayImage img = ramp_image(20, 20, 0.005, -0.003, 0.4);
  BinaryMask defect(20, 20);
  for (int r = 8; r <= 11; ++r)
    for (int c = 8; c <= 11; ++c) defect.set(r, c, true);
  GrayImage once = preprocess::inpaint_biharmonic(img, defect);
  GrayImage twice = preprocess::inpaint_biharmonic(once, defect);
  for (int i = 0; i < 400; ++i) CHECK(std::abs(once.pix[i] - twice.pix[i]) < 1e-9);
}

TEST_CASE("inpaint rejects defects touching the border or too large") {
  GrayImage img = ramp_image(16, 16, 0.01, 0.01, 0.0);
  BinaryMask border(16, 16);
  border.set(0, 5, true);
  CHECK_THROWS(preprocess::inpaint_biharmonic(img, border));
  BinaryMask big(16, 16);
  for (int r = 2; r < 14; ++r)
    for (int c = 2; c < 14; ++c) big.set(r, c, true);  // 144/256 > 20%
  CHECK_THROWS(preprocess::inpaint_biharmonic(img, big));
}

TEST_CASE("normalize_intensity: clamped z-score mapping") {
  GrayImage img(1, 4);
  img.pix = {0.0, 1.0, 2.0, 3.0};  // mean 1.5, population std sqrt(1.25)
  GrayImage n = preprocess::normalize_intensity(img);
  const double sd = std::sqrt(1.25);
  for (int i = 0; i < 4; ++i) {
    const double z = (img.pix[i] - 1.5) / sd;
    const double want = std::clamp(0.5 + z / 6.0, 0.0, 1.0);
    CHECK(n.pix[i] == doctest::Approx(want).epsilon(1e-12));
  }
  // constant image has no direction: maps to mid gray
  GrayImage flat(2, 2);
  flat.pix = {0.7, 0.7, 0.7, 0.7};
  for (double v : preprocess::normalize_intensity(flat).pix) CHECK(v == 0.5);
}

TEST_CASE("gamma_correct fixture") {
  GrayImage img(1, 3);
  img.pix = {0.0, 0.25, 1.0};
  GrayImage g = preprocess::gamma_correct(img, 2.0);
  CHECK(g.pix[0] == doctest::Approx(0.0));
  CHECK(g.pix[1] == doctest::Approx(0.0625));
  CHECK(g.pix[2] == doctest::Approx(1.0));
}

TEST_CASE("adaptive_equalize: a single tile equals plain clipped equalization") {
  // with tiles=1 the bilinear blend collapses to one mapping; a two-level
  // image with no clipping maps each level to its CDF value
  GrayImage img(8, 8);
  for (int i = 0; i < 64; ++i) img.pix[i] = i < 16 ? 0.1 : 0.9;
  GrayImage eq = preprocess::adaptive_equalize(img, 1, 1.0);  // clip high enough: no clip
  // CDF(0.1) = 16/64 = 0.25, CDF(0.9) = 1.0
  for (int i = 0; i < 64; ++i)
    CHECK(eq.pix[i] == doctest::Approx(i < 16 ? 0.25 : 1.0).epsilon(0.02));
}

TEST_CASE("adaptive_equalize keeps values in [0,1] and spreads a ramp") {
  Rng rng(401);
  GrayImage img(32, 32);
  for (int i = 0; i < 1024; ++i) img.pix[i] = 0.4 + 0.2 * rng.uniform();
  GrayImage def = preprocess::adaptive_equalize(img);
  for (double v : def.pix) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // with a permissive clip limit the narrow band is stretched wide open
  GrayImage eq = preprocess::adaptive_equalize(img, 4, 1.0);
  double lo = 1e9, hi = -1e9;
  for (double v : eq.pix) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo > 0.5);
}

TEST_CASE("rotate_image: zero degrees is the identity") {
  Rng rng(402);
  GrayImage img(16, 20);
  for (double& v : img.pix) v = rng.uniform();
  GrayImage rot = preprocess::rotate_image(img, 0.0);
  for (int i = 0; i < 320; ++i) CHECK(rot.pix[i] == img.pix[i]);
  CHECK_THROWS(preprocess::rotate_image(img, 50.0));
}

TEST_CASE("rotate mask +20 then -20 overlaps itself with dice >= 0.95") {
  BinaryMask m(48, 48);
  for (int r = 14; r < 34; ++r)
    for (int c = 10; c < 38; ++c) m.set(r, c, true);
  BinaryMask fwd = preprocess::rotate_mask(m, 20.0);
  BinaryMask back = preprocess::rotate_mask(fwd, -20.0);
  CHECK(metrics::dice_coefficient(m, back) >= 0.95);
}

TEST_CASE("augment: deterministic given keys, lengths untouched, joint rotation") {
  Sample s;
  s.image = GrayImage(32, 32);
  Rng rng(403);
  for (double& v : s.image.pix) v = rng.uniform();
  BinaryMask m(32, 32);
  for (int r = 10; r < 22; ++r)
    for (int c = 8; c < 26; ++c) m.set(r, c, true);
  s.mask = m;
  s.length_mm = 17.5;
  s.length_px = 17.5;

  preprocess::AugmentationSpec spec;
  Sample a1 = preprocess::augment(s, spec, Rng::keyed({5, 0, 3}));
  Sample a2 = preprocess::augment(s, spec, Rng::keyed({5, 0, 3}));
  CHECK(a1.image.pix == a2.image.pix);
  CHECK(a1.mask->bits == a2.mask->bits);
  CHECK(a1.length_mm == 17.5);
  CHECK(a1.length_px == 17.5);

  Sample b = preprocess::augment(s, spec, Rng::keyed({5, 0, 4}));
  CHECK(b.image.pix != a1.image.pix);  // different key, different draw
}
