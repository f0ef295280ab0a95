#include "slm/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace slm {
namespace metrics {

std::string MetricsReport::to_json() const {
  std::ostringstream os;
  os.precision(10);
  os << "{\"method\":\"" << method << "\",\"ple_percent\":" << ple_percent
     << ",\"pearson_r\":" << pearson_r;
  if (dice) os << ",\"dice\":" << *dice;
  if (hausdorff_mm) os << ",\"hausdorff_mm\":" << *hausdorff_mm;
  os << ",\"n_cases\":" << n_cases << "}";
  return os.str();
}

std::string MetricsReport::to_csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << method << "," << ple_percent << "," << pearson_r << ",";
  if (dice) os << *dice;
  os << ",";
  if (hausdorff_mm) os << *hausdorff_mm;
  os << "," << n_cases;
  return os.str();
}

double ple(const std::vector<double>& pred_mm, const std::vector<double>& gt_mm) {
  if (pred_mm.size() != gt_mm.size())
    throw std::invalid_argument("ple: prediction/ground-truth size mismatch");
  if (pred_mm.empty()) throw std::invalid_argument("ple: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred_mm.size(); ++i) {
    if (gt_mm[i] <= 0.0) throw std::invalid_argument("ple: ground-truth length must be > 0");
    s += std::abs(pred_mm[i] - gt_mm[i]) / gt_mm[i];
  }
  return s / static_cast<double>(pred_mm.size()) * 100.0;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_r: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("pearson_r: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("pearson_r: zero variance, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

double dice_coefficient(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("dice_coefficient: shape mismatch");
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    na += a.bits[i] != 0;
    nb += b.bits[i] != 0;
    ni += (a.bits[i] != 0 && b.bits[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

namespace {

struct Pt {
  double y, x;
};

// Foreground pixels with at least one 4-neighbor outside the mask (or on the
// image border), in mm coordinates.
std::vector<Pt> boundary_mm(const BinaryMask& m) {
  std::vector<Pt> out;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      const bool border = r == 0 || r == m.height - 1 || c == 0 || c == m.width - 1;
      if (border || !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1)) {
        out.push_back({r * m.sy, c * m.sx});
      }
    }
  }
  return out;
}

// max over pixels of A of (0 if inside B else distance to B's boundary)
double directed(const BinaryMask& a, const BinaryMask& b, const std::vector<Pt>& b_boundary) {
  double h = 0.0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      if (!a.at(r, c)) continue;
      if (r < b.height && c < b.width && b.at(r, c)) continue;  // distance 0
      const double py = r * a.sy, px = c * a.sx;
      double best = std::numeric_limits<double>::infinity();
      for (const Pt& q : b_boundary) {
        const double d2 = (py - q.y) * (py - q.y) + (px - q.x) * (px - q.x);
        if (d2 < best) best = d2;
      }
      h = std::max(h, best);
    }
  }
  return std::sqrt(h);
}

}  // namespace

double hausdorff_distance(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("hausdorff_distance: shape mismatch");
  if (a.empty_mask() || b.empty_mask())
    throw std::invalid_argument("hausdorff_distance: empty mask");
  const auto ba = boundary_mm(a);
  const auto bb = boundary_mm(b);
  return std::max(directed(a, b, bb), directed(b, a, ba));
}

}  // namespace metrics
}  // namespace slm
