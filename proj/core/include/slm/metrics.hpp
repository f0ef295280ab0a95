#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slm/image.hpp"

namespace slm {
namespace metrics {

/// Per-method evaluation results. Dice/Hausdorff only apply to the
/// segmentation-based method; they stay unset for regression methods.
struct MetricsReport {
  std::string method;
  double ple_percent = 0.0;
  double pearson_r = 0.0;
  std::optional<double> dice;
  std::optional<double> hausdorff_mm;
  int n_cases = 0;

  std::string to_json() const;
  /// One CSV row: method,ple_percent,pearson_r,dice,hausdorff_mm,n_cases
  /// (empty fields where not applicable).
  std::string to_csv_row() const;
};

/// Mean over cases of |pred - gt| / gt * 100. Throws on gt <= 0.
double ple(const std::vector<double>& pred_mm, const std::vector<double>& gt_mm);

/// Sample Pearson correlation; throws when n < 2 or either side has zero
/// variance.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// 2|A∩B| / (|A|+|B|); both-empty defined as 1.
double dice_coefficient(const BinaryMask& a, const BinaryMask& b);

/// Symmetric Hausdorff distance between pixel centers in mm. Inner minima
/// run over boundary pixels (with a containment check), which equals the
/// full-set distance for solid regions. Throws on an empty mask.
double hausdorff_distance(const BinaryMask& a, const BinaryMask& b);

}  // namespace metrics
}  // namespace slm
