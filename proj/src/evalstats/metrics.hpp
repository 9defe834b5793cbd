#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcore/volume.hpp"

namespace ghc {

struct OverlapMetrics {
  double dice = 0, jaccard = 0, precision = 0, recall = 0;
  std::int64_t tp = 0, fp = 0, fn = 0;
};

/// Voxel overlap for one class. Throws ShapeError on mismatched grids and
/// UndefinedMetric when the class is absent from both maps. A ratio whose
/// denominator is zero (e.g. precision with nothing predicted) is 0.
OverlapMetrics overlap_metrics(const LabelMap& truth, const LabelMap& pred, std::uint8_t cls);

/// rows = true class, columns = predicted
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int t, int p) const { return counts[static_cast<std::size_t>(t * classes + p)]; }
  std::int64_t total() const;
  std::vector<double> normalized() const;  // rows sum to 1; empty rows stay 0
};

struct ClassificationReport {
  double accuracy = 0;
  double precision = 0;  // macro
  double recall = 0;     // macro
  double f1 = 0;         // macro of per-class F1
  std::vector<double> class_precision, class_recall, class_f1;
  ConfusionMatrix confusion;
};

/// Throws PairingError on length mismatch, LabelError for an index outside [0, classes).
ClassificationReport classification_report(const std::vector<int>& truth, const std::vector<int>& pred, int classes);

void to_json(nlohmann::json& j, const ConfusionMatrix& m);
void to_json(nlohmann::json& j, const ClassificationReport& r);

struct TestResult {
  double statistic = 0;
  double p = 1;
};

/// groups[g][s] = score of group g on subject s. Rank-based chi-square with
/// tie correction, k - 1 degrees of freedom. Needs k >= 3, n >= 2.
TestResult friedman_test(const std::vector<std::vector<double>>& groups);

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Two-sided signed-rank test on a - b. Zero differences are dropped;
/// statistic = min(W+, W-). Exact null distribution for n <= 15, normal
/// approximation with tie correction above. Throws DegeneratePairs when
/// every difference is zero.
TestResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

inline constexpr int kWilcoxonExactMax = 15;

/// p' = min(1, m p). m defaults to the number of p-values.
std::vector<double> bonferroni(const std::vector<double>& ps, int m = 0);

}  // namespace ghc
