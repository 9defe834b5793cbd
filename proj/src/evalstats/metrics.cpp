#include "evalstats/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace ghc {

namespace {
double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }
}  // namespace

OverlapMetrics overlap_metrics(const LabelMap& truth, const LabelMap& pred, std::uint8_t cls) {
  if (!(truth.shape() == pred.shape())) fail(ErrorCode::shape_error, "label maps differ in shape");
  OverlapMetrics m;
  const auto& y = truth.data();
  const auto& yh = pred.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool t = y[i] == cls, p = yh[i] == cls;
    m.tp += t && p;
    m.fp += !t && p;
    m.fn += t && !p;
  }
  if (m.tp + m.fp + m.fn == 0) {
    fail(ErrorCode::undefined_metric, "class " + std::to_string(cls) + " absent from both label maps");
  }
  const double tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp), fn = static_cast<double>(m.fn);
  m.dice = 2 * tp / (2 * tp + fp + fn);
  m.jaccard = tp / (tp + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  return m;
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::vector<double> ConfusionMatrix::normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (int t = 0; t < classes; ++t) {
    std::int64_t row = 0;
    for (int p = 0; p < classes; ++p) row += at(t, p);
    for (int p = 0; p < classes; ++p) out[t * classes + p] = ratio(static_cast<double>(at(t, p)), static_cast<double>(row));
  }
  return out;
}

ClassificationReport classification_report(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  if (truth.size() != pred.size()) fail(ErrorCode::pairing_error, "truth and prediction lengths differ");
  if (classes < 1) fail(ErrorCode::invalid_argument, "need at least one class");
  ClassificationReport r;
  r.confusion.classes = classes;
  r.confusion.counts.assign(static_cast<std::size_t>(classes * classes), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || pred[i] < 0 || pred[i] >= classes) {
      fail(ErrorCode::label_error, "class index out of range at sample " + std::to_string(i));
    }
    r.confusion.counts[static_cast<std::size_t>(truth[i] * classes + pred[i])]++;
  }
  std::int64_t diag = 0;
  for (int c = 0; c < classes; ++c) diag += r.confusion.at(c, c);
  r.accuracy = ratio(static_cast<double>(diag), static_cast<double>(truth.size()));
  for (int c = 0; c < classes; ++c) {
    std::int64_t col = 0, row = 0;
    for (int o = 0; o < classes; ++o) {
      col += r.confusion.at(o, c);
      row += r.confusion.at(c, o);
    }
    const double tp = static_cast<double>(r.confusion.at(c, c));
    const double p = ratio(tp, static_cast<double>(col)), q = ratio(tp, static_cast<double>(row));
    r.class_precision.push_back(p);
    r.class_recall.push_back(q);
    r.class_f1.push_back(ratio(2 * p * q, p + q));
  }
  auto mean = [&](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / classes; };
  r.precision = mean(r.class_precision);
  r.recall = mean(r.class_recall);
  r.f1 = mean(r.class_f1);
  return r;
}

void to_json(nlohmann::json& j, const ConfusionMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < m.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < m.classes; ++p) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  j = rows;
}

void to_json(nlohmann::json& j, const ClassificationReport& r) {
  j = {{"accuracy", r.accuracy},
       {"precision", r.precision},
       {"recall", r.recall},
       {"f1", r.f1},
       {"class_precision", r.class_precision},
       {"class_recall", r.class_recall},
       {"class_f1", r.class_f1},
       {"confusion", r.confusion}};
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// sum over tie groups of t^3 - t
double tie_term(const std::vector<double>& values) {
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  double total = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    total += t * t * t - t;
    i = j + 1;
  }
  return total;
}

}  // namespace

TestResult friedman_test(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 3) fail(ErrorCode::invalid_argument, "Friedman test needs at least 3 groups");
  const std::size_t n = groups[0].size();
  for (const auto& g : groups) {
    if (g.size() != n) fail(ErrorCode::pairing_error, "Friedman groups must have one value per subject");
  }
  if (n < 2) fail(ErrorCode::invalid_argument, "Friedman test needs at least 2 subjects");
  std::vector<double> rank_sum(k, 0.0);
  double ties = 0;
  std::vector<double> row(k);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t g = 0; g < k; ++g) row[g] = groups[g][s];
    const auto r = average_ranks(row);
    for (std::size_t g = 0; g < k; ++g) rank_sum[g] += r[g];
    ties += tie_term(row);
  }
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  double ss = 0;
  for (double r : rank_sum) ss += r * r;
  const double raw = 12.0 / (nd * kd * (kd + 1)) * ss - 3.0 * nd * (kd + 1);
  const double correction = 1.0 - ties / (nd * kd * (kd * kd - 1));
  TestResult res;
  if (correction <= 1e-12) return res;  // every subject tied across all groups
  res.statistic = std::max(0.0, raw / correction);
  const boost::math::chi_squared dist(kd - 1);
  res.p = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

TestResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail(ErrorCode::pairing_error, "signed-rank samples must be paired");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, "non-finite sample in signed-rank test");
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) fail(ErrorCode::degenerate_pairs, "all paired differences are zero");
  const int n = static_cast<int>(d.size());
  std::vector<double> mag(n);
  for (int i = 0; i < n; ++i) mag[i] = std::abs(d[i]);
  const auto ranks = average_ranks(mag);
  double w_plus = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    total += ranks[i];
    if (d[i] > 0) w_plus += ranks[i];
  }
  TestResult res;
  res.statistic = std::min(w_plus, total - w_plus);

  if (n <= kWilcoxonExactMax) {
    // ranks are multiples of 1/2: count sign assignments by doubled rank sum
    std::vector<int> twice(n);
    int max_sum = 0;
    for (int i = 0; i < n; ++i) {
      twice[i] = static_cast<int>(std::lround(2 * ranks[i]));
      max_sum += twice[i];
    }
    std::vector<double> ways(static_cast<std::size_t>(max_sum) + 1, 0.0);
    ways[0] = 1;
    int reach = 0;
    for (int r : twice) {
      for (int s = reach; s >= 0; --s) {
        if (ways[s] != 0) ways[s + r] += ways[s];
      }
      reach += r;
    }
    const long w = std::lround(2 * res.statistic);
    double below = 0;
    for (long s = 0; s <= w; ++s) below += ways[s];
    res.p = std::min(1.0, 2.0 * below / std::ldexp(1.0, n));
    return res;
  }
  const double nd = n;
  const double mean = nd * (nd + 1) / 4;
  const double var = nd * (nd + 1) * (2 * nd + 1) / 24 - tie_term(mag) / 48;
  if (!(var > 0)) return res;
  const double z = (res.statistic - mean) / std::sqrt(var);
  res.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::normal(), z));
  return res;
}

std::vector<double> bonferroni(const std::vector<double>& ps, int m) {
  if (m == 0) m = static_cast<int>(ps.size());
  if (m < 1) fail(ErrorCode::invalid_argument, "Bonferroni needs m >= 1");
  std::vector<double> out;
  out.reserve(ps.size());
  for (double p : ps) {
    if (!(p >= 0 && p <= 1)) fail(ErrorCode::invalid_argument, "p-values must lie in [0, 1]");
    out.push_back(std::min(1.0, m * p));
  }
  return out;
}

}  // namespace ghc
