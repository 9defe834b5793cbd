#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "evalstats/metrics.hpp"
#include "test_util.hpp"

using namespace ghc;
using testutil::expect_code;

namespace {

LabelMap cube3(const std::vector<std::uint8_t>& v) {
  GridGeometry g;
  g.shape = {3, 3, 3};
  return LabelMap(g, v);
}

// Exhaustive null distribution of the Friedman statistic for k = 3 with no
// ties: every subject independently permutes the ranks (1, 2, 3).
double friedman_permutation_p(const std::vector<std::array<int, 3>>& ranks) {
  const int n = static_cast<int>(ranks.size());
  auto stat = [n](const std::array<double, 3>& r) {
    double ss = 0;
    for (double x : r) ss += x * x;
    return 12.0 / (n * 3 * 4) * ss - 3.0 * n * 4;
  };
  std::array<double, 3> obs{};
  for (const auto& row : ranks)
    for (int g = 0; g < 3; ++g) obs[g] += row[g];
  const double q_obs = stat(obs);
  std::vector<std::array<int, 3>> perms;
  std::array<int, 3> p{1, 2, 3};
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  long total = 1, hits = 0;
  for (int i = 0; i < n; ++i) total *= 6;
  for (long code = 0; code < total; ++code) {
    std::array<double, 3> r{};
    long c = code;
    for (int i = 0; i < n; ++i, c /= 6)
      for (int g = 0; g < 3; ++g) r[g] += perms[c % 6][g];
    hits += stat(r) >= q_obs - 1e-9;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Two-sided exact signed-rank p by listing all 2^n sign vectors.
double wilcoxon_enumeration_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  std::vector<double> mag;
  for (double x : d) mag.push_back(std::abs(x));
  const auto r = average_ranks(mag);
  const double total = std::accumulate(r.begin(), r.end(), 0.0);
  double wp = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) wp += r[i];
  const double w = std::min(wp, total - wp);
  const int n = static_cast<int>(d.size());
  long hits = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    double s = 0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) s += r[i];
    hits += std::min(s, total - s) <= w + 1e-9;
  }
  return static_cast<double>(hits) / static_cast<double>(1L << n);
}

}  // namespace

TEST_CASE("overlap metrics hand case") {
  // truth: voxels 0-4, prediction: voxels 1-6 -> TP 4, FP 2, FN 1
  std::vector<std::uint8_t> t(27, 0), p(27, 0);
  for (int i = 0; i < 5; ++i) t[i] = 1;
  for (int i = 1; i < 7; ++i) p[i] = 1;
  const auto m = overlap_metrics(cube3(t), cube3(p), 1);
  CHECK(m.tp == 4);
  CHECK(m.fp == 2);
  CHECK(m.fn == 1);
  CHECK(m.dice == doctest::Approx(8.0 / 11));
  CHECK(m.jaccard == doctest::Approx(4.0 / 7));
  CHECK(m.precision == doctest::Approx(2.0 / 3));
  CHECK(m.recall == doctest::Approx(4.0 / 5));

  const auto same = overlap_metrics(cube3(t), cube3(t), 1);
  CHECK(same.dice == 1.0);
  CHECK(same.jaccard == 1.0);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  std::vector<std::uint8_t> q(27, 0);
  for (int i = 10; i < 15; ++i) q[i] = 1;
  const auto dis = overlap_metrics(cube3(t), cube3(q), 1);
  CHECK(dis.dice == 0.0);
  CHECK(dis.jaccard == 0.0);
  CHECK(dis.precision == 0.0);
  CHECK(dis.recall == 0.0);
  expect_code(ErrorCode::undefined_metric, [&] { overlap_metrics(cube3(t), cube3(p), 2); });
  GridGeometry g;
  g.shape = {3, 3, 2};
  expect_code(ErrorCode::shape_error, [&] { overlap_metrics(cube3(t), LabelMap(g, 0), 1); });
}

TEST_CASE("overlap metric identities on random maps") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> a(27), b(27);
    for (auto& x : a) x = static_cast<std::uint8_t>(lab(rng));
    for (auto& x : b) x = static_cast<std::uint8_t>(lab(rng));
    for (std::uint8_t c = 0; c < 3; ++c) {
      const auto m = overlap_metrics(cube3(a), cube3(b), c);
      const auto r = overlap_metrics(cube3(b), cube3(a), c);
      CHECK(m.dice == doctest::Approx(2 * m.jaccard / (1 + m.jaccard)).epsilon(1e-14));
      CHECK(m.precision == r.recall);
      CHECK(m.recall == r.precision);
    }
  }
}

TEST_CASE("classification report") {
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2};
  const auto perfect = classification_report(y, y, 3);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p) CHECK(perfect.confusion.at(t, p) == (t == p ? 3 : 0));

  const auto constant = classification_report(y, std::vector<int>(9, 1), 3);
  CHECK(constant.accuracy == doctest::Approx(1.0 / 3));
  CHECK(constant.recall == doctest::Approx(1.0 / 3));
  CHECK(constant.precision == doctest::Approx(1.0 / 9));  // (0 + 1/3 + 0) / 3
  CHECK(constant.f1 == doctest::Approx(0.5 / 3));          // class 1: 2 (1/3)(1) / (4/3)
  CHECK(constant.confusion.total() == 9);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 2);
  std::vector<int> t(40), p(40);
  for (auto& x : t) x = u(rng);
  for (auto& x : p) x = u(rng);
  const auto rep = classification_report(t, p, 3);
  const auto norm = rep.confusion.normalized();
  for (int r = 0; r < 3; ++r) CHECK(norm[r * 3] + norm[r * 3 + 1] + norm[r * 3 + 2] == doctest::Approx(1.0));
  // relabelling classes consistently leaves accuracy unchanged
  const std::array<int, 3> perm{2, 0, 1};
  std::vector<int> tp, pp;
  for (int x : t) tp.push_back(perm[x]);
  for (int x : p) pp.push_back(perm[x]);
  CHECK(classification_report(tp, pp, 3).accuracy == rep.accuracy);
  CHECK(classification_report(tp, pp, 3).f1 == doctest::Approx(rep.f1));

  expect_code(ErrorCode::label_error, [&] { classification_report({0, 3}, {0, 1}, 3); });
  expect_code(ErrorCode::label_error, [&] { classification_report({0, 1}, {-1, 1}, 3); });
  expect_code(ErrorCode::pairing_error, [&] { classification_report({0, 1}, {0}, 3); });
}

TEST_CASE("average ranks share ties") {
  CHECK(average_ranks({3.0, 1.0, 3.0, 2.0}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
  CHECK(average_ranks({5.0, 5.0, 5.0}) == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("Friedman test") {
  const std::vector<double> s{1.5, 2.0, 0.3, 4.0};
  const auto same = friedman_test({s, s, s});
  CHECK(same.statistic == 0.0);
  CHECK(same.p == 1.0);

  // per-subject ranks (1,2,3) x3, (2,1,3), (1,3,2): rank sums 6, 10, 14
  const std::vector<double> g1{3.1, 2.8, 3.5, 4.0, 2.2}, g2{3.9, 3.6, 4.1, 3.7, 3.3}, g3{4.6, 4.4, 4.9, 4.8, 3.0};
  const auto r = friedman_test({g1, g2, g3});
  CHECK(r.statistic == doctest::Approx(6.4).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.04076220397836611).epsilon(1e-10));  // scipy friedmanchisquare
  const double exact = friedman_permutation_p({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {2, 1, 3}, {1, 3, 2}});
  CHECK(exact == doctest::Approx(306.0 / 7776));
  CHECK(std::abs(r.p - exact) < 0.02);

  // ties within subjects (scipy: 4.9, 0.08629358649937076)
  const auto t = friedman_test({{1, 2, 2, 3, 4, 4}, {2, 2, 3, 3, 5, 4}, {3, 1, 3, 4, 6, 5}});
  CHECK(t.statistic == doctest::Approx(4.9).epsilon(1e-12));
  CHECK(t.p == doctest::Approx(0.08629358649937076).epsilon(1e-10));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0, 0.3);
  std::vector<std::vector<double>> shifted(3, std::vector<double>(10));
  for (int j = 0; j < 10; ++j) {
    const double base = nd(rng) * 5;
    for (int g = 0; g < 3; ++g) shifted[g][j] = base + g + nd(rng);
  }
  CHECK(friedman_test(shifted).p < 0.05);

  expect_code(ErrorCode::pairing_error, [] { friedman_test({{1, 2, 3}, {1, 2}, {3, 2, 1}}); });
  expect_code(ErrorCode::invalid_argument, [] { friedman_test({{1, 2}, {2, 1}}); });
  expect_code(ErrorCode::invalid_argument, [] { friedman_test({{1}, {2}, {3}}); });
}

TEST_CASE("Wilcoxon signed-rank exact branch") {
  // n = 8 hand-ranked: differences 1..8 with signs + + - + + + - +
  const std::vector<double> a{1, 2, -3, 4, 5, 6, -7, 8}, b(8, 0.0);
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.statistic == 10.0);  // W- = 3 + 7
  // 2^8 enumeration: 40 subsets of {1..8} sum to <= 10 (scipy exact: 0.3125)
  CHECK(r.p == doctest::Approx(2.0 * 40 / 256).epsilon(1e-14));
  CHECK(r.p == doctest::Approx(wilcoxon_enumeration_p(a, b)).epsilon(1e-14));

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 12;
    std::vector<double> x(n), y(n);
    std::uniform_int_distribution<int> u(-4, 4);
    for (int i = 0; i < n; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    if (x == y) y[0] += 1;
    CHECK(wilcoxon_signed_rank(x, y).p == doctest::Approx(wilcoxon_enumeration_p(x, y)).epsilon(1e-12));
  }

  std::vector<double> c{1.0, 2.0, 3.0, 4.0}, d = c;
  d[2] += 0.01;
  CHECK(wilcoxon_signed_rank(c, d).p == 1.0);
  expect_code(ErrorCode::degenerate_pairs, [&] { wilcoxon_signed_rank(c, c); });
  expect_code(ErrorCode::pairing_error, [&] { wilcoxon_signed_rank(c, {1.0}); });
}

TEST_CASE("Wilcoxon signed-rank normal branch") {
  // scipy.stats.wilcoxon(method='approx', correction=False): W = 41, p = 0.029691740634211795
  const std::vector<double> a{0.1, -0.1, 0.6, 0.1, -0.5, 0.4, 1.3, 0.9, -0.7, -1.3,
                              -0.6, 0.0, -2.3, -0.2, -1.2, -0.7, -0.5, -0.3, 0.4, 1.0};
  const std::vector<double> b{0.2, 1.7, -0.4, 0.7, 1.2, 0.4, -0.4, -0.6, -0.2, 0.5,
                              -0.7, 0.1, 0.1, 0.8, 0.5, 0.7, -0.4, 0.2, 1.1, 1.8};
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.statistic == 41.0);
  CHECK(r.p == doctest::Approx(0.029691740634211795).epsilon(1e-10));
}

TEST_CASE("Bonferroni") {
  CHECK(bonferroni({0.04}, 3) == std::vector<double>{0.12});
  CHECK(bonferroni({0.04, 0.5, 0.0}) == std::vector<double>{0.12, 1.0, 0.0});
  expect_code(ErrorCode::invalid_argument, [] { bonferroni({1.5}); });
}
