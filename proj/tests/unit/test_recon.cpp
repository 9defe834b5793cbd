#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "recon/distance.hpp"
#include "recon/marching_cubes.hpp"
#include "test_util.hpp"

using namespace ghc;
using testutil::expect_code;

namespace {

GridGeometry geom(int nx, int ny, int nz, double spacing = 1.0) {
  GridGeometry g;
  g.shape = {nx, ny, nz};
  g.spacing = Eigen::Vector3d::Constant(spacing);
  return g;
}

Volume ball(int n, const Eigen::Vector3d& c, double r, double spacing = 1.0) {
  Volume v(geom(n, n, n, spacing), 0.0f);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        if ((v.geometry().world(i, j, k) - c).norm() <= r) v(i, j, k) = 1.0f;
      }
  return v;
}

// Planar grid in the x = 0 plane, `n` cells per side of size 1 mm.
TriMesh plane_patch(int n) {
  TriMesh m;
  for (int b = 0; b <= n; ++b)
    for (int a = 0; a <= n; ++a) m.vertices.emplace_back(0.0, a, b);
  for (int b = 0; b < n; ++b)
    for (int a = 0; a < n; ++a) {
      const int v = b * (n + 1) + a;
      m.triangles.push_back({v, v + 1, v + n + 2});
      m.triangles.push_back({v, v + n + 2, v + n + 1});
    }
  return m;
}

}  // namespace

TEST_CASE("single above-iso corner gives one outward triangle") {
  Volume v(geom(2, 2, 2), 0.0f);
  v(0, 0, 0) = 1.0f;
  MarchingOptions o;
  o.close_boundary = false;
  const TriMesh m = marching_cubes(v, o);
  REQUIRE(m.triangles.size() == 1);
  for (const auto& p : m.vertices) CHECK(p.sum() == doctest::Approx(0.5));
  CHECK(m.normal(0).dot(Eigen::Vector3d(1, 1, 1).normalized()) == doctest::Approx(1.0));
}

TEST_CASE("every cell configuration closes with outward winding") {
  // A lone 2x2x2 block inside the padding ring exercises each of the 256
  // configurations in its central cell.
  for (int config = 1; config < 255; ++config) {
    Volume v(geom(2, 2, 2), 0.0f);
    for (int c = 0; c < 8; ++c) {
      if ((config >> c) & 1) v(c & 1, (c >> 1) & 1, (c >> 2) & 1) = 1.0f;
    }
    const TriMesh m = marching_cubes(v);
    INFO("config " << config);
    CHECK(m.watertight());
    CHECK(m.signed_volume() > 0);
  }
  CHECK(mc::case_triangles(0).empty());
  CHECK(mc::case_triangles(255).empty());
}

TEST_CASE("random fields give closed consistently wound surfaces") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 40; ++trial) {
    Volume v(geom(9, 8, 7), 0.0f);
    for (auto& x : v.data()) x = u(rng);
    const TriMesh m = marching_cubes(v);
    CHECK(m.watertight());
    CHECK(m.signed_volume() > 0);
  }
}

TEST_CASE("voxelized sphere radius") {
  const Eigen::Vector3d c(24.3, 23.8, 24.1);
  const TriMesh m = marching_cubes(ball(49, c, 20.0));
  double mean = 0;
  for (const auto& p : m.vertices) mean += (p - c).norm();
  mean /= static_cast<double>(m.vertices.size());
  CHECK(std::abs(mean - 20.0) < 0.3);
  CHECK(m.watertight());
  CHECK(m.signed_volume() == doctest::Approx(4.0 / 3.0 * M_PI * 8000.0).epsilon(0.03));
}

TEST_CASE("axis-aligned box faces within half a voxel") {
  GridGeometry g = geom(12, 10, 9, 0.5);
  g.origin = Eigen::Vector3d(-3, 2, 7);
  Volume v(g, 0.0f);
  const Index3 lo{2, 3, 1}, hi{8, 6, 6};
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) v(i, j, k) = 1.0f;
  const TriMesh m = marching_cubes(v);
  Eigen::AlignedBox3d box;
  for (const auto& p : m.vertices) box.extend(p);
  for (int a = 0; a < 3; ++a) {
    const double lo_face = g.origin[a] + g.spacing[a] * (lo[a] - 0.5);
    const double hi_face = g.origin[a] + g.spacing[a] * (hi[a] + 0.5);
    CHECK(std::abs(box.min()[a] - lo_face) <= 0.5 * g.spacing[a] + 1e-12);
    CHECK(std::abs(box.max()[a] - hi_face) <= 0.5 * g.spacing[a] + 1e-12);
  }
}

TEST_CASE("label-class surface and empty inputs") {
  LabelMap lm(geom(6, 6, 6), 0);
  lm(2, 2, 2) = 2;
  lm(3, 2, 2) = 2;
  const TriMesh m = marching_cubes(lm, label::scapula);
  CHECK(m.watertight());
  expect_code(ErrorCode::empty_surface, [&] { marching_cubes(lm, label::humerus); });
  expect_code(ErrorCode::empty_surface, [&] { marching_cubes(Volume(geom(3, 3, 3), 1.0f)); });
}

TEST_CASE("smoothing pass keeps the surface near the mask boundary") {
  const Eigen::Vector3d c(12, 12, 12);
  MarchingOptions o;
  o.smooth_sigma = 0.5;
  const TriMesh m = marching_cubes(ball(25, c, 8.0), o);
  double mean = 0;
  for (const auto& p : m.vertices) mean += (p - c).norm();
  mean /= static_cast<double>(m.vertices.size());
  CHECK(std::abs(mean - 8.0) < 0.5);
}

TEST_CASE("binary STL layout and round trip") {
  const auto dir = testutil::scratch("stl");
  TriMesh one;
  one.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  one.triangles = {{0, 1, 2}};
  write_stl(one, (dir / "one.stl").string());
  CHECK(std::filesystem::file_size(dir / "one.stl") == 134);

  const TriMesh s = icosphere({1.5, -2.25, 3.0}, 7.3, 2);
  write_stl(s, (dir / "s.stl").string());
  const TriMesh r = read_stl((dir / "s.stl").string());
  REQUIRE(r.triangles.size() == s.triangles.size());
  REQUIRE(r.vertices.size() == s.vertices.size());
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    for (int c = 0; c < 3; ++c) {
      const Eigen::Vector3d a = s.vertices[s.triangles[t][c]], b = r.vertices[r.triangles[t][c]];
      CHECK((a - b).norm() < 1e-5);
    }
  }
  CHECK(r.watertight());

  std::filesystem::resize_file(dir / "s.stl", std::filesystem::file_size(dir / "s.stl") - 7);
  expect_code(ErrorCode::format_error, [&] { read_stl((dir / "s.stl").string()); });
  std::ofstream(dir / "tiny.stl") << "solid x";
  expect_code(ErrorCode::format_error, [&] { read_stl((dir / "tiny.stl").string()); });
}

TEST_CASE("hierarchy query equals brute force") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 6.0);
  const TriMesh sphere = icosphere({0.3, -0.2, 0.1}, 5.0, 2);  // 320 triangles
  TriMesh soup_mesh;
  TriMesh& soup = soup_mesh;
  for (int t = 0; t < 400; ++t) {
    const int base = static_cast<int>(soup.vertices.size());
    for (int c = 0; c < 3; ++c) soup.vertices.emplace_back(nd(rng), nd(rng), nd(rng));
    soup.triangles.push_back({base, base + 1, base + 2});
  }
  for (const TriMesh* m : {&sphere, static_cast<const TriMesh*>(&soup)}) {
    const SurfaceIndex idx(*m);
    for (int q = 0; q < 300; ++q) {
      const Eigen::Vector3d p(nd(rng), nd(rng), nd(rng));
      const auto a = idx.closest(p);
      const auto b = idx.closest_brute_force(p);
      CHECK(a.distance == b.distance);
    }
  }
}

TEST_CASE("closest point regions") {
  const Eigen::Vector3d a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);
  CHECK((closest_point_on_triangle({0.5, 0.5, 3}, a, b, c) - Eigen::Vector3d(0.5, 0.5, 0)).norm() < 1e-15);
  CHECK((closest_point_on_triangle({-1, -1, 0}, a, b, c) - a).norm() < 1e-15);
  CHECK((closest_point_on_triangle({3, -1, 0}, a, b, c) - b).norm() < 1e-15);
  CHECK((closest_point_on_triangle({1, -1, 1}, a, b, c) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
  CHECK((closest_point_on_triangle({2, 2, 0}, a, b, c) - Eigen::Vector3d(1, 1, 0)).norm() < 1e-15);
}

TEST_CASE("surface metric oracles") {
  const TriMesh s20 = icosphere({0, 0, 0}, 20.0, 6);
  const TriMesh s21 = icosphere({0, 0, 0}, 21.0, 6);
  CHECK(surface_rmse(s20, s20) == 0.0);
  CHECK(hausdorff(s20, s20) == 0.0);
  const double r = surface_rmse(s20, s21), h = hausdorff(s20, s21);
  CHECK(std::abs(r - 1.0) <= 0.05);
  CHECK(std::abs(h - 1.0) <= 0.05);
  CHECK(surface_rmse(s21, s20) == doctest::Approx(r).epsilon(1e-12));
  CHECK(hausdorff(s21, s20) == h);
  CHECK(h >= r);

  TriMesh p = plane_patch(10), q = plane_patch(10);
  q.translate({0.5, 0, 0});
  CHECK(surface_rmse(p, q) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hausdorff(p, q) == doctest::Approx(0.5).epsilon(1e-12));

  expect_code(ErrorCode::empty_mesh, [&] { surface_rmse(TriMesh{}, s20); });
  expect_code(ErrorCode::empty_mesh, [&] { hausdorff(s20, TriMesh{}); });
  expect_code(ErrorCode::empty_mesh, [&] { max_surface_distance(TriMesh{}, s20); });
}

TEST_CASE("bump apex dominates the Hausdorff distance") {
  const TriMesh base = icosphere({0, 0, 0}, 20.0, 4);
  TriMesh bumped = base;
  const Eigen::Vector3d pole = Eigen::Vector3d::UnitZ();
  // raised-cosine bump of height 7 mm over a 30 degree cap, apex on a vertex
  int apex = 0;
  for (std::size_t i = 0; i < base.vertices.size(); ++i) {
    if (base.vertices[i].normalized().dot(pole) > base.vertices[apex].normalized().dot(pole)) apex = static_cast<int>(i);
  }
  const Eigen::Vector3d dir = base.vertices[apex].normalized();
  const double cap = M_PI / 6;
  for (auto& v : bumped.vertices) {
    const double ang = std::acos(std::clamp(v.normalized().dot(dir), -1.0, 1.0));
    if (ang < cap) v += v.normalized() * 3.5 * (1 + std::cos(M_PI * ang / cap));
  }
  CHECK(hausdorff(base, bumped) == doctest::Approx(7.0).epsilon(0.01));
  CHECK(max_surface_distance(bumped, base) == doctest::Approx(7.0).epsilon(0.01));
  CHECK(max_surface_distance(base, base) == 0.0);
  CHECK(stage_os(max_surface_distance(bumped, base)) == 1);
}

TEST_CASE("osteophyte grading") {
  CHECK(stage_os(2.0) == 0);
  CHECK(stage_os(5.0) == 1);
  CHECK(stage_os(10.0) == 2);
  CHECK(stage_os(0.0) == 0);
  CHECK(stage_os(std::nextafter(3.0, 0.0)) == 0);
  CHECK(stage_os(3.0) == 1);
  CHECK(stage_os(7.0) == 1);
  CHECK(stage_os(std::nextafter(7.0, 8.0)) == 2);
  int prev = 0;
  for (double d = 0; d < 12; d += 0.01) {
    CHECK(stage_os(d) >= prev);
    prev = stage_os(d);
  }
  expect_code(ErrorCode::invalid_distance, [] { stage_os(-0.1); });
  expect_code(ErrorCode::invalid_distance, [] { stage_os(std::nan("")); });
}

TEST_CASE("icosphere is closed and outward") {
  const TriMesh s = icosphere({1, 2, 3}, 4.0, 3);
  CHECK(s.watertight());
  CHECK(s.signed_volume() > 0);
  for (const auto& v : s.vertices) CHECK((v - Eigen::Vector3d(1, 2, 3)).norm() == doctest::Approx(4.0));
}
