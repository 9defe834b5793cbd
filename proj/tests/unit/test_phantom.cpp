#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "ghloc/ghloc.hpp"
#include "phantom/phantom.hpp"
#include "recon/distance.hpp"
#include "recon/marching_cubes.hpp"
#include "test_util.hpp"
#include "volcore/nifti_io.hpp"
#include "volcore/preprocess.hpp"

using namespace ghc;
using testutil::expect_code;

namespace {

PhantomSpec quiet() {
  PhantomSpec s;
  s.noise_std = 0;
  return s;
}

}  // namespace

TEST_CASE("healthy phantom: cleared mesh equals morphological mesh") {
  const Phantom ph = generate_phantom(quiet());
  CHECK(ph.staging == StagingLabels{0, 0, 0});
  REQUIRE(ph.morph_mesh.vertices.size() == ph.cleared_mesh.vertices.size());
  CHECK(max_surface_distance(ph.morph_mesh, ph.cleared_mesh) == doctest::Approx(0.0));
  CHECK(stage_os(max_surface_distance(ph.morph_mesh, ph.cleared_mesh)) == 0);
  CHECK(ph.morph_mesh.watertight());
  CHECK(ph.morph_mesh.signed_volume() > 0);
}

TEST_CASE("osteophyte apex height is recovered from the meshes") {
  for (double size : {5.0, 10.0}) {
    PhantomSpec s = quiet();
    s.osteophyte_size = size;
    const Phantom ph = generate_phantom(s);
    const double d = max_surface_distance(ph.morph_mesh, ph.cleared_mesh);
    CAPTURE(size);
    CHECK(std::abs(d - size) < 0.5);
    CHECK(stage_os(d) == (size < 7 ? 1 : 2));
    CHECK(ph.staging.os == stage_os(size));
  }
}

TEST_CASE("joint space and eccentricity grading") {
  CHECK(js_grade_from_gap(3.0) == 0);
  CHECK(js_grade_from_gap(2.0) == 1);
  CHECK(js_grade_from_gap(0.5) == 1);
  CHECK(js_grade_from_gap(0.0) == 2);
  CHECK(hsa_grade_from_offset(5.0, 20.0) == 0);
  CHECK(hsa_grade_from_offset(5.01, 20.0) == 1);
  PhantomSpec s = quiet();
  s.joint_gap = 0;
  const Phantom ph = generate_phantom(s, false);
  CHECK(ph.staging.js == 2);
}

TEST_CASE("analytic clearance between head and glenoid equals the joint gap") {
  for (double e : {0.0, 7.0}) {
    PhantomSpec s = quiet();
    s.joint_gap = 1.3;
    s.eccentric_offset = e;
    s.eccentric_angle = 0.7;
    const PhantomTruth t = phantom_truth(s);
    CHECK((t.glenoid_point - t.head_center).norm() == doctest::Approx(s.head_radius + s.joint_gap));
    // along the contact ray: head surface, then gap, then bone
    const Eigen::Vector3d u = (t.glenoid_point - t.head_center).normalized();
    CHECK(humerus_field(s, t, t.head_center + (s.head_radius - 0.01) * u, true) > 0);
    CHECK(scapula_field(s, t, t.head_center + (s.head_radius + 0.01) * u) < 0);
    CHECK(scapula_field(s, t, t.glenoid_point - 0.01 * u) < 0);
    CHECK(scapula_field(s, t, t.glenoid_point + 0.01 * u) > 0);
  }
}

TEST_CASE("phantom volumes: labels, intensities, mesh agreement") {
  const PhantomSpec s = quiet();
  const Phantom ph = generate_phantom(s);
  std::size_t hum = 0, sca = 0, bright = 0;
  for (std::size_t n = 0; n < ph.labels.size(); ++n) {
    const auto l = ph.labels.data()[n];
    if (l == label::humerus) {
      ++hum;
      if (ph.volume.data()[n] > s.hu_soft + 60) ++bright;
    }
    if (l == label::scapula) ++sca;
  }
  CHECK(hum > 20000);
  CHECK(sca > 3000);
  CHECK(double(bright) / hum >= 0.99);
  validate_labels(ph.labels);

  const TriMesh from_labels = marching_cubes(ph.labels, label::humerus);
  CHECK(surface_rmse(from_labels, ph.morph_mesh) < s.spacing);

  const HeadFit fit = fit_humeral_head(ph.labels);
  CHECK(std::abs(fit.radius - s.head_radius) < 1.0);
  CHECK((fit.center - ph.truth.head_center).norm() < 2 * s.spacing);

  const GhBox box = gh_bounding_box(fit, ph.labels, 64);
  const Eigen::Vector3d jc = (ph.truth.joint_center.array() / s.spacing).matrix();
  for (int a = 0; a < 3; ++a) {
    CHECK(jc[a] >= box.lo[a] + 16);
    CHECK(jc[a] <= box.lo[a] + 48);
  }
}

TEST_CASE("left phantom is the mirror of the right one") {
  PhantomSpec r = quiet();
  r.osteophyte_size = 4;
  PhantomSpec l = r;
  l.side = Laterality::left;
  const Phantom pr = generate_phantom(r, false), pl = generate_phantom(l, false);
  CHECK(pl.labels.geometry().laterality == Laterality::left);
  const LabelMap mirrored = flip_sagittal(pr.labels);
  std::size_t diff = 0;
  for (std::size_t n = 0; n < mirrored.size(); ++n) diff += mirrored.data()[n] != pl.labels.data()[n];
  CHECK(diff < mirrored.size() / 2000);
  CHECK(pl.staging == pr.staging);
}

TEST_CASE("noise is deterministic in the seed") {
  PhantomSpec s;
  const Phantom a = generate_phantom(s, false), b = generate_phantom(s, false);
  CHECK(a.volume.data() == b.volume.data());
  s.rng_seed = 2;
  const Phantom c = generate_phantom(s, false);
  CHECK(a.volume.data() != c.volume.data());
  CHECK(a.labels.data() == c.labels.data());
}

TEST_CASE("phantom parameter validation") {
  PhantomSpec s = quiet();
  s.head_radius = -1;
  expect_code(ErrorCode::range_error, [&] { generate_phantom(s); });
  s = quiet();
  s.eccentric_offset = 15;  // contact point beyond the glenoid rim
  expect_code(ErrorCode::range_error, [&] { s.validate(); });
  s = quiet();
  s.osteophyte_size = -1;
  expect_code(ErrorCode::range_error, [&] { s.validate(); });
  s = quiet();
  s.osteophyte_count = 0;
  expect_code(ErrorCode::range_error, [&] { s.validate(); });
  s = quiet();
  s.side = Laterality::unknown;
  expect_code(ErrorCode::range_error, [&] { s.validate(); });
  s = quiet();
  s.grid = {64, 64, 64};
  expect_code(ErrorCode::grid_overflow, [&] { generate_phantom(s, false); });
  CohortRanges r;
  r.gap[1] = {0.3, 1.5};  // straddles the JS 1/2 threshold
  expect_code(ErrorCode::range_error, [&] { r.validate(); });
}

TEST_CASE("cohort plan is stratified and deterministic") {
  const CohortRanges r;
  const auto a = plan_cohort(30, r, PhantomSpec{}, 7);
  const auto b = plan_cohort(30, r, PhantomSpec{}, 7);
  REQUIRE(a.size() == 30);
  std::array<int, 3> os{};
  std::map<std::pair<int, int>, int> cells;
  int left = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].spec.rng_seed == b[i].spec.rng_seed);
    CHECK(a[i].spec.osteophyte_size == b[i].spec.osteophyte_size);
    CHECK(a[i].staging == staging_from_spec(a[i].spec));
    os[a[i].staging.os]++;
    cells[{a[i].staging.js, a[i].staging.hsa}]++;
    left += a[i].spec.side == Laterality::left;
  }
  for (int c : os) CHECK(c >= 8);
  CHECK(cells.size() == 6);
  CHECK(left > 5);
  CHECK(left < 25);
  expect_code(ErrorCode::range_error, [&] { plan_cohort(0, r, PhantomSpec{}, 7); });

  CohortRanges skew = r;
  skew.os_proportions = {2, 1, 1};
  const auto c = plan_cohort(10, skew, PhantomSpec{}, 1);
  std::array<int, 3> n{};
  for (const auto& k : c) n[k.staging.os]++;
  CHECK(n == std::array<int, 3>{5, 3, 2});
}

TEST_CASE("every planned case generates inside the grid") {
  const auto plan = plan_cohort(12, CohortRanges{}, PhantomSpec{}, 3);
  for (const auto& c : plan) {
    CAPTURE(c.id);
    CHECK_NOTHROW(generate_phantom(c.spec, false));
  }
}

TEST_CASE("cohort files and manifest round trip") {
  const auto dir = testutil::scratch("cohort");
  const auto manifest = generate_cohort(3, CohortRanges{}, PhantomSpec{}, 11, dir);
  const auto recs = read_manifest(manifest);
  REQUIRE(recs.size() == 3);
  const auto plan = plan_cohort(3, CohortRanges{}, PhantomSpec{}, 11);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].id == plan[i].id);
    CHECK(recs[i].staging == plan[i].staging);
    CHECK(recs[i].volume_path.is_absolute());
    const Volume v = read_volume(recs[i].volume_path);
    const LabelMap l = read_labelmap(recs[i].label_path);
    CHECK(v.geometry().shape == l.geometry().shape);
    CHECK(v.geometry().laterality == plan[i].spec.side);
    CHECK(read_stl(recs[i].morph_stl.string()).watertight());
  }
  // relative paths survive moving the directory
  const auto moved = dir.parent_path() / (dir.filename().string() + "-moved");
  std::filesystem::rename(dir, moved);
  CHECK(std::filesystem::exists(read_manifest(moved / "manifest.jsonl")[0].label_path));

  const auto bad = moved / "bad.jsonl";
  std::ofstream(bad) << "{\"id\": \"x\"}\n";
  expect_code(ErrorCode::format_error, [&] { read_manifest(bad); });
  std::filesystem::remove_all(moved);
}
