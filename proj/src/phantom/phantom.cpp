#include "phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "core/fsutil.hpp"
#include "recon/distance.hpp"
#include "recon/marching_cubes.hpp"
#include "volcore/nifti_io.hpp"

namespace ghc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::range_error, "phantom: " + what);
}

const Eigen::Vector3d kAnterior = Eigen::Vector3d::UnitY();
const Eigen::Vector3d kSuperior = Eigen::Vector3d::UnitZ();

std::vector<Eigen::Vector3d> bump_directions(const PhantomSpec& s) {
  // antero-inferior, spread about the joint axis when there are several
  const Eigen::Vector3d base = (kAnterior - kSuperior).normalized();
  std::vector<Eigen::Vector3d> dirs;
  for (int i = 0; i < s.osteophyte_count; ++i) {
    const double angle = (i - 0.5 * (s.osteophyte_count - 1)) * 0.6;
    dirs.push_back(Eigen::AngleAxisd(angle, s.medial()) * base);
  }
  return dirs;
}

}  // namespace

Eigen::Vector3d PhantomSpec::medial() const {
  return side == Laterality::left ? Eigen::Vector3d(-1, 0, 0) : Eigen::Vector3d(1, 0, 0);
}

void PhantomSpec::validate() const {
  require(grid.nx >= 8 && grid.ny >= 8 && grid.nz >= 8, "grid must be at least 8 voxels per axis");
  require(spacing > 0 && std::isfinite(spacing), "spacing must be positive");
  require(head_radius > 0 && shaft_radius > 0 && shaft_length > 0, "humerus dimensions must be positive");
  require(shaft_radius < head_radius, "shaft must be narrower than the head");
  require(glenoid_radius > 0 && glenoid_mismatch > 0 && glenoid_thickness > 0, "glenoid dimensions must be positive");
  require(neck_radius > 0 && neck_length >= 0, "neck dimensions must be non-negative");
  require(joint_gap >= 0, "joint gap must be >= 0");
  require(osteophyte_size >= 0, "osteophyte size must be >= 0");
  require(osteophyte_count >= 1 && osteophyte_count <= 5, "osteophyte count must be in [1, 5]");
  require(osteophyte_width > 0, "osteophyte width must be positive");
  require(eccentric_offset >= 0, "eccentric offset must be >= 0");
  require(cortical_thickness >= 0 && noise_std >= 0, "cortical thickness and noise must be >= 0");
  require(side != Laterality::unknown, "phantom side must be left or right");
  require(head_offset.allFinite(), "head offset must be finite");
  const double socket = head_radius + joint_gap + glenoid_mismatch;
  require(glenoid_radius < socket, "glenoid rim wider than its socket sphere");
  require(eccentric_offset < glenoid_mismatch, "eccentric offset exceeds the socket mismatch");
  const double contact = std::asin(eccentric_offset / glenoid_mismatch);
  const double cap = std::asin(glenoid_radius / socket);
  require(contact < 0.9 * cap, "eccentric offset moves the contact point off the glenoid");
  if (osteophyte_size > 0) {
    // no bump may reach into the glenoid
    const PhantomTruth t = phantom_truth(*this);
    for (const auto& b : bump_directions(*this)) {
      const Eigen::Vector3d ax = b.unitOrthogonal(), ay = b.cross(ax);
      for (int ring = 0; ring <= 6; ++ring) {
        const double th = ring * 0.5 * osteophyte_width;
        for (int k = 0; k < 16; ++k) {
          const double ph = 2 * M_PI * k / 16;
          const Eigen::Vector3d u = std::cos(th) * b + std::sin(th) * (std::cos(ph) * ax + std::sin(ph) * ay);
          const double r = head_radius + osteophyte_size * std::exp(-th * th / (2 * osteophyte_width * osteophyte_width));
          require(scapula_field(*this, t, t.head_center + (r + 0.5) * u) < 0, "osteophyte collides with the glenoid");
        }
      }
    }
  }
}

PhantomTruth phantom_truth(const PhantomSpec& s) {
  PhantomTruth t;
  Eigen::Vector3d offset = s.head_offset;
  if (s.side == Laterality::left) offset.x() = -offset.x();
  const Eigen::Vector3d center(0.5 * (s.grid.nx - 1) * s.spacing, 0.5 * (s.grid.ny - 1) * s.spacing,
                               0.5 * (s.grid.nz - 1) * s.spacing);
  t.head_center = center + offset;
  const Eigen::Vector3d m = s.medial();
  const Eigen::Vector3d shift = std::cos(s.eccentric_angle) * -kAnterior + std::sin(s.eccentric_angle) * kSuperior;
  const double c = s.glenoid_mismatch;
  const double theta = std::asin(std::min(1.0, s.eccentric_offset / c));
  const Eigen::Vector3d dir = std::cos(theta) * m + std::sin(theta) * shift;
  t.glenoid_center = t.head_center - c * dir;
  t.socket_radius = s.head_radius + s.joint_gap + c;
  t.cap_half_angle = std::asin(std::min(1.0, s.glenoid_radius / t.socket_radius));
  t.glenoid_point = t.glenoid_center + t.socket_radius * dir;
  t.joint_center = 0.5 * (t.head_center + t.glenoid_point);
  return t;
}

double humerus_field(const PhantomSpec& s, const PhantomTruth& t, const Eigen::Vector3d& p, bool with_osteophytes) {
  const Eigen::Vector3d d = p - t.head_center;
  const double r = d.norm();
  double radius = s.head_radius;
  if (with_osteophytes && s.osteophyte_size > 0 && r > 0) {
    double g = 0;
    for (const auto& b : bump_directions(s)) {
      const double th = std::acos(std::clamp(d.dot(b) / r, -1.0, 1.0));
      g = std::max(g, std::exp(-th * th / (2 * s.osteophyte_width * s.osteophyte_width)));
    }
    radius += s.osteophyte_size * g;
  }
  const double head = radius - r;
  const double along = -d.z();  // distance below the head centre
  const double radial = std::hypot(d.x(), d.y());
  const double shaft = std::min({s.shaft_radius - radial, along, s.shaft_length - along});
  return std::max(head, shaft);
}

double scapula_field(const PhantomSpec& s, const PhantomTruth& t, const Eigen::Vector3d& p) {
  const Eigen::Vector3d m = s.medial();
  const Eigen::Vector3d q = p - t.glenoid_center;
  const double rho = q.norm();
  const double R = t.socket_radius, T = s.glenoid_thickness;
  double shell = std::min(rho - R, R + T - rho);
  if (rho > 0) {
    const double ang = std::acos(std::clamp(q.dot(m) / rho, -1.0, 1.0));
    shell = std::min(shell, (t.cap_half_angle - ang) * rho);
  } else {
    shell = -R;
  }
  const double along = q.dot(m);
  const double radial = (q - along * m).norm();
  const double neck = std::min({s.neck_radius - radial, along - (R + 0.5 * T), (R + T + s.neck_length) - along});
  return std::max(shell, s.neck_length > 0 ? neck : -1e9);
}

int js_grade_from_gap(double gap) {
  if (!(gap >= 0)) fail(ErrorCode::invalid_distance, "joint gap must be >= 0");
  if (gap > 2.0) return 0;
  if (gap >= 0.5) return 1;
  return 2;
}

int hsa_grade_from_offset(double offset, double glenoid_radius) {
  return offset > 0.25 * glenoid_radius ? 1 : 0;
}

StagingLabels staging_from_spec(const PhantomSpec& s) {
  StagingLabels l;
  l.os = stage_os(s.osteophyte_size);
  l.js = js_grade_from_gap(s.joint_gap);
  l.hsa = hsa_grade_from_offset(s.eccentric_offset, s.glenoid_radius);
  return l;
}

namespace {

TriMesh humerus_mesh(const PhantomSpec& s, const PhantomTruth& t, bool with_osteophytes) {
  const double h = 0.5 * s.spacing;
  const double reach = s.head_radius + (with_osteophytes ? s.osteophyte_size : 0.0) + 2 * h;
  Eigen::Vector3d lo = t.head_center - Eigen::Vector3d(reach, reach, s.shaft_length + 2 * h - 0.0);
  lo.z() = std::min(lo.z(), t.head_center.z() - reach);
  const Eigen::Vector3d hi = t.head_center + Eigen::Vector3d::Constant(reach);
  GridGeometry g;
  for (int a = 0; a < 3; ++a) g.shape[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 1;
  g.spacing = Eigen::Vector3d::Constant(h);
  g.origin = lo;
  Volume field(g, 0.0f);
  for (int k = 0; k < g.shape.nz; ++k)
    for (int j = 0; j < g.shape.ny; ++j)
      for (int i = 0; i < g.shape.nx; ++i) {
        field(i, j, k) = static_cast<float>(humerus_field(s, t, g.world(i, j, k), with_osteophytes));
      }
  MarchingOptions opts;
  opts.iso = 0.0;
  return marching_cubes(field, opts);
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec, bool with_meshes) {
  spec.validate();
  Phantom ph;
  ph.spec = spec;
  ph.truth = phantom_truth(spec);
  ph.staging = staging_from_spec(spec);
  const PhantomTruth& t = ph.truth;

  GridGeometry g;
  g.shape = spec.grid;
  g.spacing = Eigen::Vector3d::Constant(spec.spacing);
  g.laterality = spec.side;
  g.sagittal_axis = 0;
  ph.volume = Volume(g, 0.0f);
  ph.labels = LabelMap(g, label::background);

  auto tissue = [&](const Eigen::Vector3d& p) {
    const double fh = humerus_field(spec, t, p, true);
    if (fh >= 0) return fh < spec.cortical_thickness ? spec.hu_cortical : spec.hu_trabecular;
    const double fs = scapula_field(spec, t, p);
    if (fs >= 0) return fs < spec.cortical_thickness ? spec.hu_cortical : spec.hu_trabecular;
    return spec.hu_soft;
  };

  std::mt19937_64 rng(spec.rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double q = 0.25 * spec.spacing;
  for (int k = 0; k < g.shape.nz; ++k) {
    for (int j = 0; j < g.shape.ny; ++j) {
      for (int i = 0; i < g.shape.nx; ++i) {
        const Eigen::Vector3d c = g.world(i, j, k);
        const double fh = humerus_field(spec, t, c, true);
        const double fs = fh >= 0 ? -1.0 : scapula_field(spec, t, c);
        if (fh >= 0) {
          ph.labels(i, j, k) = label::humerus;
        } else if (fs >= 0) {
          ph.labels(i, j, k) = label::scapula;
        }
        double hu;
        const double margin = spec.spacing;  // fields are ~1-Lipschitz
        const bool flat = fh >= 0 ? std::abs(fh - spec.cortical_thickness) > margin && fh > margin
                                  : std::abs(fs) > margin && std::abs(fs - spec.cortical_thickness) > margin &&
                                        -fh > margin;
        if (flat) {
          hu = tissue(c);
        } else {
          // 2x2x2 supersampling gives partial-volume edges
          hu = 0;
          for (int s = 0; s < 8; ++s) {
            hu += tissue(c + Eigen::Vector3d((s & 1) ? q : -q, (s & 2) ? q : -q, (s & 4) ? q : -q));
          }
          hu /= 8;
        }
        ph.volume(i, j, k) = static_cast<float>(hu + spec.noise_std * noise(rng));
      }
    }
  }

  for (int k = 0; k < g.shape.nz; ++k) {
    for (int j = 0; j < g.shape.ny; ++j) {
      for (int i = 0; i < g.shape.nx; ++i) {
        const bool border = i == 0 || j == 0 || k == 0 || i == g.shape.nx - 1 || j == g.shape.ny - 1 || k == g.shape.nz - 1;
        if (border && ph.labels(i, j, k) != label::background) {
          fail(ErrorCode::grid_overflow, "phantom bone reaches the grid border at voxel (" + std::to_string(i) + "," +
                                             std::to_string(j) + "," + std::to_string(k) + ")");
        }
      }
    }
  }

  if (with_meshes) {
    ph.morph_mesh = humerus_mesh(spec, t, true);
    ph.cleared_mesh = spec.osteophyte_size > 0 ? humerus_mesh(spec, t, false) : ph.morph_mesh;
  }
  return ph;
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = {{"grid", {s.grid.nx, s.grid.ny, s.grid.nz}},
       {"spacing", s.spacing},
       {"head_offset", {s.head_offset.x(), s.head_offset.y(), s.head_offset.z()}},
       {"head_radius", s.head_radius},
       {"shaft_radius", s.shaft_radius},
       {"shaft_length", s.shaft_length},
       {"glenoid_radius", s.glenoid_radius},
       {"glenoid_mismatch", s.glenoid_mismatch},
       {"glenoid_thickness", s.glenoid_thickness},
       {"neck_radius", s.neck_radius},
       {"neck_length", s.neck_length},
       {"joint_gap", s.joint_gap},
       {"osteophyte_size", s.osteophyte_size},
       {"osteophyte_count", s.osteophyte_count},
       {"osteophyte_width", s.osteophyte_width},
       {"eccentric_offset", s.eccentric_offset},
       {"eccentric_angle", s.eccentric_angle},
       {"cortical_thickness", s.cortical_thickness},
       {"hu_cortical", s.hu_cortical},
       {"hu_trabecular", s.hu_trabecular},
       {"hu_soft", s.hu_soft},
       {"noise_std", s.noise_std},
       {"side", to_string(s.side)},
       {"rng_seed", s.rng_seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  PhantomSpec d;
  auto num = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  if (j.contains("grid")) {
    const auto g = j.at("grid").get<std::array<int, 3>>();
    d.grid = {g[0], g[1], g[2]};
  }
  if (j.contains("head_offset")) {
    const auto o = j.at("head_offset").get<std::array<double, 3>>();
    d.head_offset = {o[0], o[1], o[2]};
  }
  num("spacing", d.spacing);
  num("head_radius", d.head_radius);
  num("shaft_radius", d.shaft_radius);
  num("shaft_length", d.shaft_length);
  num("glenoid_radius", d.glenoid_radius);
  num("glenoid_mismatch", d.glenoid_mismatch);
  num("glenoid_thickness", d.glenoid_thickness);
  num("neck_radius", d.neck_radius);
  num("neck_length", d.neck_length);
  num("joint_gap", d.joint_gap);
  num("osteophyte_size", d.osteophyte_size);
  if (j.contains("osteophyte_count")) d.osteophyte_count = j.at("osteophyte_count").get<int>();
  num("osteophyte_width", d.osteophyte_width);
  num("eccentric_offset", d.eccentric_offset);
  num("eccentric_angle", d.eccentric_angle);
  num("cortical_thickness", d.cortical_thickness);
  num("hu_cortical", d.hu_cortical);
  num("hu_trabecular", d.hu_trabecular);
  num("hu_soft", d.hu_soft);
  num("noise_std", d.noise_std);
  if (j.contains("side")) d.side = laterality_from_string(j.at("side").get<std::string>());
  if (j.contains("rng_seed")) d.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s = d;
}

void CohortRanges::validate() const {
  auto range_ok = [](const std::array<double, 2>& r) { return r[0] >= 0 && r[0] <= r[1] && std::isfinite(r[1]); };
  for (int c = 0; c < 3; ++c) {
    require(range_ok(osteophyte[c]) && stage_os(osteophyte[c][0]) == c && stage_os(osteophyte[c][1]) == c,
            "osteophyte range for OS " + std::to_string(c) + " does not stay inside that grade");
    require(range_ok(gap[c]) && js_grade_from_gap(gap[c][0]) == c && js_grade_from_gap(gap[c][1]) == c,
            "gap range for JS " + std::to_string(c) + " does not stay inside that grade");
  }
  for (int c = 0; c < 2; ++c) {
    require(range_ok(eccentric[c]) && hsa_grade_from_offset(eccentric[c][0], 1.0) == c &&
                hsa_grade_from_offset(eccentric[c][1], 1.0) == c,
            "eccentric range for HSA " + std::to_string(c) + " does not stay inside that grade");
  }
  require(range_ok(head_radius) && head_radius[0] > 0, "head radius range invalid");
  require(range_ok(shaft_radius) && shaft_radius[0] > 0, "shaft radius range invalid");
  require(range_ok(glenoid_radius) && glenoid_radius[0] > 0, "glenoid radius range invalid");
  require(jitter >= 0, "jitter must be >= 0");
  require(os_proportions[0] >= 0 && os_proportions[1] >= 0 && os_proportions[2] >= 0 &&
              os_proportions[0] + os_proportions[1] + os_proportions[2] > 0,
          "OS proportions must be non-negative with a positive sum");
}

void to_json(nlohmann::json& j, const CohortRanges& r) {
  j = {{"osteophyte", r.osteophyte}, {"gap", r.gap},
       {"eccentric", r.eccentric},   {"head_radius", r.head_radius},
       {"shaft_radius", r.shaft_radius}, {"glenoid_radius", r.glenoid_radius},
       {"jitter", r.jitter},         {"os_proportions", r.os_proportions}};
}

void from_json(const nlohmann::json& j, CohortRanges& r) {
  CohortRanges d;
  if (j.contains("osteophyte")) j.at("osteophyte").get_to(d.osteophyte);
  if (j.contains("gap")) j.at("gap").get_to(d.gap);
  if (j.contains("eccentric")) j.at("eccentric").get_to(d.eccentric);
  if (j.contains("head_radius")) j.at("head_radius").get_to(d.head_radius);
  if (j.contains("shaft_radius")) j.at("shaft_radius").get_to(d.shaft_radius);
  if (j.contains("glenoid_radius")) j.at("glenoid_radius").get_to(d.glenoid_radius);
  if (j.contains("jitter")) j.at("jitter").get_to(d.jitter);
  if (j.contains("os_proportions")) j.at("os_proportions").get_to(d.os_proportions);
  r = d;
}

std::vector<CohortCase> plan_cohort(int n, const CohortRanges& ranges, const PhantomSpec& base, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::range_error, "cohort size must be >= 1");
  ranges.validate();
  // largest-remainder allocation of OS classes
  const double total = ranges.os_proportions[0] + ranges.os_proportions[1] + ranges.os_proportions[2];
  std::array<int, 3> count{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int c = 0; c < 3; ++c) {
    const double share = n * ranges.os_proportions[c] / total;
    count[c] = static_cast<int>(std::floor(share));
    rem[c] = share - count[c];
    assigned += count[c];
  }
  while (assigned < n) {
    const int c = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
    count[c]++;
    rem[c] = -1;
    assigned++;
  }
  // JS and HSA both vary fastest along this cycle; class c starts at cell 2c so six cases cover it
  static const std::array<std::array<int, 2>, 6> cells{{{0, 0}, {1, 1}, {2, 0}, {0, 1}, {1, 0}, {2, 1}}};
  std::vector<StagingLabels> targets;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < count[c]; ++i) {
      const auto& cell = cells[(i + 2 * c) % 6];
      targets.push_back({c, cell[0], cell[1]});
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(targets.begin(), targets.end(), rng);

  auto uni = [&](const std::array<double, 2>& r) { return std::uniform_real_distribution<double>(r[0], r[1])(rng); };
  std::vector<CohortCase> cases;
  for (int i = 0; i < n; ++i) {
    CohortCase cc;
    char id[32];
    std::snprintf(id, sizeof(id), "case_%04d", i);
    cc.id = id;
    PhantomSpec s = base;
    const StagingLabels& want = targets[i];
    s.osteophyte_size = uni(ranges.osteophyte[want.os]);
    s.joint_gap = uni(ranges.gap[want.js]);
    s.head_radius = uni(ranges.head_radius);
    s.shaft_radius = uni(ranges.shaft_radius);
    s.glenoid_radius = uni(ranges.glenoid_radius);
    s.eccentric_offset = uni(ranges.eccentric[want.hsa]) * s.glenoid_radius;
    s.eccentric_angle = uni({0.0, M_PI / 2});
    for (int a = 0; a < 3; ++a) s.head_offset[a] = base.head_offset[a] + uni({-ranges.jitter, ranges.jitter});
    s.side = (rng() & 1) ? Laterality::left : Laterality::right;
    s.rng_seed = rng();
    s.validate();
    cc.spec = s;
    cc.staging = staging_from_spec(s);
    if (!(cc.staging == want)) fail(ErrorCode::range_error, "sampled case " + cc.id + " left its target grade");
    cases.push_back(cc);
  }
  return cases;
}

namespace {

nlohmann::json record_json(const ManifestRecord& r, const std::filesystem::path& base) {
  auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(base).generic_string(); };
  nlohmann::json j = {{"id", r.id},
          {"volume_path", rel(r.volume_path)},
          {"label_path", rel(r.label_path)},
          {"os", r.staging.os},
          {"js", r.staging.js},
          {"hsa", r.staging.hsa},
          {"spec", r.spec}};
  if (!r.morph_stl.empty()) j["morph_stl"] = rel(r.morph_stl);
  if (!r.cleared_stl.empty()) j["cleared_stl"] = rel(r.cleared_stl);
  if (!r.split.empty()) j["split"] = r.split;
  return j;
}

}  // namespace

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRecord>& records) {
  const auto base = std::filesystem::absolute(manifest).parent_path();
  std::string out;
  for (const auto& r : records) out += record_json(r, base).dump() + "\n";
  atomic_write(manifest, out);
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest) {
  const std::string text = read_file(manifest);
  const auto base = std::filesystem::absolute(manifest).parent_path();
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      auto path = [&](const char* key) {
        const std::filesystem::path p = j.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
      };
      r.volume_path = path("volume_path");
      r.label_path = path("label_path");
      r.morph_stl = j.contains("morph_stl") ? path("morph_stl") : std::filesystem::path{};
      r.cleared_stl = j.contains("cleared_stl") ? path("cleared_stl") : std::filesystem::path{};
      r.staging = {j.at("os").get<int>(), j.at("js").get<int>(), j.at("hsa").get<int>()};
      r.staging.validate();
      if (j.contains("spec")) r.spec = j.at("spec").get<PhantomSpec>();
      if (j.contains("split")) r.split = j.at("split").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format_error, manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path generate_cohort(int n, const CohortRanges& ranges, const PhantomSpec& base, std::uint64_t seed,
                                      const std::filesystem::path& out_dir) {
  const auto cases = plan_cohort(n, ranges, base, seed);
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestRecord> records;
  for (const auto& c : cases) {
    const Phantom ph = generate_phantom(c.spec, true);
    ManifestRecord r;
    r.id = c.id;
    r.volume_path = out_dir / (c.id + "_ct.nii");
    r.label_path = out_dir / (c.id + "_labels.nii");
    r.morph_stl = out_dir / (c.id + "_humerus_morph.stl");
    r.cleared_stl = out_dir / (c.id + "_humerus_cleared.stl");
    r.staging = ph.staging;
    r.spec = c.spec;
    write_volume(r.volume_path, ph.volume);
    write_labelmap(r.label_path, ph.labels);
    write_stl(ph.morph_mesh, r.morph_stl.string());
    write_stl(ph.cleared_mesh, r.cleared_stl.string());
    records.push_back(std::move(r));
  }
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace ghc
