#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "recon/mesh.hpp"
#include "volcore/volume.hpp"

namespace ghc {

/// Parametric shoulder: humerus = head sphere (with Gaussian osteophyte
/// bumps) + shaft cylinder running inferiorly; scapula = shallow spherical
/// glenoid shell with a cylindrical neck. World axes: x lateral-medial
/// (sagittal axis), y anterior, z superior. Lengths in mm.
struct PhantomSpec {
  Shape3 grid{96, 96, 96};
  double spacing = 1.25;
  Eigen::Vector3d head_offset{-10.0, 0.0, 10.0};  // head centre relative to grid centre

  double head_radius = 24.0;
  double shaft_radius = 11.0;
  double shaft_length = 50.0;

  double glenoid_radius = 20.0;     // rim radius of the glenoid face
  double glenoid_mismatch = 30.0;   // socket curvature radius minus (head radius + gap)
  double glenoid_thickness = 8.0;
  double neck_radius = 12.0;
  double neck_length = 15.0;

  double joint_gap = 3.0;           // minimum head-to-glenoid clearance
  double osteophyte_size = 0.0;     // bump apex height s_o
  int osteophyte_count = 1;
  double osteophyte_width = 0.33;   // angular std of each bump, radians
  double eccentric_offset = 0.0;    // head displacement across the glenoid axis
  double eccentric_angle = 0.0;     // radians: 0 posterior .. pi/2 superior

  double cortical_thickness = 2.0;
  double hu_cortical = 1200.0, hu_trabecular = 300.0, hu_soft = 40.0;
  double noise_std = 20.0;
  Laterality side = Laterality::right;
  std::uint64_t rng_seed = 1;

  /// Throws RangeError for invalid or geometrically infeasible parameters.
  void validate() const;
  Eigen::Vector3d medial() const;  // unit vector from head towards glenoid
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

/// Staging rules applied to the generating parameters.
int js_grade_from_gap(double gap_mm);
int hsa_grade_from_offset(double offset_mm, double glenoid_radius_mm);
StagingLabels staging_from_spec(const PhantomSpec& spec);

/// Analytic reference geometry of one phantom.
struct PhantomTruth {
  Eigen::Vector3d head_center;
  Eigen::Vector3d glenoid_center;   // centre of the socket sphere
  Eigen::Vector3d glenoid_point;    // socket surface point nearest the head centre
  Eigen::Vector3d joint_center;     // midpoint of head centre and glenoid point
  double socket_radius = 0;
  double cap_half_angle = 0;
};

PhantomTruth phantom_truth(const PhantomSpec& spec);

/// Implicit fields, positive inside (approximate signed distance, mm).
double humerus_field(const PhantomSpec& spec, const PhantomTruth& t, const Eigen::Vector3d& p, bool with_osteophytes);
double scapula_field(const PhantomSpec& spec, const PhantomTruth& t, const Eigen::Vector3d& p);

struct Phantom {
  PhantomSpec spec;
  PhantomTruth truth;
  Volume volume;  // HU
  LabelMap labels;
  TriMesh morph_mesh;    // humerus with osteophytes
  TriMesh cleared_mesh;  // same humerus with osteophytes removed
  StagingLabels staging;
};

/// Throws GridOverflow when either bone reaches the grid border.
Phantom generate_phantom(const PhantomSpec& spec, bool with_meshes = true);

/// Per-class sampling ranges for the staging-driving parameters, plus
/// nuisance ranges. The defaults keep clear of every grading threshold.
struct CohortRanges {
  std::array<std::array<double, 2>, 3> osteophyte{{{0.0, 2.5}, {3.5, 6.5}, {7.5, 10.0}}};
  std::array<std::array<double, 2>, 3> gap{{{3.0, 5.0}, {0.8, 1.7}, {0.0, 0.3}}};
  // eccentric offset as a fraction of the glenoid radius
  std::array<std::array<double, 2>, 2> eccentric{{{0.0, 0.15}, {0.35, 0.45}}};
  std::array<double, 2> head_radius{22.0, 26.0};
  std::array<double, 2> shaft_radius{10.0, 12.0};
  std::array<double, 2> glenoid_radius{18.0, 22.0};
  double jitter = 5.0;  // uniform head position jitter per axis
  std::array<double, 3> os_proportions{1.0, 1.0, 1.0};

  void validate() const;
};

void to_json(nlohmann::json& j, const CohortRanges& r);
void from_json(const nlohmann::json& j, CohortRanges& r);

struct CohortCase {
  std::string id;
  PhantomSpec spec;
  StagingLabels staging;
};

/// Stratified specs: OS counts follow the proportions (largest remainder),
/// and within each OS class the six (JS, HSA) cells are cycled so every
/// cell appears once a class holds six cases, and both HSA grades once it
/// holds two. Deterministic in `seed`.
std::vector<CohortCase> plan_cohort(int n, const CohortRanges& ranges, const PhantomSpec& base, std::uint64_t seed);

struct ManifestRecord {
  std::string id;
  std::filesystem::path volume_path, label_path, morph_stl, cleared_stl;  // absolute after loading
  StagingLabels staging;
  PhantomSpec spec;
  std::string split;  // optional "train" / "val" / "test"
};

/// Generates and writes every case under `out_dir` and returns the manifest
/// path (`manifest.jsonl`, paths relative to it).
std::filesystem::path generate_cohort(int n, const CohortRanges& ranges, const PhantomSpec& base, std::uint64_t seed,
                                      const std::filesystem::path& out_dir);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRecord>& records);

}  // namespace ghc
