#pragma once

#include <vector>

#include <Eigen/Core>

#include "recon/mesh.hpp"
#include "volcore/volume.hpp"

namespace ghc {

struct HeadFit {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // world mm
  double radius = 0;
  double rms_residual = 0;
  int inlier_count = 0;
};

inline constexpr int kMinHeadPoints = 50;

/// Algebraic (Coope) least-squares sphere followed by Gauss-Newton on the
/// geometric residual. Throws InsufficientSurface below 50 points.
HeadFit fit_sphere(const std::vector<Eigen::Vector3d>& points);

/// Points of the proximal third of a long bone: the principal axis is split
/// into thirds and the end with the larger mean distance from the axis (the
/// head) is kept.
std::vector<Eigen::Vector3d> proximal_third(const std::vector<Eigen::Vector3d>& points);

/// Sphere fit to the proximal third of the humerus surface.
HeadFit fit_humeral_head(const TriMesh& humerus);
HeadFit fit_humeral_head(const LabelMap& labels);

/// patch^3 voxel box; may start below zero or run past the grid only when the
/// grid is smaller than the patch on that axis (extraction edge-pads).
struct GhBox {
  Index3 lo{0, 0, 0};
  int patch = 160;
  Eigen::Vector3d joint_center = Eigen::Vector3d::Zero();  // world mm

  Index3 hi() const { return {lo[0] + patch - 1, lo[1] + patch - 1, lo[2] + patch - 1}; }
  bool contains(int i, int j, int k) const {
    return i >= lo[0] && j >= lo[1] && k >= lo[2] && i < lo[0] + patch && j < lo[1] + patch && k < lo[2] + patch;
  }
};

/// Box centred on the midpoint between the head centre and the nearest
/// scapula surface voxel, shifted to stay inside the grid. Throws
/// MissingScapula when the map has no scapula voxel.
GhBox gh_bounding_box(const HeadFit& fit, const LabelMap& labels, int patch = 160);

}  // namespace ghc
