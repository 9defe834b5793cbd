#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "volcore/volume.hpp"

namespace ghc {

/// Class-c voxels with at least one in-grid 6-neighbour of another class.
/// This is both the EDT feature set and the contour-branch edge target.
std::vector<std::uint8_t> boundary_mask(const Shape3& shape, std::span<const std::uint8_t> labels, std::uint8_t c);

/// Exact squared Euclidean distance to the nearest set voxel of `features`
/// (separable lower-envelope transform). `axis_scale` multiplies each axis
/// step, so (1,1,1) gives voxel units. Returns +inf everywhere when the mask
/// is empty.
std::vector<double> squared_edt(const Shape3& shape, std::span<const std::uint8_t> features,
                                const Eigen::Vector3d& axis_scale = Eigen::Vector3d::Ones());

/// Distance (voxels, or mm when `use_spacing`) from every voxel to the
/// boundary of class c. Throws EmptyClass when c is absent.
Volume edt(const LabelMap& labels, std::uint8_t c, bool use_spacing = false);

}  // namespace ghc
