#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "recon/mesh.hpp"

namespace ghc {

struct MarchingOptions {
  double iso = 0.5;
  double smooth_sigma = 0.0;  // voxels; 0 disables the Gaussian pre-pass
  // Treat the region outside the grid as below iso so surfaces touching the
  // border still close.
  bool close_boundary = true;
};

/// Isosurface of `field` at `iso`, in world millimetres. Triangles wind so
/// their normals point from the above-iso side to the below-iso side.
/// Throws EmptySurface when no voxel lies on one side of iso.
TriMesh marching_cubes(const Volume& field, const MarchingOptions& opts = {});

/// Surface of one label class of a label map (binary mask at iso 0.5).
TriMesh marching_cubes(const LabelMap& labels, std::uint8_t cls, const MarchingOptions& opts = {});

namespace mc {

// Corner c of a unit cell sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline constexpr std::array<std::array<int, 2>, 12> kEdges{{{0, 1},
                                                            {2, 3},
                                                            {4, 5},
                                                            {6, 7},
                                                            {0, 2},
                                                            {1, 3},
                                                            {4, 6},
                                                            {5, 7},
                                                            {0, 4},
                                                            {1, 5},
                                                            {2, 6},
                                                            {3, 7}}};

/// Triangles (as cell-edge triplets) for a configuration whose bit c is set
/// when corner c lies above iso.
const std::vector<std::array<int, 3>>& case_triangles(int config);

}  // namespace mc

}  // namespace ghc
