#pragma once

#include <vector>

#include "volcore/volume.hpp"

namespace ghc {

/// Overlapping patch layout over a volume. When an axis is shorter than the
/// patch, the volume is edge-replicated up to `padded`.
struct PatchGrid {
  Index3 patch_size{160, 160, 160};
  Index3 stride{120, 120, 120};
  Shape3 padded;
  std::vector<Index3> offsets;  // sorted, unique
};

/// ~25% overlap: stride = round(0.75 * patch).
int default_stride(int patch_size) noexcept;

std::vector<int> axis_offsets(int extent, int patch, int stride);

PatchGrid make_patch_grid(const Shape3& shape, const Index3& patch_size, const Index3& stride);
PatchGrid make_patch_grid(const Shape3& shape, int patch_size, int stride);

/// Copies a patch_size block starting at `offset`; indices beyond the grid
/// clamp to the nearest edge voxel.
template <typename T>
std::vector<T> extract_patch(const Grid3<T>& grid, const Index3& offset, const Index3& patch_size);

/// Per-class probability map laid out class-major: data[c * voxels + v].
struct ProbabilityMap {
  GridGeometry geometry;
  int classes = 0;
  std::vector<float> data;

  std::size_t voxels() const noexcept { return geometry.shape.voxels(); }
  float at(int c, std::size_t v) const noexcept { return data[static_cast<std::size_t>(c) * voxels() + v]; }
};

struct PatchPrediction {
  Index3 offset{0, 0, 0};
  Index3 size{0, 0, 0};
  std::vector<float> probs;  // class-major, classes * prod(size)
};

/// Uniform mean of every covering patch per voxel, renormalised over classes.
/// Accumulates in sorted-offset order so the result is independent of the
/// order patches are supplied. Throws CoverageGap for an uncovered voxel.
ProbabilityMap merge_patches(const std::vector<PatchPrediction>& patches, const GridGeometry& geometry, int classes);

LabelMap argmax_labels(const ProbabilityMap& probs);

}  // namespace ghc
