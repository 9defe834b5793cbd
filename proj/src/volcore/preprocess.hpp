#pragma once

#include <optional>
#include <utility>

#include "volcore/volume.hpp"

namespace ghc {

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 2500.0;

/// Clips HU to [-1024, 2500] and rescales linearly to [0, 1].
/// Throws InvalidIntensity on a non-finite voxel.
Volume normalize_hu(const Volume& vol);

/// Inclusive voxel bounding box.
struct Box3 {
  Index3 lo{0, 0, 0};
  Index3 hi{-1, -1, -1};

  bool empty() const noexcept { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }
  Shape3 extent() const noexcept { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
  bool contains(int i, int j, int k) const noexcept {
    return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] && k >= lo[2] && k <= hi[2];
  }
};

/// Tight box around labels {1, 2}; empty box when there is no foreground.
Box3 foreground_box(const LabelMap& labels);

/// Sub-grid copy with origin shifted so world coordinates are preserved.
template <typename T>
Grid3<T> crop(const Grid3<T>& grid, const Box3& box);

std::pair<Volume, LabelMap> crop_to_foreground(const Volume& vol, const LabelMap& labels, int margin);

/// Mirrors along the sagittal axis and toggles laterality. Staging labels
/// pass through untouched: a mirrored joint keeps its pathology grade.
template <typename T>
Grid3<T> flip_sagittal(const Grid3<T>& grid);

template <typename T>
std::pair<Grid3<T>, std::optional<StagingLabels>> flip_sagittal(const Grid3<T>& grid,
                                                                 const std::optional<StagingLabels>& labels) {
  return {flip_sagittal(grid), labels};
}

/// Optional mask pre-smoothing (separable Gaussian, voxel units).
Volume gaussian_smooth(const Volume& vol, double sigma_voxels);

}  // namespace ghc
