#include "volcore/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace ghc {

Volume normalize_hu(const Volume& vol) {
  Volume out(vol.geometry());
  const auto& src = vol.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i];
    if (!std::isfinite(v)) fail(ErrorCode::invalid_intensity, "non-finite voxel at offset " + std::to_string(i));
    dst[i] = static_cast<float>((std::clamp(v, kHuMin, kHuMax) - kHuMin) / (kHuMax - kHuMin));
  }
  return out;
}

Box3 foreground_box(const LabelMap& labels) {
  Box3 box{{labels.nx(), labels.ny(), labels.nz()}, {-1, -1, -1}};
  for (int k = 0; k < labels.nz(); ++k) {
    for (int j = 0; j < labels.ny(); ++j) {
      for (int i = 0; i < labels.nx(); ++i) {
        if (labels(i, j, k) == label::background) continue;
        box.lo = {std::min(box.lo[0], i), std::min(box.lo[1], j), std::min(box.lo[2], k)};
        box.hi = {std::max(box.hi[0], i), std::max(box.hi[1], j), std::max(box.hi[2], k)};
      }
    }
  }
  return box;
}

template <typename T>
Grid3<T> crop(const Grid3<T>& grid, const Box3& box) {
  if (box.empty()) fail(ErrorCode::shape_error, "crop box is empty");
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] < 0 || box.hi[a] >= grid.shape()[a]) fail(ErrorCode::shape_error, "crop box exceeds grid");
  }
  GridGeometry g = grid.geometry();
  g.shape = box.extent();
  g.origin = grid.geometry().world(box.lo[0], box.lo[1], box.lo[2]);
  Grid3<T> out(g);
  for (int k = 0; k < g.shape.nz; ++k) {
    for (int j = 0; j < g.shape.ny; ++j) {
      const T* src = &grid(box.lo[0], box.lo[1] + j, box.lo[2] + k);
      std::copy(src, src + g.shape.nx, &out(0, j, k));
    }
  }
  return out;
}

template Grid3<float> crop(const Grid3<float>&, const Box3&);
template Grid3<std::uint8_t> crop(const Grid3<std::uint8_t>&, const Box3&);

std::pair<Volume, LabelMap> crop_to_foreground(const Volume& vol, const LabelMap& labels, int margin) {
  if (!vol.geometry().same_grid(labels.geometry())) fail(ErrorCode::shape_error, "volume and label map grids differ");
  if (margin < 0) fail(ErrorCode::invalid_argument, "crop margin must be >= 0");
  Box3 box = foreground_box(labels);
  if (box.empty()) fail(ErrorCode::empty_foreground, "label map has no humerus or scapula voxels");
  for (int a = 0; a < 3; ++a) {
    box.lo[a] = std::max(0, box.lo[a] - margin);
    box.hi[a] = std::min(vol.shape()[a] - 1, box.hi[a] + margin);
  }
  return {crop(vol, box), crop(labels, box)};
}

template <typename T>
Grid3<T> flip_sagittal(const Grid3<T>& grid) {
  const auto& g = grid.geometry();
  if (!g.sagittal_axis) fail(ErrorCode::orientation_unknown, "volume carries no orientation metadata");
  const int axis = *g.sagittal_axis;
  GridGeometry og = g;
  og.laterality = opposite(g.laterality);
  Grid3<T> out(og);
  const int n = g.shape[axis];
  for (int k = 0; k < g.shape.nz; ++k) {
    for (int j = 0; j < g.shape.ny; ++j) {
      for (int i = 0; i < g.shape.nx; ++i) {
        Index3 src{i, j, k};
        src[axis] = n - 1 - src[axis];
        out(i, j, k) = grid(src[0], src[1], src[2]);
      }
    }
  }
  return out;
}

template Grid3<float> flip_sagittal(const Grid3<float>&);
template Grid3<std::uint8_t> flip_sagittal(const Grid3<std::uint8_t>&);

Volume gaussian_smooth(const Volume& vol, double sigma) {
  if (!(sigma > 0.0)) return vol;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) sum += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& w : kernel) w /= sum;

  Volume cur = vol;
  for (int axis = 0; axis < 3; ++axis) {
    Volume next(cur.geometry());
    const int n = cur.shape()[axis];
    for (int k = 0; k < cur.nz(); ++k) {
      for (int j = 0; j < cur.ny(); ++j) {
        for (int i = 0; i < cur.nx(); ++i) {
          Index3 p{i, j, k};
          const int c = p[axis];
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            p[axis] = std::clamp(c + t, 0, n - 1);
            acc += kernel[t + radius] * cur(p[0], p[1], p[2]);
          }
          next(i, j, k) = static_cast<float>(acc);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace ghc
