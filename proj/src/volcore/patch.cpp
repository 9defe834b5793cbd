#include "volcore/patch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ghc {

int default_stride(int patch_size) noexcept {
  return std::max(1, static_cast<int>(std::lround(0.75 * patch_size)));
}

std::vector<int> axis_offsets(int extent, int patch, int stride) {
  if (patch < 1 || stride < 1) fail(ErrorCode::invalid_argument, "patch size and stride must be >= 1");
  const int padded = std::max(extent, patch);
  std::vector<int> offs;
  for (int o = 0;; o += stride) {
    if (o + patch >= padded) {
      offs.push_back(padded - patch);
      break;
    }
    offs.push_back(o);
  }
  std::sort(offs.begin(), offs.end());
  offs.erase(std::unique(offs.begin(), offs.end()), offs.end());
  return offs;
}

PatchGrid make_patch_grid(const Shape3& shape, const Index3& patch_size, const Index3& stride) {
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  std::array<std::vector<int>, 3> per_axis;
  for (int a = 0; a < 3; ++a) {
    grid.padded[a] = std::max(shape[a], patch_size[a]);
    per_axis[a] = axis_offsets(shape[a], patch_size[a], stride[a]);
  }
  for (int z : per_axis[2]) {
    for (int y : per_axis[1]) {
      for (int x : per_axis[0]) grid.offsets.push_back({x, y, z});
    }
  }
  std::sort(grid.offsets.begin(), grid.offsets.end());
  return grid;
}

PatchGrid make_patch_grid(const Shape3& shape, int patch_size, int stride) {
  return make_patch_grid(shape, {patch_size, patch_size, patch_size}, {stride, stride, stride});
}

template <typename T>
std::vector<T> extract_patch(const Grid3<T>& grid, const Index3& offset, const Index3& size) {
  std::vector<T> out(static_cast<std::size_t>(size[0]) * size[1] * size[2]);
  std::size_t idx = 0;
  for (int k = 0; k < size[2]; ++k) {
    const int gk = std::clamp(offset[2] + k, 0, grid.nz() - 1);
    for (int j = 0; j < size[1]; ++j) {
      const int gj = std::clamp(offset[1] + j, 0, grid.ny() - 1);
      for (int i = 0; i < size[0]; ++i) {
        out[idx++] = grid(std::clamp(offset[0] + i, 0, grid.nx() - 1), gj, gk);
      }
    }
  }
  return out;
}

template std::vector<float> extract_patch(const Grid3<float>&, const Index3&, const Index3&);
template std::vector<std::uint8_t> extract_patch(const Grid3<std::uint8_t>&, const Index3&, const Index3&);

ProbabilityMap merge_patches(const std::vector<PatchPrediction>& patches, const GridGeometry& geometry, int classes) {
  if (classes < 1) fail(ErrorCode::invalid_argument, "classes must be >= 1");
  const Shape3 shape = geometry.shape;
  const std::size_t n = shape.voxels();
  std::vector<double> acc(n * classes, 0.0);
  std::vector<std::uint32_t> hits(n, 0);

  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return patches[a].offset < patches[b].offset; });

  for (std::size_t pi : order) {
    const auto& p = patches[pi];
    const std::size_t pv = static_cast<std::size_t>(p.size[0]) * p.size[1] * p.size[2];
    if (p.probs.size() != pv * classes) fail(ErrorCode::shape_error, "patch probability payload has wrong size");
    for (int k = 0; k < p.size[2]; ++k) {
      const int gk = p.offset[2] + k;
      if (gk < 0 || gk >= shape.nz) continue;
      for (int j = 0; j < p.size[1]; ++j) {
        const int gj = p.offset[1] + j;
        if (gj < 0 || gj >= shape.ny) continue;
        for (int i = 0; i < p.size[0]; ++i) {
          const int gi = p.offset[0] + i;
          if (gi < 0 || gi >= shape.nx) continue;
          const std::size_t local = static_cast<std::size_t>(i) + p.size[0] * (static_cast<std::size_t>(j) + p.size[1] * k);
          const std::size_t v = static_cast<std::size_t>(gi) + shape.nx * (static_cast<std::size_t>(gj) + shape.ny * gk);
          ++hits[v];
          for (int c = 0; c < classes; ++c) acc[c * n + v] += p.probs[c * pv + local];
        }
      }
    }
  }

  ProbabilityMap out{geometry, classes, std::vector<float>(n * classes)};
  for (std::size_t v = 0; v < n; ++v) {
    if (hits[v] == 0) fail(ErrorCode::coverage_gap, "voxel " + std::to_string(v) + " is not covered by any patch");
    double total = 0.0;
    for (int c = 0; c < classes; ++c) total += acc[c * n + v];
    for (int c = 0; c < classes; ++c) {
      const double mean = acc[c * n + v] / hits[v];
      const double norm = total > 0.0 ? acc[c * n + v] / total : 1.0 / classes;
      out.data[c * n + v] = static_cast<float>(classes == 1 ? mean : norm);
    }
  }
  return out;
}

LabelMap argmax_labels(const ProbabilityMap& probs) {
  LabelMap out(probs.geometry);
  const std::size_t n = probs.voxels();
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    for (int c = 1; c < probs.classes; ++c) {
      if (probs.at(c, v) > probs.at(best, v)) best = c;
    }
    out.data()[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace ghc
