#include "losses/edt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ghc {

std::vector<std::uint8_t> boundary_mask(const Shape3& shape, std::span<const std::uint8_t> labels, std::uint8_t c) {
  if (labels.size() != shape.voxels()) fail(ErrorCode::shape_error, "label span does not match shape");
  std::vector<std::uint8_t> mask(labels.size(), 0);
  const std::size_t sx = 1, sy = static_cast<std::size_t>(shape.nx), sz = sy * static_cast<std::size_t>(shape.ny);
  std::size_t v = 0;
  for (int k = 0; k < shape.nz; ++k) {
    for (int j = 0; j < shape.ny; ++j) {
      for (int i = 0; i < shape.nx; ++i, ++v) {
        if (labels[v] != c) continue;
        const bool edge = (i > 0 && labels[v - sx] != c) || (i + 1 < shape.nx && labels[v + sx] != c) ||
                          (j > 0 && labels[v - sy] != c) || (j + 1 < shape.ny && labels[v + sy] != c) ||
                          (k > 0 && labels[v - sz] != c) || (k + 1 < shape.nz && labels[v + sz] != c);
        mask[v] = edge ? 1 : 0;
      }
    }
  }
  return mask;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional lower envelope of parabolas w*(q - v)^2 + f(v), taken over
// the finite samples only; z[0] = -inf guarantees the pop loop stops at k = 0.
void envelope_1d(const double* f, double* d, int n, double w, std::vector<int>& v, std::vector<double>& z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = w * dq * dq + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_edt(const Shape3& shape, std::span<const std::uint8_t> features,
                                const Eigen::Vector3d& axis_scale) {
  if (features.size() != shape.voxels()) fail(ErrorCode::shape_error, "feature span does not match shape");
  std::vector<double> dist(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) dist[i] = features[i] ? 0.0 : kInf;

  const int maxn = std::max({shape.nx, shape.ny, shape.nz});
  std::vector<double> line(maxn), out(maxn), z(maxn + 1);
  std::vector<int> v(maxn);
  const std::size_t stride[3] = {1, static_cast<std::size_t>(shape.nx),
                                 static_cast<std::size_t>(shape.nx) * static_cast<std::size_t>(shape.ny)};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = shape[axis];
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const double w = axis_scale[axis] * axis_scale[axis];
    for (int u2 = 0; u2 < shape[a2]; ++u2) {
      for (int u1 = 0; u1 < shape[a1]; ++u1) {
        const std::size_t base = u1 * stride[a1] + u2 * stride[a2];
        for (int q = 0; q < n; ++q) line[q] = dist[base + q * stride[axis]];
        envelope_1d(line.data(), out.data(), n, w, v, z);
        for (int q = 0; q < n; ++q) dist[base + q * stride[axis]] = out[q];
      }
    }
  }
  return dist;
}

Volume edt(const LabelMap& labels, std::uint8_t c, bool use_spacing) {
  const auto& data = labels.data();
  if (std::find(data.begin(), data.end(), c) == data.end()) {
    fail(ErrorCode::empty_class, "class " + std::to_string(int(c)) + " absent from label map");
  }
  const auto mask = boundary_mask(labels.shape(), data, c);
  const Eigen::Vector3d scale = use_spacing ? labels.geometry().spacing : Eigen::Vector3d::Ones();
  const auto sq = squared_edt(labels.shape(), mask, scale);
  Volume out(labels.geometry());
  for (std::size_t i = 0; i < sq.size(); ++i) out.data()[i] = static_cast<float>(std::sqrt(sq[i]));
  return out;
}

}  // namespace ghc
