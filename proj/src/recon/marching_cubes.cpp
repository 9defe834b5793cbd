#include "recon/marching_cubes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <Eigen/Geometry>

#include "volcore/preprocess.hpp"

namespace ghc {

namespace mc {
namespace {

Eigen::Vector3d corner_pos(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((kEdges[e][0] == a && kEdges[e][1] == b) || (kEdges[e][0] == b && kEdges[e][1] == a)) return e;
  }
  return -1;
}

// Corners of each cell face, ordered counter-clockwise seen from outside.
std::array<std::array<int, 4>, 6> face_cycles() {
  std::array<std::array<int, 4>, 6> faces{};
  for (int f = 0; f < 6; ++f) {
    const int axis = f / 2, side = f % 2;
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    n[axis] = side ? 1.0 : -1.0;
    std::vector<int> cs;
    for (int c = 0; c < 8; ++c) {
      if (((c >> axis) & 1) == side) cs.push_back(c);
    }
    const Eigen::Vector3d center = Eigen::Vector3d::Constant(0.5) + 0.5 * n;
    Eigen::Vector3d u = Eigen::Vector3d::Zero();
    u[(axis + 1) % 3] = 1.0;
    const Eigen::Vector3d v = n.cross(u);
    std::sort(cs.begin(), cs.end(), [&](int a, int b) {
      const Eigen::Vector3d pa = corner_pos(a) - center, pb = corner_pos(b) - center;
      return std::atan2(pa.dot(v), pa.dot(u)) < std::atan2(pb.dot(v), pb.dot(u));
    });
    std::copy(cs.begin(), cs.end(), faces[f].begin());
  }
  return faces;
}

// Each face contributes one directed segment per run of above-iso corners,
// cutting that run off on its own; diagonal pairs are therefore always
// separated, and both cells sharing a face agree on the cut. Chaining the
// segments gives closed loops that are fan-triangulated.
std::vector<std::array<int, 3>> build_case(int config, const std::array<std::array<int, 4>, 6>& faces, bool flip) {
  std::map<int, int> next;
  for (const auto& cyc : faces) {
    std::array<bool, 4> in{};
    int count = 0;
    for (int i = 0; i < 4; ++i) count += in[i] = (config >> cyc[i]) & 1;
    if (count == 0 || count == 4) continue;
    for (int s = 0; s < 4; ++s) {
      if (!in[s] || in[(s + 3) % 4]) continue;  // s starts a run
      int e = s;
      while (in[(e + 1) % 4]) e = (e + 1) % 4;
      const int entry = edge_between(cyc[(s + 3) % 4], cyc[s]);
      const int exit = edge_between(cyc[e], cyc[(e + 1) % 4]);
      next[exit] = entry;
    }
  }
  // faces touched by each edge, to reject fan triangles lying flat in a
  // cell face (they would pair with the neighbour's copy into a fin)
  std::array<int, 12> face_mask{};
  for (int f = 0; f < 6; ++f) {
    for (int i = 0; i < 4; ++i) face_mask[edge_between(faces[f][i], faces[f][(i + 1) % 4])] |= 1 << f;
  }
  std::vector<std::array<int, 3>> tris;
  while (!next.empty()) {
    std::vector<int> loop{next.begin()->first};
    for (int e = next.begin()->second; e != loop.front(); e = next.at(e)) loop.push_back(e);
    for (int e : loop) next.erase(e);
    const std::size_t n = loop.size();
    std::size_t root = 0;
    for (; root < n; ++root) {
      bool flat = false;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        const int a = loop[root], b = loop[(root + i) % n], c = loop[(root + i + 1) % n];
        flat = flat || (face_mask[a] & face_mask[b] & face_mask[c]) != 0;
      }
      if (!flat) break;
    }
    if (root == n) throw std::logic_error("marching cubes: no valid fan for case " + std::to_string(config));
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const int a = loop[root], b = loop[(root + i) % n], c = loop[(root + i + 1) % n];
      if (flip) {
        tris.push_back({a, c, b});
      } else {
        tris.push_back({a, b, c});
      }
    }
  }
  return tris;
}

std::array<std::vector<std::array<int, 3>>, 256> build_table() {
  const auto faces = face_cycles();
  // Pick the winding once, from the single-corner case: its normal must
  // point away from the above-iso corner.
  const auto probe = build_case(1, faces, false);
  auto mid = [](int e) -> Eigen::Vector3d { return 0.5 * (corner_pos(kEdges[e][0]) + corner_pos(kEdges[e][1])); };
  const auto& t = probe.at(0);
  const Eigen::Vector3d n = (mid(t[1]) - mid(t[0])).cross(mid(t[2]) - mid(t[0]));
  const bool flip = n.dot(mid(t[0]) - corner_pos(0)) < 0;
  std::array<std::vector<std::array<int, 3>>, 256> table;
  for (int c = 0; c < 256; ++c) table[c] = build_case(c, faces, flip);
  return table;
}

}  // namespace

const std::vector<std::array<int, 3>>& case_triangles(int config) {
  static const auto table = build_table();
  return table.at(config);
}

}  // namespace mc

TriMesh marching_cubes(const Volume& input, const MarchingOptions& opts) {
  const Volume smoothed = opts.smooth_sigma > 0 ? gaussian_smooth(input, opts.smooth_sigma) : Volume{};
  const Volume& field = opts.smooth_sigma > 0 ? smoothed : input;
  const double iso = opts.iso;
  bool any_above = false, any_below = false;
  float lowest = std::numeric_limits<float>::infinity();
  for (float v : field.data()) {
    if (!std::isfinite(v)) fail(ErrorCode::invalid_intensity, "non-finite value in isosurface field");
    (v > iso ? any_above : any_below) = true;
    lowest = std::min(lowest, v);
  }
  if (!any_above || !any_below) fail(ErrorCode::empty_surface, "field lies entirely on one side of the iso level");

  const GridGeometry& g = field.geometry();
  const int nx = g.shape.nx, ny = g.shape.ny, nz = g.shape.nz;
  const float pad = static_cast<float>(std::min<double>(lowest, iso));
  auto value = [&](int i, int j, int k) -> float { return field.contains(i, j, k) ? field(i, j, k) : pad; };

  TriMesh mesh;
  std::unordered_map<std::int64_t, int> edge_vertex;
  // cell edges are keyed by their lower grid point (shifted by one for the
  // padding ring) and axis
  const std::int64_t sx = nx + 2, sy = ny + 2;
  auto vertex_on = [&](int i, int j, int k, int axis) {
    const std::int64_t key = ((std::int64_t(k + 1) * sy + (j + 1)) * sx + (i + 1)) * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    int i2 = i, j2 = j, k2 = k;
    (axis == 0 ? i2 : axis == 1 ? j2 : k2) += 1;
    const double a = value(i, j, k), b = value(i2, j2, k2);
    const double t = std::clamp((iso - a) / (b - a), 0.0, 1.0);
    mesh.vertices.push_back(g.world(i + t * (i2 - i), j + t * (j2 - j), k + t * (k2 - k)));
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };

  const int lo = opts.close_boundary ? -1 : 0;
  const int hx = opts.close_boundary ? nx : nx - 1, hy = opts.close_boundary ? ny : ny - 1,
            hz = opts.close_boundary ? nz : nz - 1;
  for (int k = lo; k < hz; ++k) {
    for (int j = lo; j < hy; ++j) {
      for (int i = lo; i < hx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > iso) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        for (const auto& tri : mc::case_triangles(config)) {
          std::array<int, 3> ids{};
          for (int q = 0; q < 3; ++q) {
            const auto& e = mc::kEdges[tri[q]];
            const int c = e[0];
            ids[q] = vertex_on(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1), (e[1] - e[0]) == 1 ? 0 : (e[1] - e[0]) == 2 ? 1 : 2);
          }
          mesh.triangles.push_back(ids);
        }
      }
    }
  }
  mesh.cleanup();
  if (mesh.empty()) fail(ErrorCode::empty_surface, "isosurface has no triangles");
  return mesh;
}

TriMesh marching_cubes(const LabelMap& labels, std::uint8_t cls, const MarchingOptions& opts) {
  Volume mask(labels.geometry(), 0.0f);
  const auto& src = labels.data();
  auto& dst = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == cls ? 1.0f : 0.0f;
  return marching_cubes(mask, opts);
}

}  // namespace ghc
