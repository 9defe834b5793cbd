#include "recon/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ghc {

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = va + vb + vc;
  if (!(std::abs(denom) > 0)) {
    // degenerate triangle: fall back to the nearest of its edges
    auto seg = [&](const Eigen::Vector3d& s, const Eigen::Vector3d& e) {
      const Eigen::Vector3d d = e - s;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0 ? std::clamp((p - s).dot(d) / len2, 0.0, 1.0) : 0.0;
      return Eigen::Vector3d(s + t * d);
    };
    Eigen::Vector3d best = seg(a, b);
    for (const Eigen::Vector3d& q : {seg(b, c), seg(c, a)}) {
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
    }
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + v * ab + w * ac;
}

namespace {
constexpr int kLeafSize = 4;
}

SurfaceIndex::SurfaceIndex(const TriMesh& mesh) : mesh_(mesh) {
  if (mesh.empty()) fail(ErrorCode::empty_mesh, "cannot index an empty mesh");
  mesh.validate();
  const int n = static_cast<int>(mesh.triangles.size());
  order_.resize(n);
  std::vector<Eigen::Vector3d> centroids(n);
  for (int t = 0; t < n; ++t) {
    order_[t] = t;
    const auto& tri = mesh.triangles[t];
    centroids[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 1);
  build(0, n, centroids);
}

int SurfaceIndex::build(int first, int count, std::vector<Eigen::Vector3d>& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (int i = first; i < first + count; ++i) {
    const auto& tri = mesh_.triangles[order_[i]];
    for (int v : tri) box.extend(mesh_.vertices[v]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[id].box = box;
  if (count <= kLeafSize) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis;
  cbox.sizes().maxCoeff(&axis);
  const int half = count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + first + half, order_.begin() + first + count,
                   [&](int a, int b) { return centroids[a][axis] < centroids[b][axis]; });
  const int left = build(first, half, centroids);
  const int right = build(first + half, count - half, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void SurfaceIndex::test_triangle(int t, const Eigen::Vector3d& p, Hit& best, double& best2) const {
  const auto& tri = mesh_.triangles[t];
  const Eigen::Vector3d q =
      closest_point_on_triangle(p, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
  const double d2 = (q - p).squaredNorm();
  if (d2 < best2 || (d2 == best2 && t < best.triangle)) {
    best2 = d2;
    best.point = q;
    best.triangle = t;
  }
}

SurfaceIndex::Hit SurfaceIndex::closest(const Eigen::Vector3d& p) const {
  Hit best;
  double best2 = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squaredExteriorDistance(p) > best2) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) test_triangle(order_[i], p, best, best2);
      continue;
    }
    const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
    const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
    // push the farther child first so the nearer one is searched first
    if (dl < dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

SurfaceIndex::Hit SurfaceIndex::closest_brute_force(const Eigen::Vector3d& p) const {
  Hit best;
  double best2 = std::numeric_limits<double>::infinity();
  for (int t = 0; t < static_cast<int>(mesh_.triangles.size()); ++t) test_triangle(t, p, best, best2);
  best.distance = std::sqrt(best2);
  return best;
}

namespace {

std::vector<Eigen::Vector3d> samples(const TriMesh& m, const DistanceOptions& opts) {
  std::vector<Eigen::Vector3d> pts = m.vertices;
  if (opts.densify) {
    for (const auto& tri : m.triangles) {
      pts.push_back((m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0);
    }
  }
  return pts;
}

void require_nonempty(const TriMesh& a, const TriMesh& b) {
  if (a.empty() || b.empty()) fail(ErrorCode::empty_mesh, "surface distance needs two non-empty meshes");
}

}  // namespace

std::vector<double> directed_distances(const TriMesh& from, const TriMesh& to, const DistanceOptions& opts) {
  require_nonempty(from, to);
  const SurfaceIndex index(to);
  const auto pts = samples(from, opts);
  std::vector<double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d[i] = index.closest(pts[i]).distance;
  return d;
}

double surface_rmse(const TriMesh& a, const TriMesh& b, const DistanceOptions& opts) {
  require_nonempty(a, b);
  const auto ab = directed_distances(a, b, opts);
  const auto ba = directed_distances(b, a, opts);
  double sum = 0;
  for (double d : ab) sum += d * d;
  for (double d : ba) sum += d * d;
  return std::sqrt(sum / static_cast<double>(ab.size() + ba.size()));
}

double hausdorff(const TriMesh& a, const TriMesh& b, const DistanceOptions& opts) {
  require_nonempty(a, b);
  const auto ab = directed_distances(a, b, opts);
  const auto ba = directed_distances(b, a, opts);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

double max_surface_distance(const TriMesh& morph, const TriMesh& cleared, const DistanceOptions& opts) {
  const auto d = directed_distances(morph, cleared, opts);
  return *std::max_element(d.begin(), d.end());
}

int stage_os(double d) {
  if (!(d >= 0) || !std::isfinite(d)) fail(ErrorCode::invalid_distance, "osteophyte distance must be finite and >= 0");
  if (d < 3.0) return 0;
  if (d <= 7.0) return 1;
  return 2;
}

}  // namespace ghc
