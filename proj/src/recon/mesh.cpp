#include "recon/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>

#include <Eigen/Geometry>

#include "core/fsutil.hpp"

namespace ghc {

Eigen::Vector3d TriMesh::normal(std::size_t t) const {
  const auto& tri = triangles[t];
  Eigen::Vector3d n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  const double len = n.norm();
  return len > 0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
}

double TriMesh::area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

double TriMesh::surface_area() const {
  double total = 0;
  for (std::size_t t = 0; t < triangles.size(); ++t) total += area(t);
  return total;
}

double TriMesh::signed_volume() const {
  double total = 0;
  for (const auto& tri : triangles) {
    total += vertices[tri[0]].dot(vertices[tri[1]].cross(vertices[tri[2]]));
  }
  return total / 6.0;
}

bool TriMesh::watertight() const {
  if (triangles.empty()) return false;
  // directed edge counts; a closed, consistently wound surface has each
  // directed edge once and its reverse once
  std::map<std::pair<int, int>, int> directed;
  for (const auto& tri : triangles) {
    for (int e = 0; e < 3; ++e) {
      if (++directed[{tri[e], tri[(e + 1) % 3]}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.count({edge.second, edge.first})) return false;
  }
  return true;
}

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& tri : triangles) {
    for (int v : tri) {
      if (v < 0 || v >= n) fail(ErrorCode::format_error, "triangle index out of range");
    }
  }
}

void TriMesh::cleanup(double min_area) {
  std::vector<std::array<int, 3>> kept;
  kept.reserve(triangles.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
    if (area(t) <= min_area) continue;
    kept.push_back(tri);
  }
  std::vector<int> remap(vertices.size(), -1);
  std::vector<Eigen::Vector3d> verts;
  for (auto& tri : kept) {
    for (int& v : tri) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(verts.size());
        verts.push_back(vertices[v]);
      }
      v = remap[v];
    }
  }
  vertices = std::move(verts);
  triangles = std::move(kept);
}

void TriMesh::translate(const Eigen::Vector3d& offset) {
  for (auto& v : vertices) v += offset;
}

TriMesh weld(const std::vector<std::array<Eigen::Vector3d, 3>>& soup) {
  TriMesh mesh;
  std::map<std::array<double, 3>, int> index;
  mesh.triangles.reserve(soup.size());
  for (const auto& tri : soup) {
    std::array<int, 3> ids{};
    for (int c = 0; c < 3; ++c) {
      const std::array<double, 3> key{tri[c].x(), tri[c].y(), tri[c].z()};
      auto [it, inserted] = index.emplace(key, static_cast<int>(mesh.vertices.size()));
      if (inserted) mesh.vertices.push_back(tri[c]);
      ids[c] = it->second;
    }
    mesh.triangles.push_back(ids);
  }
  return mesh;
}

namespace {

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  char b[4];
  std::memcpy(b, &f, 4);
  out.append(b, 4);
}

float get_f32(const char* p) {
  float f;
  std::memcpy(&f, p, 4);
  return f;
}

}  // namespace

// Binary STL: 80-byte header, u32 count, 50 bytes per triangle. Assumes a
// little-endian host, which is all we build for.
void write_stl(const TriMesh& mesh, const std::string& path) {
  mesh.validate();
  std::string out(80, '\0');
  const char tag[] = "ghcascade binary stl";
  std::memcpy(out.data(), tag, sizeof(tag) - 1);
  const std::uint32_t n = static_cast<std::uint32_t>(mesh.triangles.size());
  out.append(reinterpret_cast<const char*>(&n), 4);
  out.reserve(84 + 50 * static_cast<std::size_t>(n));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Eigen::Vector3d nrm = mesh.normal(t);
    for (int a = 0; a < 3; ++a) put_f32(out, nrm[a]);
    for (int v : mesh.triangles[t]) {
      for (int a = 0; a < 3; ++a) put_f32(out, mesh.vertices[v][a]);
    }
    out.append(2, '\0');
  }
  atomic_write(path, out);
}

TriMesh read_stl(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 84) fail(ErrorCode::format_error, path + ": STL shorter than its header");
  std::uint32_t n;
  std::memcpy(&n, bytes.data() + 80, 4);
  const std::size_t want = 84 + 50 * static_cast<std::size_t>(n);
  if (bytes.size() != want) {
    fail(ErrorCode::format_error, path + ": STL declares " + std::to_string(n) + " triangles but holds " +
                                      std::to_string(bytes.size()) + " bytes");
  }
  std::vector<std::array<Eigen::Vector3d, 3>> soup(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    const char* rec = bytes.data() + 84 + 50 * static_cast<std::size_t>(t) + 12;
    for (int c = 0; c < 3; ++c) {
      for (int a = 0; a < 3; ++a) {
        const float f = get_f32(rec + 12 * c + 4 * a);
        if (!std::isfinite(f)) fail(ErrorCode::format_error, path + ": non-finite STL vertex");
        soup[t][c][a] = f;
      }
    }
  }
  return weld(soup);
}

TriMesh icosphere(const Eigen::Vector3d& center, double radius, int subdivisions) {
  if (!(radius > 0) || subdivisions < 0) fail(ErrorCode::invalid_argument, "icosphere needs radius > 0");
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v{{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                                 {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto& x : v) x.normalize();
  std::vector<std::array<int, 3>> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                    {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                    {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                    {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh m;
  m.vertices.reserve(v.size());
  for (const auto& x : v) m.vertices.push_back(center + radius * x);
  m.triangles = std::move(f);
  return m;
}

}  // namespace ghc
