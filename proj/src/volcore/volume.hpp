#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "core/error.hpp"

namespace ghc {

enum class Laterality : std::uint8_t { left, right, unknown };

Laterality opposite(Laterality side) noexcept;
const char* to_string(Laterality side) noexcept;
Laterality laterality_from_string(const std::string& text);

/// Voxel counts along (x, y, z). Axis 0 (x) varies fastest in memory.
struct Shape3 {
  int nx = 1, ny = 1, nz = 1;

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const noexcept { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  int& operator[](int axis) noexcept { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  bool operator==(const Shape3&) const = default;
};

using Index3 = std::array<int, 3>;

/// Geometry shared by an intensity volume and its label map.
struct GridGeometry {
  Shape3 shape;
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};  // mm per voxel
  Eigen::Vector3d origin{0.0, 0.0, 0.0};   // world position (mm) of voxel (0,0,0)
  Laterality laterality = Laterality::unknown;
  // Array axis running left-right; empty when the container carried no orientation.
  std::optional<int> sagittal_axis = 0;

  Eigen::Vector3d world(double i, double j, double k) const {
    return origin + Eigen::Vector3d(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  bool same_grid(const GridGeometry& other) const;
  void validate() const;
};

/// Dense 3D grid with physical geometry. Immutable by convention once built;
/// all processing functions return new grids.
template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(const GridGeometry& geometry, T fill = T{})
      : geom_(geometry), data_(geometry.shape.voxels(), fill) {
    geom_.validate();
  }
  Grid3(const GridGeometry& geometry, std::vector<T> data) : geom_(geometry), data_(std::move(data)) {
    geom_.validate();
    if (data_.size() != geom_.shape.voxels()) fail(ErrorCode::shape_error, "grid payload size does not match shape");
  }

  const GridGeometry& geometry() const noexcept { return geom_; }
  GridGeometry& geometry() noexcept { return geom_; }
  const Shape3& shape() const noexcept { return geom_.shape; }
  int nx() const noexcept { return geom_.shape.nx; }
  int ny() const noexcept { return geom_.shape.ny; }
  int nz() const noexcept { return geom_.shape.nz; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t offset(int i, int j, int k) const noexcept {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(geom_.shape.nx) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(geom_.shape.ny) * static_cast<std::size_t>(k));
  }
  T& operator()(int i, int j, int k) noexcept { return data_[offset(i, j, k)]; }
  const T& operator()(int i, int j, int k) const noexcept { return data_[offset(i, j, k)]; }
  bool contains(int i, int j, int k) const noexcept {
    return i >= 0 && j >= 0 && k >= 0 && i < geom_.shape.nx && j < geom_.shape.ny && k < geom_.shape.nz;
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

 private:
  GridGeometry geom_;
  std::vector<T> data_;
};

using Volume = Grid3<float>;
using LabelMap = Grid3<std::uint8_t>;

namespace label {
inline constexpr std::uint8_t background = 0;
inline constexpr std::uint8_t humerus = 1;
inline constexpr std::uint8_t scapula = 2;
inline constexpr int count = 3;
}  // namespace label

/// Per-task staging indices (OS and JS have three grades, HSA two).
struct StagingLabels {
  int os = 0;
  int js = 0;
  int hsa = 0;

  void validate() const;
  bool operator==(const StagingLabels&) const = default;
};

inline constexpr std::array<int, 3> kTaskClasses{3, 3, 2};

/// Throws LabelError when a label map holds ids outside {0,1,2}.
void validate_labels(const LabelMap& labels);

}  // namespace ghc
