#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace ghc::nn {

/// (N, C, D, H, W); dense activations use (N, F, 1, 1, 1). W varies fastest.
struct Dims {
  std::array<int, 5> d{1, 1, 1, 1, 1};

  int n() const noexcept { return d[0]; }
  int c() const noexcept { return d[1]; }
  int depth() const noexcept { return d[2]; }
  int height() const noexcept { return d[3]; }
  int width() const noexcept { return d[4]; }
  std::size_t spatial() const noexcept {
    return static_cast<std::size_t>(d[2]) * static_cast<std::size_t>(d[3]) * static_cast<std::size_t>(d[4]);
  }
  std::size_t per_sample() const noexcept { return spatial() * static_cast<std::size_t>(d[1]); }
  std::size_t count() const noexcept { return per_sample() * static_cast<std::size_t>(d[0]); }
  bool same_spatial(const Dims& o) const noexcept { return d[2] == o.d[2] && d[3] == o.d[3] && d[4] == o.d[4]; }
  bool operator==(const Dims&) const = default;
  std::string str() const;
};

inline Dims make_dims(int n, int c, int d, int h, int w) { return Dims{{n, c, d, h, w}}; }

template <typename T>
struct Tensor {
  Dims dims;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(const Dims& shape, T fill = T(0)) : dims(shape), data(shape.count(), fill) {}

  void resize(const Dims& shape) {
    dims = shape;
    data.assign(shape.count(), T(0));
  }
  void release() {
    data.clear();
    data.shrink_to_fit();
  }
  bool empty() const noexcept { return data.empty(); }
  std::size_t size() const noexcept { return data.size(); }
  T* sample(int n) noexcept { return data.data() + static_cast<std::size_t>(n) * dims.per_sample(); }
  const T* sample(int n) const noexcept { return data.data() + static_cast<std::size_t>(n) * dims.per_sample(); }
  T* channel(int n, int c) noexcept { return sample(n) + static_cast<std::size_t>(c) * dims.spatial(); }
  const T* channel(int n, int c) const noexcept { return sample(n) + static_cast<std::size_t>(c) * dims.spatial(); }
};

inline std::string Dims::str() const {
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + "," +
         std::to_string(d[3]) + "," + std::to_string(d[4]) + ")";
}

}  // namespace ghc::nn
