#include "nets/conv_kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <type_traits>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define GHC_HAVE_AVX2 1
#endif

namespace ghc::nn::kernels {

namespace {

inline int lo_bound(int d) { return std::max(0, 1 - d); }
inline int hi_bound(int n, int d) { return std::min(n, n + 1 - d); }

template <typename T>
void generic_forward(const T* in, int cin, int depth, int height, int width, const T* weight, const T* bias, int cout,
                     T* out) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t vol = plane * depth;
  for (int co = 0; co < cout; ++co) {
    T* o = out + co * vol;
    std::fill(o, o + vol, bias ? bias[co] : T(0));
    for (int ci = 0; ci < cin; ++ci) {
      const T* x = in + ci * vol;
      const T* w = weight + (static_cast<std::size_t>(co) * cin + ci) * 27;
      for (int dz = 0; dz < 3; ++dz) {
        for (int dy = 0; dy < 3; ++dy) {
          for (int dx = 0; dx < 3; ++dx) {
            const T wt = w[dz * 9 + dy * 3 + dx];
            const int x0 = lo_bound(dx), x1 = hi_bound(width, dx);
            for (int z = lo_bound(dz); z < hi_bound(depth, dz); ++z) {
              for (int y = lo_bound(dy); y < hi_bound(height, dy); ++y) {
                const T* xr = x + (z + dz - 1) * plane + static_cast<std::size_t>(y + dy - 1) * width + (dx - 1);
                T* orow = o + z * plane + static_cast<std::size_t>(y) * width;
                for (int xx = x0; xx < x1; ++xx) orow[xx] += wt * xr[xx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void generic_backward_data(const T* gout, int cout, int depth, int height, int width, const T* weight, int cin,
                           T* gin) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t vol = plane * depth;
  for (int co = 0; co < cout; ++co) {
    const T* g = gout + co * vol;
    for (int ci = 0; ci < cin; ++ci) {
      T* gi = gin + ci * vol;
      const T* w = weight + (static_cast<std::size_t>(co) * cin + ci) * 27;
      for (int dz = 0; dz < 3; ++dz) {
        for (int dy = 0; dy < 3; ++dy) {
          for (int dx = 0; dx < 3; ++dx) {
            const T wt = w[dz * 9 + dy * 3 + dx];
            const int x0 = lo_bound(dx), x1 = hi_bound(width, dx);
            for (int z = lo_bound(dz); z < hi_bound(depth, dz); ++z) {
              for (int y = lo_bound(dy); y < hi_bound(height, dy); ++y) {
                T* xr = gi + (z + dz - 1) * plane + static_cast<std::size_t>(y + dy - 1) * width + (dx - 1);
                const T* grow = g + z * plane + static_cast<std::size_t>(y) * width;
                for (int xx = x0; xx < x1; ++xx) xr[xx] += wt * grow[xx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void generic_backward_weights(const T* in, int cin, const T* gout, int cout, int depth, int height, int width,
                              double* gw, double* gb) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t vol = plane * depth;
  for (int co = 0; co < cout; ++co) {
    const T* g = gout + co * vol;
    if (gb) {
      double s = 0.0;
      for (std::size_t v = 0; v < vol; ++v) s += g[v];
      gb[co] += s;
    }
    for (int ci = 0; ci < cin; ++ci) {
      const T* x = in + ci * vol;
      double* w = gw + (static_cast<std::size_t>(co) * cin + ci) * 27;
      for (int dz = 0; dz < 3; ++dz) {
        for (int dy = 0; dy < 3; ++dy) {
          for (int dx = 0; dx < 3; ++dx) {
            double acc = 0.0;
            const int x0 = lo_bound(dx), x1 = hi_bound(width, dx);
            for (int z = lo_bound(dz); z < hi_bound(depth, dz); ++z) {
              for (int y = lo_bound(dy); y < hi_bound(height, dy); ++y) {
                const T* xr = x + (z + dz - 1) * plane + static_cast<std::size_t>(y + dy - 1) * width + (dx - 1);
                const T* grow = g + z * plane + static_cast<std::size_t>(y) * width;
                T row = T(0);
                for (int xx = x0; xx < x1; ++xx) row += grow[xx] * xr[xx];
                acc += row;
              }
            }
            w[dz * 9 + dy * 3 + dx] += acc;
          }
        }
      }
    }
  }
}

#ifdef GHC_HAVE_AVX2

// Zero-padded copy: [c][depth + 2][height + 2][row], row = ceil8(width) + 8.
struct Padded {
  int depth, height, width, row;
  std::size_t chan;
  std::vector<float> data;

  Padded(const float* src, int channels, int d, int h, int w)
      : depth(d), height(h), width(w), row((w + 7) / 8 * 8 + 8) {
    chan = static_cast<std::size_t>(d + 2) * (h + 2) * row;
    data.assign(chan * channels, 0.0f);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
      for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
          std::memcpy(&data[c * chan + (static_cast<std::size_t>(z + 1) * (h + 2) + (y + 1)) * row + 1],
                      src + c * plane * d + z * plane + static_cast<std::size_t>(y) * w, sizeof(float) * w);
        }
      }
    }
  }
  const float* at(int c, int z, int y) const {
    return data.data() + c * chan + (static_cast<std::size_t>(z) * (height + 2) + y) * row;
  }
};

inline void store_lanes(float* dst, __m256 v, int lanes, bool accumulate) {
  if (lanes == 8) {
    if (accumulate) v = _mm256_add_ps(v, _mm256_loadu_ps(dst));
    _mm256_storeu_ps(dst, v);
    return;
  }
  alignas(32) float tmp[8];
  _mm256_store_ps(tmp, v);
  for (int i = 0; i < lanes; ++i) dst[i] = accumulate ? dst[i] + tmp[i] : tmp[i];
}

// Output-channel blocks of 4; accumulators cover 2 x 8 lanes (or 1 x 8 at row tails).
void avx_forward(const float* in, int cin, int depth, int height, int width, const float* weight, const float* bias,
                 int cout, float* out, bool accumulate) {
  const Padded pad(in, cin, depth, height, width);
  const int blocks = (cout + 3) / 4;
  std::vector<float> packed(static_cast<std::size_t>(blocks) * cin * 27 * 4, 0.0f);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int t = 0; t < 27; ++t) {
        packed[((static_cast<std::size_t>(co / 4) * cin + ci) * 27 + t) * 4 + (co % 4)] =
            weight[(static_cast<std::size_t>(co) * cin + ci) * 27 + t];
      }
    }
  }
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t vol = plane * depth;

  for (int cb = 0; cb < blocks; ++cb) {
    const int active = std::min(4, cout - cb * 4);
    float bias_v[4] = {0, 0, 0, 0};
    for (int a = 0; a < active; ++a) bias_v[a] = bias ? bias[cb * 4 + a] : 0.0f;
    for (int z = 0; z < depth; ++z) {
      for (int y = 0; y < height; ++y) {
        int x = 0;
        while (x < width) {
          const bool wide = width - x >= 16;
          __m256 acc[4][2];
          for (int a = 0; a < 4; ++a) {
            acc[a][0] = _mm256_set1_ps(bias_v[a]);
            acc[a][1] = _mm256_set1_ps(bias_v[a]);
          }
          for (int ci = 0; ci < cin; ++ci) {
            const float* wb = &packed[((static_cast<std::size_t>(cb) * cin + ci) * 27) * 4];
            for (int dz = 0; dz < 3; ++dz) {
              for (int dy = 0; dy < 3; ++dy) {
                const float* row = pad.at(ci, z + dz, y + dy) + x;
                const float* wt = wb + (dz * 9 + dy * 3) * 4;
                if (wide) {
                  for (int dx = 0; dx < 3; ++dx) {
                    const __m256 v0 = _mm256_loadu_ps(row + dx);
                    const __m256 v1 = _mm256_loadu_ps(row + dx + 8);
                    for (int a = 0; a < 4; ++a) {
                      const __m256 w = _mm256_broadcast_ss(wt + dx * 4 + a);
                      acc[a][0] = _mm256_fmadd_ps(w, v0, acc[a][0]);
                      acc[a][1] = _mm256_fmadd_ps(w, v1, acc[a][1]);
                    }
                  }
                } else {
                  for (int dx = 0; dx < 3; ++dx) {
                    const __m256 v0 = _mm256_loadu_ps(row + dx);
                    for (int a = 0; a < 4; ++a) {
                      acc[a][0] = _mm256_fmadd_ps(_mm256_broadcast_ss(wt + dx * 4 + a), v0, acc[a][0]);
                    }
                  }
                }
              }
            }
          }
          for (int a = 0; a < active; ++a) {
            float* dst = out + (cb * 4 + a) * vol + z * plane + static_cast<std::size_t>(y) * width + x;
            if (wide) {
              store_lanes(dst, acc[a][0], 8, accumulate);
              store_lanes(dst + 8, acc[a][1], 8, accumulate);
            } else {
              store_lanes(dst, acc[a][0], std::min(8, width - x), accumulate);
            }
          }
          x += wide ? 16 : 8;
        }
      }
    }
  }
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  __m128 s = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, s);
  s = _mm_add_ss(s, sh);
  return _mm_cvtss_f32(s);
}

void avx_backward_weights(const float* in, int cin, const float* gout, int cout, int depth, int height, int width,
                          double* gw, double* gb) {
  const Padded pad(in, cin, depth, height, width);
  const int wv = (width + 7) / 8 * 8;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t vol = plane * depth;
  const int blocks = (cout + 3) / 4;
  // gout rows padded to wv with zeros so tail lanes contribute nothing; extra
  // channels up to a multiple of 4 stay zero.
  const std::size_t gplane = static_cast<std::size_t>(height) * wv;
  std::vector<float> g(static_cast<std::size_t>(blocks) * 4 * depth * gplane, 0.0f);
  for (int co = 0; co < cout; ++co) {
    for (int z = 0; z < depth; ++z) {
      for (int y = 0; y < height; ++y) {
        std::memcpy(&g[(static_cast<std::size_t>(co) * depth + z) * gplane + static_cast<std::size_t>(y) * wv],
                    gout + co * vol + z * plane + static_cast<std::size_t>(y) * width, sizeof(float) * width);
      }
    }
    if (gb) {
      double s = 0.0;
      for (std::size_t v = 0; v < vol; ++v) s += gout[co * vol + v];
      gb[co] += s;
    }
  }

  for (int z = 0; z < depth; ++z) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int dz = 0; dz < 3; ++dz) {
        for (int dy = 0; dy < 3; ++dy) {
          for (int cb = 0; cb < blocks; ++cb) {
            __m256 acc[4][3];
            for (int a = 0; a < 4; ++a) {
              for (int dx = 0; dx < 3; ++dx) acc[a][dx] = _mm256_setzero_ps();
            }
            const float* gbase = &g[(static_cast<std::size_t>(cb) * 4 * depth + z) * gplane];
            const std::size_t gstride = static_cast<std::size_t>(depth) * gplane;
            for (int y = 0; y < height; ++y) {
              const float* xr = pad.at(ci, z + dz, y + dy);
              const float* g0 = gbase + static_cast<std::size_t>(y) * wv;
              for (int x = 0; x < wv; x += 8) {
                const __m256 x0 = _mm256_loadu_ps(xr + x);
                const __m256 x1 = _mm256_loadu_ps(xr + x + 1);
                const __m256 x2 = _mm256_loadu_ps(xr + x + 2);
                for (int a = 0; a < 4; ++a) {
                  const __m256 gv = _mm256_loadu_ps(g0 + a * gstride + x);
                  acc[a][0] = _mm256_fmadd_ps(gv, x0, acc[a][0]);
                  acc[a][1] = _mm256_fmadd_ps(gv, x1, acc[a][1]);
                  acc[a][2] = _mm256_fmadd_ps(gv, x2, acc[a][2]);
                }
              }
            }
            const int active = std::min(4, cout - cb * 4);
            for (int a = 0; a < active; ++a) {
              double* w = gw + (static_cast<std::size_t>(cb * 4 + a) * cin + ci) * 27 + dz * 9 + dy * 3;
              for (int dx = 0; dx < 3; ++dx) w[dx] += hsum(acc[a][dx]);
            }
          }
        }
      }
    }
  }
}

#endif  // GHC_HAVE_AVX2

}  // namespace

bool simd_enabled() noexcept {
#ifdef GHC_HAVE_AVX2
  return true;
#else
  return false;
#endif
}

template <typename T>
void conv3_forward(const T* in, int cin, int depth, int height, int width, const T* weight, const T* bias, int cout,
                   T* out) {
#ifdef GHC_HAVE_AVX2
  if constexpr (std::is_same_v<T, float>) {
    avx_forward(in, cin, depth, height, width, weight, bias, cout, out, false);
    return;
  }
#endif
  generic_forward(in, cin, depth, height, width, weight, bias, cout, out);
}

template <typename T>
void conv3_backward_data(const T* gout, int cout, int depth, int height, int width, const T* weight, int cin, T* gin) {
#ifdef GHC_HAVE_AVX2
  if constexpr (std::is_same_v<T, float>) {
    // Transposed conv = forward conv of gout with the spatially flipped,
    // channel-transposed kernel.
    std::vector<float> flipped(static_cast<std::size_t>(cin) * cout * 27);
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < cin; ++ci) {
        for (int t = 0; t < 27; ++t) {
          flipped[(static_cast<std::size_t>(ci) * cout + co) * 27 + t] =
              weight[(static_cast<std::size_t>(co) * cin + ci) * 27 + (26 - t)];
        }
      }
    }
    avx_forward(gout, cout, depth, height, width, flipped.data(), nullptr, cin, gin, true);
    return;
  }
#endif
  generic_backward_data(gout, cout, depth, height, width, weight, cin, gin);
}

template <typename T>
void conv3_backward_weights(const T* in, int cin, const T* gout, int cout, int depth, int height, int width,
                            double* gw, double* gb) {
#ifdef GHC_HAVE_AVX2
  if constexpr (std::is_same_v<T, float>) {
    avx_backward_weights(in, cin, gout, cout, depth, height, width, gw, gb);
    return;
  }
#endif
  generic_backward_weights(in, cin, gout, cout, depth, height, width, gw, gb);
}

template void conv3_forward<float>(const float*, int, int, int, int, const float*, const float*, int, float*);
template void conv3_forward<double>(const double*, int, int, int, int, const double*, const double*, int, double*);
template void conv3_backward_data<float>(const float*, int, int, int, int, const float*, int, float*);
template void conv3_backward_data<double>(const double*, int, int, int, int, const double*, int, double*);
template void conv3_backward_weights<float>(const float*, int, const float*, int, int, int, int, double*, double*);
template void conv3_backward_weights<double>(const double*, int, const double*, int, int, int, int, double*, double*);

}  // namespace ghc::nn::kernels
