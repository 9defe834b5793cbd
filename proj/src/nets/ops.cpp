#include "nets/ops.hpp"

#include <algorithm>
#include <cmath>

#include "nets/conv_kernels.hpp"

namespace ghc::nn {

namespace {

template <typename T>
void require_inputs(std::span<const Dims> in, std::size_t n, const char* what) {
  if (in.size() != n) fail(ErrorCode::shape_error, std::string(what) + ": wrong number of inputs");
}

template <typename T>
Param<T> make_param(const std::string& name, const Dims& dims, bool trainable = true) {
  Param<T> p;
  p.name = name;
  p.value = Tensor<T>(dims);
  p.grad = Tensor<T>(dims);
  p.trainable = trainable;
  return p;
}

template <typename T>
void he_normal(Tensor<T>& t, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------- Conv3d

template <typename T>
Conv3d<T>::Conv3d(int cin, int cout, int kernel, std::mt19937_64& rng) : cin_(cin), cout_(cout), k_(kernel) {
  if (kernel != 1 && kernel != 3) fail(ErrorCode::invalid_argument, "conv kernel must be 1 or 3");
  if (cin < 1 || cout < 1) fail(ErrorCode::invalid_argument, "conv channels must be >= 1");
  const int taps = kernel * kernel * kernel;
  weight_ = make_param<T>("weight", make_dims(cout, cin, 1, 1, taps));
  bias_ = make_param<T>("bias", make_dims(1, cout, 1, 1, 1));
  he_normal(weight_.value, cin * taps, rng);
}

template <typename T>
Dims Conv3d<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "conv3d");
  if (in[0].c() != cin_) {
    fail(ErrorCode::shape_error, "conv3d expects " + std::to_string(cin_) + " channels, got " + in[0].str());
  }
  Dims d = in[0];
  d.d[1] = cout_;
  return d;
}

template <typename T>
void Conv3d<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(infer_dims(std::span<const Dims>(&x.dims, 1)));
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const std::size_t S = x.dims.spatial();
  for (int n = 0; n < x.dims.n(); ++n) {
    if (k_ == 3) {
      kernels::conv3_forward(x.sample(n), cin_, D, H, W, weight_.value.data.data(), bias_.value.data.data(), cout_,
                             out.sample(n));
      continue;
    }
    for (int co = 0; co < cout_; ++co) {
      T* o = out.channel(n, co);
      std::fill(o, o + S, bias_.value.data[co]);
      for (int ci = 0; ci < cin_; ++ci) {
        const T w = weight_.value.data[static_cast<std::size_t>(co) * cin_ + ci];
        const T* xi = x.channel(n, ci);
        for (std::size_t v = 0; v < S; ++v) o[v] += w * xi[v];
      }
    }
  }
}

template <typename T>
void Conv3d<T>::backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  const Tensor<T>& x = *in[0];
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const std::size_t S = x.dims.spatial();
  gw_.assign(weight_.value.size(), 0.0);
  gb_.assign(static_cast<std::size_t>(cout_), 0.0);
  for (int n = 0; n < x.dims.n(); ++n) {
    if (k_ == 3) {
      kernels::conv3_backward_weights(x.sample(n), cin_, gout.sample(n), cout_, D, H, W, gw_.data(), gb_.data());
      if (gin[0]) kernels::conv3_backward_data(gout.sample(n), cout_, D, H, W, weight_.value.data.data(), cin_,
                                               gin[0]->sample(n));
      continue;
    }
    for (int co = 0; co < cout_; ++co) {
      const T* g = gout.channel(n, co);
      double sb = 0.0;
      for (std::size_t v = 0; v < S; ++v) sb += g[v];
      gb_[co] += sb;
      for (int ci = 0; ci < cin_; ++ci) {
        const T* xi = x.channel(n, ci);
        double s = 0.0;
        for (std::size_t v = 0; v < S; ++v) s += static_cast<double>(g[v]) * xi[v];
        gw_[static_cast<std::size_t>(co) * cin_ + ci] += s;
        if (gin[0]) {
          const T w = weight_.value.data[static_cast<std::size_t>(co) * cin_ + ci];
          T* gi = gin[0]->channel(n, ci);
          for (std::size_t v = 0; v < S; ++v) gi[v] += w * g[v];
        }
      }
    }
  }
  for (std::size_t i = 0; i < gw_.size(); ++i) weight_.grad.data[i] += static_cast<T>(gw_[i]);
  for (int c = 0; c < cout_; ++c) bias_.grad.data[c] += static_cast<T>(gb_[c]);
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(int channels, double momentum, double eps) : c_(channels), momentum_(momentum), eps_(eps) {
  const Dims d = make_dims(1, channels, 1, 1, 1);
  gamma_ = make_param<T>("gamma", d);
  beta_ = make_param<T>("beta", d);
  running_mean_ = make_param<T>("running_mean", d, false);
  running_var_ = make_param<T>("running_var", d, false);
  std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), T(1));
  std::fill(running_var_.value.data.begin(), running_var_.value.data.end(), T(1));
}

template <typename T>
Dims BatchNorm<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "batchnorm");
  if (in[0].c() != c_) fail(ErrorCode::shape_error, "batchnorm channel mismatch");
  return in[0];
}

template <typename T>
void BatchNorm<T>::forward(Inputs<T> in, Tensor<T>& out, Mode mode) {
  const Tensor<T>& x = *in[0];
  out.resize(x.dims);
  const std::size_t S = x.dims.spatial();
  const double count = static_cast<double>(S) * x.dims.n();
  mean_.assign(c_, 0.0);
  invstd_.assign(c_, 0.0);
  for (int c = 0; c < c_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (int n = 0; n < x.dims.n(); ++n) {
        const T* xi = x.channel(n, c);
        for (std::size_t v = 0; v < S; ++v) s += xi[v];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.dims.n(); ++n) {
        const T* xi = x.channel(n, c);
        for (std::size_t v = 0; v < S; ++v) {
          const double d = xi[v] - mean;
          ss += d * d;
        }
      }
      var = ss / count;
      running_mean_.value.data[c] =
          static_cast<T>(momentum_ * running_mean_.value.data[c] + (1.0 - momentum_) * mean);
      running_var_.value.data[c] = static_cast<T>(momentum_ * running_var_.value.data[c] + (1.0 - momentum_) * var);
    } else {
      mean = running_mean_.value.data[c];
      var = running_var_.value.data[c];
    }
    mean_[c] = mean;
    invstd_[c] = 1.0 / std::sqrt(var + eps_);
    const T scale = static_cast<T>(gamma_.value.data[c] * invstd_[c]);
    const T shift = static_cast<T>(beta_.value.data[c] - gamma_.value.data[c] * invstd_[c] * mean);
    for (int n = 0; n < x.dims.n(); ++n) {
      const T* xi = x.channel(n, c);
      T* o = out.channel(n, c);
      for (std::size_t v = 0; v < S; ++v) o[v] = xi[v] * scale + shift;
    }
  }
  train_stats_ = mode == Mode::train;
}

template <typename T>
void BatchNorm<T>::backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  const Tensor<T>& x = *in[0];
  const std::size_t S = x.dims.spatial();
  const double count = static_cast<double>(S) * x.dims.n();
  for (int c = 0; c < c_; ++c) {
    const double mean = mean_[c], invstd = invstd_[c];
    double dgamma = 0.0, dbeta = 0.0;
    for (int n = 0; n < x.dims.n(); ++n) {
      const T* xi = x.channel(n, c);
      const T* g = gout.channel(n, c);
      for (std::size_t v = 0; v < S; ++v) {
        dbeta += g[v];
        dgamma += g[v] * (xi[v] - mean) * invstd;
      }
    }
    gamma_.grad.data[c] += static_cast<T>(dgamma);
    beta_.grad.data[c] += static_cast<T>(dbeta);
    if (!gin[0]) continue;
    const double gscale = gamma_.value.data[c] * invstd;
    for (int n = 0; n < x.dims.n(); ++n) {
      const T* xi = x.channel(n, c);
      const T* g = gout.channel(n, c);
      T* gi = gin[0]->channel(n, c);
      if (train_stats_) {
        const double a = gscale / count;
        for (std::size_t v = 0; v < S; ++v) {
          const double xhat = (xi[v] - mean) * invstd;
          gi[v] += static_cast<T>(a * (count * g[v] - dbeta - xhat * dgamma));
        }
      } else {
        for (std::size_t v = 0; v < S; ++v) gi[v] += static_cast<T>(gscale * g[v]);
      }
    }
  }
}

// ----------------------------------------------------------------- ReLU

template <typename T>
void Relu<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(x.dims);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
}

template <typename T>
void Relu<T>::backward(Inputs<T>, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.data[i] > T(0)) gin[0]->data[i] += gout.data[i];
  }
}

// -------------------------------------------------------------- MaxPool2

template <typename T>
Dims MaxPool2<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "maxpool");
  Dims d = in[0];
  for (int a = 2; a < 5; ++a) {
    if (d.d[a] < 1) fail(ErrorCode::shape_error, "maxpool on empty axis");
    d.d[a] = pooled(d.d[a]);
  }
  return d;
}

template <typename T>
void MaxPool2<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(infer_dims(std::span<const Dims>(&x.dims, 1)));
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const int OD = out.dims.depth(), OH = out.dims.height(), OW = out.dims.width();
  const int wz = D == 1 ? 1 : 2, wy = H == 1 ? 1 : 2, wx = W == 1 ? 1 : 2;
  argmax_.assign(out.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.dims.n(); ++n) {
    for (int c = 0; c < x.dims.c(); ++c) {
      const T* xi = x.channel(n, c);
      for (int z = 0; z < OD; ++z) {
        for (int y = 0; y < OH; ++y) {
          for (int xo = 0; xo < OW; ++xo, ++o) {
            std::size_t best = static_cast<std::size_t>(z * wz) * H * W + static_cast<std::size_t>(y * wy) * W + xo * wx;
            T bv = xi[best];
            for (int dz = 0; dz < wz; ++dz) {
              for (int dy = 0; dy < wy; ++dy) {
                for (int dx = 0; dx < wx; ++dx) {
                  const std::size_t idx = static_cast<std::size_t>(z * wz + dz) * H * W +
                                          static_cast<std::size_t>(y * wy + dy) * W + (xo * wx + dx);
                  if (xi[idx] > bv) {
                    bv = xi[idx];
                    best = idx;
                  }
                }
              }
            }
            out.data[o] = bv;
            argmax_[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
  }
}

template <typename T>
void MaxPool2<T>::backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  const std::size_t per_out = out.dims.spatial();
  const std::size_t per_in = in[0]->dims.spatial();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const std::size_t plane = o / per_out;
    gin[0]->data[plane * per_in + argmax_[o]] += gout.data[o];
  }
}

// ------------------------------------------------------- UpsampleNearest

template <typename T>
Dims UpsampleNearest<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "upsample");
  Dims d = in[0];
  for (int a = 0; a < 3; ++a) {
    const int src = d.d[a + 2];
    const int dst = target_[a];
    if (!(dst == src || dst == 2 * src || dst == 2 * src + 1)) {
      fail(ErrorCode::shape_error, "upsample target incompatible with input " + in[0].str());
    }
    d.d[a + 2] = dst;
  }
  return d;
}

template <typename T>
void UpsampleNearest<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(infer_dims(std::span<const Dims>(&x.dims, 1)));
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const int OD = out.dims.depth(), OH = out.dims.height(), OW = out.dims.width();
  auto src_of = [](int o, int in_n, int out_n) { return in_n == out_n ? o : std::min(o / 2, in_n - 1); };
  std::size_t o = 0;
  for (int n = 0; n < x.dims.n(); ++n) {
    for (int c = 0; c < x.dims.c(); ++c) {
      const T* xi = x.channel(n, c);
      for (int z = 0; z < OD; ++z) {
        const int sz = src_of(z, D, OD);
        for (int y = 0; y < OH; ++y) {
          const int sy = src_of(y, H, OH);
          const T* row = xi + (static_cast<std::size_t>(sz) * H + sy) * W;
          for (int xo = 0; xo < OW; ++xo, ++o) out.data[o] = row[src_of(xo, W, OW)];
        }
      }
    }
  }
}

template <typename T>
void UpsampleNearest<T>::backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  const Tensor<T>& x = *in[0];
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const int OD = out.dims.depth(), OH = out.dims.height(), OW = out.dims.width();
  auto src_of = [](int o, int in_n, int out_n) { return in_n == out_n ? o : std::min(o / 2, in_n - 1); };
  std::size_t o = 0;
  for (int n = 0; n < x.dims.n(); ++n) {
    for (int c = 0; c < x.dims.c(); ++c) {
      T* gi = gin[0]->channel(n, c);
      for (int z = 0; z < OD; ++z) {
        const int sz = src_of(z, D, OD);
        for (int y = 0; y < OH; ++y) {
          const int sy = src_of(y, H, OH);
          T* row = gi + (static_cast<std::size_t>(sz) * H + sy) * W;
          for (int xo = 0; xo < OW; ++xo, ++o) row[src_of(xo, W, OW)] += gout.data[o];
        }
      }
    }
  }
}

// ---------------------------------------------------------- AvgPoolSame

namespace {

// In-place clamped-window box sum along one axis of a [D][H][W] block.
template <typename T>
void box_sum_axis(T* data, int D, int H, int W, int axis, int r, std::vector<T>& line) {
  const int n = axis == 0 ? D : (axis == 1 ? H : W);
  const std::size_t stride = axis == 0 ? static_cast<std::size_t>(H) * W : (axis == 1 ? static_cast<std::size_t>(W) : 1);
  const int outer1 = axis == 0 ? H : D;
  const int outer2 = axis == 2 ? H : W;
  line.resize(n + 1);
  for (int a = 0; a < outer1; ++a) {
    for (int b = 0; b < outer2; ++b) {
      std::size_t base;
      if (axis == 0) base = static_cast<std::size_t>(a) * W + b;
      else if (axis == 1) base = static_cast<std::size_t>(a) * H * W + b;
      else base = static_cast<std::size_t>(a) * H * W + static_cast<std::size_t>(b) * W;
      line[0] = T(0);
      for (int i = 0; i < n; ++i) line[i + 1] = line[i] + data[base + i * stride];
      for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - r), hi = std::min(n - 1, i + r);
        data[base + i * stride] = line[hi + 1] - line[lo];
      }
    }
  }
}

inline int window_count(int i, int n, int r) { return std::min(n - 1, i + r) - std::max(0, i - r) + 1; }

}  // namespace

template <typename T>
Dims AvgPoolSame<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "avgpool");
  const Dims& d = in[0];
  if (d.depth() < size_ || d.height() < size_ || d.width() < size_) {
    fail(ErrorCode::shape_error, "avgpool window " + std::to_string(size_) + " exceeds spatial dims " + d.str());
  }
  return d;
}

template <typename T>
void AvgPoolSame<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  infer_dims(std::span<const Dims>(&x.dims, 1));
  out = x;
  const int D = x.dims.depth(), H = x.dims.height(), W = x.dims.width();
  const int r = size_ / 2;
  std::vector<T> line;
  for (int n = 0; n < x.dims.n(); ++n) {
    for (int c = 0; c < x.dims.c(); ++c) {
      T* o = out.channel(n, c);
      for (int axis = 0; axis < 3; ++axis) box_sum_axis(o, D, H, W, axis, r, line);
      std::size_t v = 0;
      for (int z = 0; z < D; ++z) {
        const int cz = window_count(z, D, r);
        for (int y = 0; y < H; ++y) {
          const int cy = window_count(y, H, r);
          for (int xx = 0; xx < W; ++xx, ++v) o[v] /= static_cast<T>(cz * cy * window_count(xx, W, r));
        }
      }
    }
  }
}

template <typename T>
void AvgPoolSame<T>::backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  const Dims& dims = in[0]->dims;
  const int D = dims.depth(), H = dims.height(), W = dims.width();
  const int r = size_ / 2;
  std::vector<T> buf(dims.spatial()), line;
  for (int n = 0; n < dims.n(); ++n) {
    for (int c = 0; c < dims.c(); ++c) {
      const T* g = gout.channel(n, c);
      std::size_t v = 0;
      for (int z = 0; z < D; ++z) {
        const int cz = window_count(z, D, r);
        for (int y = 0; y < H; ++y) {
          const int cy = window_count(y, H, r);
          for (int xx = 0; xx < W; ++xx, ++v) buf[v] = g[v] / static_cast<T>(cz * cy * window_count(xx, W, r));
        }
      }
      for (int axis = 0; axis < 3; ++axis) box_sum_axis(buf.data(), D, H, W, axis, r, line);
      T* gi = gin[0]->channel(n, c);
      for (std::size_t i = 0; i < buf.size(); ++i) gi[i] += buf[i];
    }
  }
}

// ------------------------------------------------------------- Subtract

template <typename T>
Dims Subtract<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 2, "subtract");
  if (!(in[0] == in[1])) fail(ErrorCode::shape_error, "subtract operands differ: " + in[0].str() + " vs " + in[1].str());
  return in[0];
}

template <typename T>
void Subtract<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Dims dims[2] = {in[0]->dims, in[1]->dims};
  out.resize(infer_dims(dims));
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = in[0]->data[i] - in[1]->data[i];
}

template <typename T>
void Subtract<T>::backward(Inputs<T>, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  if (gin[0]) {
    for (std::size_t i = 0; i < gout.size(); ++i) gin[0]->data[i] += gout.data[i];
  }
  if (gin[1]) {
    for (std::size_t i = 0; i < gout.size(); ++i) gin[1]->data[i] -= gout.data[i];
  }
}

// --------------------------------------------------------------- Concat

template <typename T>
Dims Concat<T>::infer_dims(std::span<const Dims> in) const {
  if (in.empty()) fail(ErrorCode::shape_error, "concat needs inputs");
  Dims d = in[0];
  d.d[1] = 0;
  for (const auto& x : in) {
    if (!x.same_spatial(in[0]) || x.n() != in[0].n()) {
      fail(ErrorCode::shape_error, "concat joins unequal shapes " + in[0].str() + " and " + x.str());
    }
    d.d[1] += x.c();
  }
  return d;
}

template <typename T>
void Concat<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  std::vector<Dims> dims;
  for (auto* t : in) dims.push_back(t->dims);
  out.resize(infer_dims(dims));
  for (int n = 0; n < out.dims.n(); ++n) {
    T* dst = out.sample(n);
    for (auto* t : in) {
      const T* src = t->sample(n);
      dst = std::copy(src, src + t->dims.per_sample(), dst);
    }
  }
}

template <typename T>
void Concat<T>::backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  for (int n = 0; n < out.dims.n(); ++n) {
    const T* src = gout.sample(n);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t len = in[k]->dims.per_sample();
      if (gin[k]) {
        T* dst = gin[k]->sample(n);
        for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
      }
      src += len;
    }
  }
}

// -------------------------------------------------------------- Softmax

template <typename T>
void Softmax<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(x.dims);
  const std::size_t S = x.dims.spatial();
  const int C = x.dims.c();
  for (int n = 0; n < x.dims.n(); ++n) {
    const T* xs = x.sample(n);
    T* os = out.sample(n);
    for (std::size_t v = 0; v < S; ++v) {
      T m = xs[v];
      for (int c = 1; c < C; ++c) m = std::max(m, xs[c * S + v]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) sum += os[c * S + v] = std::exp(xs[c * S + v] - m);
      for (int c = 0; c < C; ++c) os[c * S + v] /= sum;
    }
  }
}

template <typename T>
void Softmax<T>::backward(Inputs<T>, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  const std::size_t S = out.dims.spatial();
  const int C = out.dims.c();
  for (int n = 0; n < out.dims.n(); ++n) {
    const T* y = out.sample(n);
    const T* g = gout.sample(n);
    T* gi = gin[0]->sample(n);
    for (std::size_t v = 0; v < S; ++v) {
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += g[c * S + v] * y[c * S + v];
      for (int c = 0; c < C; ++c) gi[c * S + v] += y[c * S + v] * (g[c * S + v] - dot);
    }
  }
}

// -------------------------------------------------------------- Sigmoid

template <typename T>
void Sigmoid<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(x.dims);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
}

template <typename T>
void Sigmoid<T>::backward(Inputs<T>, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  for (std::size_t i = 0; i < out.size(); ++i) {
    gin[0]->data[i] += gout.data[i] * out.data[i] * (T(1) - out.data[i]);
  }
}

// -------------------------------------------------------------- Flatten

template <typename T>
Dims Flatten<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "flatten");
  return make_dims(in[0].n(), static_cast<int>(in[0].per_sample()), 1, 1, 1);
}

template <typename T>
void Flatten<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  out.dims = infer_dims(std::span<const Dims>(&in[0]->dims, 1));
  out.data = in[0]->data;
}

template <typename T>
void Flatten<T>::backward(Inputs<T>, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  for (std::size_t i = 0; i < gout.size(); ++i) gin[0]->data[i] += gout.data[i];
}

// ---------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(int in, int out, std::mt19937_64& rng) : in_(in), out_(out) {
  if (in < 1 || out < 1) fail(ErrorCode::invalid_argument, "dense sizes must be >= 1");
  weight_ = make_param<T>("weight", make_dims(out, in, 1, 1, 1));
  bias_ = make_param<T>("bias", make_dims(1, out, 1, 1, 1));
  he_normal(weight_.value, in, rng);
}

template <typename T>
Dims Dense<T>::infer_dims(std::span<const Dims> in) const {
  require_inputs<T>(in, 1, "dense");
  if (static_cast<int>(in[0].per_sample()) != in_) {
    fail(ErrorCode::shape_error, "dense expects " + std::to_string(in_) + " features, got " + in[0].str());
  }
  return make_dims(in[0].n(), out_, 1, 1, 1);
}

template <typename T>
void Dense<T>::forward(Inputs<T> in, Tensor<T>& out, Mode) {
  const Tensor<T>& x = *in[0];
  out.resize(infer_dims(std::span<const Dims>(&x.dims, 1)));
  for (int n = 0; n < x.dims.n(); ++n) {
    const T* xs = x.sample(n);
    T* os = out.sample(n);
    for (int o = 0; o < out_; ++o) {
      const T* w = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
      T s = bias_.value.data[o];
      for (int i = 0; i < in_; ++i) s += w[i] * xs[i];
      os[o] = s;
    }
  }
}

template <typename T>
void Dense<T>::backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  const Tensor<T>& x = *in[0];
  for (int n = 0; n < x.dims.n(); ++n) {
    const T* xs = x.sample(n);
    const T* g = gout.sample(n);
    T* gi = gin[0] ? gin[0]->sample(n) : nullptr;
    for (int o = 0; o < out_; ++o) {
      bias_.grad.data[o] += g[o];
      T* gw = weight_.grad.data.data() + static_cast<std::size_t>(o) * in_;
      const T* w = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) {
        gw[i] += g[o] * xs[i];
        if (gi) gi[i] += g[o] * w[i];
      }
    }
  }
}

// -------------------------------------------------------------- Dropout

template <typename T>
void Dropout<T>::forward(Inputs<T> in, Tensor<T>& out, Mode mode) {
  const Tensor<T>& x = *in[0];
  out = x;
  if (mode != Mode::train || rate_ <= 0.0) {
    mask_.clear();
    return;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep = static_cast<T>(1.0 / (1.0 - rate_));
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = u(rng_) >= rate_ ? keep : T(0);
    out.data[i] *= mask_[i];
  }
}

template <typename T>
void Dropout<T>::backward(Inputs<T>, const Tensor<T>&, const Tensor<T>& gout, GradInputs<T> gin) {
  if (!gin[0]) return;
  for (std::size_t i = 0; i < gout.size(); ++i) gin[0]->data[i] += mask_.empty() ? gout.data[i] : gout.data[i] * mask_[i];
}

#define GHC_INSTANTIATE_OPS(T)       \
  template class Conv3d<T>;          \
  template class BatchNorm<T>;       \
  template class Relu<T>;            \
  template class MaxPool2<T>;        \
  template class UpsampleNearest<T>; \
  template class AvgPoolSame<T>;     \
  template class Subtract<T>;        \
  template class Concat<T>;          \
  template class Softmax<T>;         \
  template class Sigmoid<T>;         \
  template class Flatten<T>;         \
  template class Dense<T>;           \
  template class Dropout<T>;

GHC_INSTANTIATE_OPS(float)
GHC_INSTANTIATE_OPS(double)

}  // namespace ghc::nn
