#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ghc {

void LossConfig::validate() const {
  if (!(gamma > 0.0)) fail(ErrorCode::config_error, "loss.gamma must be > 0");
  if (!(sigma > 0.0)) fail(ErrorCode::config_error, "loss.sigma must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::config_error, "loss.alpha must lie in [0, 1]");
  if (!(epsilon > 0.0)) fail(ErrorCode::config_error, "loss.epsilon must be > 0");
  if (!(ca_weight_start >= 0.0 && ca_weight_start <= 1.0 && ca_weight_end >= 0.0 && ca_weight_end <= 1.0)) {
    fail(ErrorCode::config_error, "contour weight schedule must stay within [0, 1]");
  }
  if (max_epochs < 1) fail(ErrorCode::config_error, "loss.max_epochs must be >= 1");
}

double LossConfig::ca_weight(int epoch) const {
  const double t = std::clamp(static_cast<double>(epoch) / max_epochs, 0.0, 1.0);
  return ca_weight_start + (ca_weight_end - ca_weight_start) * t;
}

double dwm_value(double edt, double gamma, double sigma) { return 1.0 + gamma * std::exp(-edt / sigma); }

Volume dwm(const Volume& edt_map, double gamma, double sigma) {
  Volume out(edt_map.geometry());
  for (std::size_t i = 0; i < edt_map.size(); ++i) {
    const double d = edt_map.data()[i];
    if (d < 0.0) fail(ErrorCode::invalid_argument, "EDT values must be >= 0");
    out.data()[i] = static_cast<float>(dwm_value(d, gamma, sigma));
  }
  return out;
}

std::vector<float> dwm_stack(const Shape3& shape, std::span<const std::uint8_t> labels, int classes, double gamma,
                             double sigma) {
  const std::size_t n = shape.voxels();
  std::vector<float> out(n * classes, 1.0f);
  for (int c = 0; c < classes; ++c) {
    if (std::find(labels.begin(), labels.end(), static_cast<std::uint8_t>(c)) == labels.end()) continue;
    const auto mask = boundary_mask(shape, labels, static_cast<std::uint8_t>(c));
    const auto sq = squared_edt(shape, mask);
    for (std::size_t v = 0; v < n; ++v) out[c * n + v] = static_cast<float>(dwm_value(std::sqrt(sq[v]), gamma, sigma));
  }
  return out;
}

std::vector<float> edge_targets(const Shape3& shape, std::span<const std::uint8_t> labels, int classes) {
  const std::size_t n = shape.voxels();
  std::vector<float> out(n * (classes - 1), 0.0f);
  for (int c = 1; c < classes; ++c) {
    const auto mask = boundary_mask(shape, labels, static_cast<std::uint8_t>(c));
    for (std::size_t v = 0; v < n; ++v) out[(c - 1) * n + v] = mask[v];
  }
  return out;
}

template <typename T>
std::vector<T> one_hot(std::span<const std::uint8_t> labels, int classes) {
  const std::size_t n = labels.size();
  std::vector<T> out(n * classes, T(0));
  for (std::size_t v = 0; v < n; ++v) {
    if (labels[v] >= classes) fail(ErrorCode::label_error, "label id exceeds class count");
    out[labels[v] * n + v] = T(1);
  }
  return out;
}

namespace {

template <typename T>
void check_sizes(std::span<const T> a, std::span<const T> b, const char* what) {
  if (a.size() != b.size() || a.empty()) fail(ErrorCode::shape_error, std::string(what) + ": shape mismatch");
}

}  // namespace

template <typename T>
double weighted_ce(std::span<const T> y, std::span<const T> yhat, std::span<const T> weights, int classes, double eps,
                   std::span<T> grad) {
  check_sizes(y, yhat, "weighted_ce");
  check_sizes(y, weights, "weighted_ce");
  if (y.size() % classes != 0) fail(ErrorCode::shape_error, "weighted_ce: size not divisible by classes");
  const double n = static_cast<double>(y.size() / classes);
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != y.size()) fail(ErrorCode::shape_error, "weighted_ce: gradient buffer size");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double wy = static_cast<double>(weights[i]) * static_cast<double>(y[i]);
    const double p = static_cast<double>(yhat[i]) + eps;
    if (wy != 0.0) sum -= wy * std::log(p);
    if (want_grad) grad[i] = static_cast<T>(-wy / (p * n));
  }
  return sum / n;
}

template <typename T>
double soft_dice(std::span<const T> y, std::span<const T> yhat, int classes, double eps, std::span<T> grad,
                 int first_class) {
  check_sizes(y, yhat, "soft_dice");
  if (y.size() % classes != 0) fail(ErrorCode::shape_error, "soft_dice: size not divisible by classes");
  const std::size_t n = y.size() / classes;
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != y.size()) fail(ErrorCode::shape_error, "soft_dice: gradient buffer size");
    std::fill(grad.begin(), grad.end(), T(0));
  }
  const int counted = classes - first_class;
  if (counted < 1) fail(ErrorCode::invalid_argument, "soft_dice: no classes to average");
  double dice = 0.0;
  for (int c = first_class; c < classes; ++c) {
    double inter = 0.0, sum = 0.0;
    const std::size_t base = c * n;
    for (std::size_t v = 0; v < n; ++v) {
      inter += static_cast<double>(y[base + v]) * yhat[base + v];
      sum += static_cast<double>(y[base + v]) + yhat[base + v];
    }
    const double num = 2.0 * inter + eps;
    const double den = sum + eps;
    dice += num / den;
    if (want_grad) {
      for (std::size_t v = 0; v < n; ++v) {
        grad[base + v] = static_cast<T>((2.0 * y[base + v] * den - num) / (den * den) / counted);
      }
    }
  }
  return dice / counted;
}

template <typename T>
double ra_loss(std::span<const T> y, std::span<const T> yhat, std::span<const T> weights, int classes,
               const LossConfig& cfg, std::span<T> grad) {
  const bool want_grad = !grad.empty();
  std::vector<T> gd, gc;
  if (want_grad) {
    gd.resize(y.size());
    gc.resize(y.size());
  }
  const double d = soft_dice<T>(y, yhat, classes, cfg.epsilon, gd);
  const double cw = weighted_ce<T>(y, yhat, weights, classes, cfg.epsilon, gc);
  if (want_grad) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      grad[i] = static_cast<T>(-cfg.alpha * gd[i] + (1.0 - cfg.alpha) * gc[i]);
    }
  }
  return cfg.alpha * (1.0 - d) + (1.0 - cfg.alpha) * cw;
}

template <typename T>
double ca_loss(std::span<const T> edge_y, std::span<const T> edge_yhat, int channels, double eps, std::span<T> grad) {
  check_sizes(edge_y, edge_yhat, "ca_loss");
  if (channels < 1 || edge_y.size() % channels != 0) fail(ErrorCode::shape_error, "ca_loss: bad channel count");
  const std::size_t n = edge_y.size() / channels;
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != edge_y.size()) fail(ErrorCode::shape_error, "ca_loss: gradient buffer size");
  double total = 0.0;
  for (int e = 0; e < channels; ++e) {
    const std::size_t base = e * n;
    double positives = 0.0, inter = 0.0, sum = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      positives += edge_y[base + v];
      inter += static_cast<double>(edge_y[base + v]) * edge_yhat[base + v];
      sum += static_cast<double>(edge_y[base + v]) + edge_yhat[base + v];
    }
    const double beta = 1.0 - positives / static_cast<double>(n);  // weight of the (rare) edge voxels
    double bce = 0.0;
    const double num = 2.0 * inter + eps;
    const double den = sum + eps;
    for (std::size_t v = 0; v < n; ++v) {
      const double y = edge_y[base + v];
      const double p = edge_yhat[base + v];
      bce -= beta * y * std::log(p + eps) + (1.0 - beta) * (1.0 - y) * std::log(1.0 - p + eps);
      if (want_grad) {
        const double g_bce = -(beta * y / (p + eps) - (1.0 - beta) * (1.0 - y) / (1.0 - p + eps)) / n;
        const double g_dice = -(2.0 * y * den - num) / (den * den);
        grad[base + v] = static_cast<T>((g_bce + g_dice) / channels);
      }
    }
    total += bce / n + (1.0 - num / den);
  }
  return total / channels;
}

double total_loss(double ra, double ca, int epoch, const LossConfig& cfg) {
  const double w = cfg.ca_weight(epoch);
  return (1.0 - w) * ra + w * ca;
}

std::vector<double> class_weights(std::span<const double> counts) {
  if (counts.empty()) fail(ErrorCode::degenerate_class, "no classes given");
  double inv_sum = 0.0;
  for (double n : counts) {
    if (!(n > 0.0)) fail(ErrorCode::degenerate_class, "every class needs a positive count");
    inv_sum += 1.0 / n;
  }
  std::vector<double> k(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) k[c] = (1.0 / counts[c]) / inv_sum;
  return k;
}

template <typename T>
double task_ce(std::span<const T> y, std::span<const T> probs, std::span<const double> weights, int classes,
               double eps, std::span<T> grad) {
  check_sizes(y, probs, "task_ce");
  if (static_cast<int>(weights.size()) != classes || y.size() % classes != 0) {
    fail(ErrorCode::shape_error, "task_ce: class count mismatch");
  }
  const std::size_t batch = y.size() / classes;
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != y.size()) fail(ErrorCode::shape_error, "task_ce: gradient buffer size");
  double sum = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int c = 0; c < classes; ++c) {
      const std::size_t i = b * classes + c;
      const double ky = weights[c] * static_cast<double>(y[i]);
      const double p = static_cast<double>(probs[i]) + eps;
      if (ky != 0.0) sum -= ky * std::log(p);
      if (want_grad) grad[i] = static_cast<T>(-ky / (p * batch));
    }
  }
  return sum / batch;
}

#define GHC_INSTANTIATE_LOSSES(T)                                                                                  \
  template std::vector<T> one_hot<T>(std::span<const std::uint8_t>, int);                                         \
  template double weighted_ce<T>(std::span<const T>, std::span<const T>, std::span<const T>, int, double,         \
                                 std::span<T>);                                                                   \
  template double soft_dice<T>(std::span<const T>, std::span<const T>, int, double, std::span<T>, int);           \
  template double ra_loss<T>(std::span<const T>, std::span<const T>, std::span<const T>, int, const LossConfig&, \
                             std::span<T>);                                                                       \
  template double ca_loss<T>(std::span<const T>, std::span<const T>, int, double, std::span<T>);                  \
  template double task_ce<T>(std::span<const T>, std::span<const T>, std::span<const double>, int, double,        \
                             std::span<T>);

GHC_INSTANTIATE_LOSSES(float)
GHC_INSTANTIATE_LOSSES(double)

#undef GHC_INSTANTIATE_LOSSES

}  // namespace ghc
