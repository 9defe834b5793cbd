#pragma once

#include <span>
#include <vector>

#include "losses/edt.hpp"

namespace ghc {

struct LossConfig {
  double gamma = 8.0;    // DWM amplitude
  double sigma = 10.0;   // DWM decay, voxels
  double alpha = 0.5;    // Dice vs weighted-CE mix in the region loss
  double ca_weight_start = 0.5;
  double ca_weight_end = 0.2;
  int max_epochs = 100;
  double epsilon = 1e-6;

  void validate() const;
  /// Contour-branch weight, linear from start (epoch 0) to end (max_epochs).
  double ca_weight(int epoch) const;
};

/// 1 + gamma * exp(-edt / sigma), elementwise.
Volume dwm(const Volume& edt_map, double gamma, double sigma);
double dwm_value(double edt, double gamma, double sigma);

/// Per-class DWM stack [class][voxel] for a label patch. Classes absent from
/// the patch get weight 1 everywhere (they carry no target voxels anyway).
std::vector<float> dwm_stack(const Shape3& shape, std::span<const std::uint8_t> labels, int classes, double gamma,
                             double sigma);

/// Edge targets [fg class - 1][voxel] for classes 1..classes-1.
std::vector<float> edge_targets(const Shape3& shape, std::span<const std::uint8_t> labels, int classes);

/// One-hot encoding [class][voxel].
template <typename T>
std::vector<T> one_hot(std::span<const std::uint8_t> labels, int classes);

// All tensors below are class-major: x[c * voxels + v]. Passing a non-empty
// `grad` span receives d(loss)/d(prediction) (overwritten, same layout).

/// Distance-weighted cross-entropy, normalised by voxel count.
template <typename T>
double weighted_ce(std::span<const T> y, std::span<const T> yhat, std::span<const T> weights, int classes,
                   double eps, std::span<T> grad = {});

/// Soft Dice averaged over classes [first_class, classes). `grad` receives dD/dyhat.
template <typename T>
double soft_dice(std::span<const T> y, std::span<const T> yhat, int classes, double eps, std::span<T> grad = {},
                 int first_class = 1);

/// alpha * (1 - D) + (1 - alpha) * C_w.
template <typename T>
double ra_loss(std::span<const T> y, std::span<const T> yhat, std::span<const T> weights, int classes,
               const LossConfig& cfg, std::span<T> grad = {});

/// Balanced BCE + (1 - soft Dice) per edge channel, averaged over channels.
template <typename T>
double ca_loss(std::span<const T> edge_y, std::span<const T> edge_yhat, int channels, double eps,
               std::span<T> grad = {});

double total_loss(double ra, double ca, int epoch, const LossConfig& cfg);

/// Inverse-frequency weights normalised to sum to one.
std::vector<double> class_weights(std::span<const double> counts);

/// Weighted categorical CE averaged over the batch; y/probs are [sample][class].
template <typename T>
double task_ce(std::span<const T> y, std::span<const T> probs, std::span<const double> weights, int classes,
               double eps, std::span<T> grad = {});

}  // namespace ghc
