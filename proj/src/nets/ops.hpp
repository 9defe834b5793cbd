#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nets/tensor.hpp"

namespace ghc::nn {

enum class Mode { train, infer };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

template <typename T>
using Inputs = std::span<const Tensor<T>* const>;
template <typename T>
using GradInputs = std::span<Tensor<T>* const>;

/// A node operation in a static graph. backward() accumulates into the
/// non-null entries of `gin` and into its parameters' grads.
template <typename T>
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string kind() const = 0;
  virtual Dims infer_dims(std::span<const Dims> in) const = 0;
  virtual void forward(Inputs<T> in, Tensor<T>& out, Mode mode) = 0;
  virtual void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual int kernel() const { return 0; }
  virtual int stride() const { return 1; }
};

template <typename T>
class Conv3d final : public Op<T> {
 public:
  Conv3d(int cin, int cout, int kernel, std::mt19937_64& rng);
  std::string kind() const override { return "conv3d"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  int kernel() const override { return k_; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_, cout_, k_;
  Param<T> weight_, bias_;
  std::vector<double> gw_, gb_;
};

template <typename T>
class BatchNorm final : public Op<T> {
 public:
  explicit BatchNorm(int channels, double momentum = 0.9, double eps = 1e-3);
  std::string kind() const override { return "batchnorm"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

 private:
  int c_;
  double momentum_, eps_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  std::vector<double> mean_, invstd_;
  bool train_stats_ = false;
};

template <typename T>
class Relu final : public Op<T> {
 public:
  std::string kind() const override { return "relu"; }
  Dims infer_dims(std::span<const Dims> in) const override { return in[0]; }
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

/// 2x2x2 max pooling, stride 2, floor division; an axis of extent 1 stays 1.
template <typename T>
class MaxPool2 final : public Op<T> {
 public:
  std::string kind() const override { return "maxpool"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  int kernel() const override { return 2; }
  int stride() const override { return 2; }
  static int pooled(int n) { return n == 1 ? 1 : n / 2; }

 private:
  std::vector<std::uint32_t> argmax_;
};

/// Nearest-neighbour upsampling to a fixed spatial target.
template <typename T>
class UpsampleNearest final : public Op<T> {
 public:
  UpsampleNearest(int d, int h, int w) : target_{d, h, w} {}
  std::string kind() const override { return "upsample"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;

 private:
  std::array<int, 3> target_;
};

/// Stride-1 box average over a size^3 window, same-size output, averaging
/// only in-grid voxels (a constant field stays constant).
template <typename T>
class AvgPoolSame final : public Op<T> {
 public:
  explicit AvgPoolSame(int size) : size_(size) {}
  std::string kind() const override { return "avgpool"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  int kernel() const override { return size_; }

 private:
  int size_;
};

template <typename T>
class Subtract final : public Op<T> {
 public:
  std::string kind() const override { return "subtract"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

template <typename T>
class Concat final : public Op<T> {
 public:
  std::string kind() const override { return "concat"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

/// Softmax across channels at each voxel (or across features for dense rows).
template <typename T>
class Softmax final : public Op<T> {
 public:
  std::string kind() const override { return "softmax"; }
  Dims infer_dims(std::span<const Dims> in) const override { return in[0]; }
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

template <typename T>
class Sigmoid final : public Op<T> {
 public:
  std::string kind() const override { return "sigmoid"; }
  Dims infer_dims(std::span<const Dims> in) const override { return in[0]; }
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

template <typename T>
class Flatten final : public Op<T> {
 public:
  std::string kind() const override { return "flatten"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
};

template <typename T>
class Dense final : public Op<T> {
 public:
  Dense(int in, int out, std::mt19937_64& rng);
  std::string kind() const override { return "dense"; }
  Dims infer_dims(std::span<const Dims> in) const override;
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
};

/// Inverted dropout; identity at inference.
template <typename T>
class Dropout final : public Op<T> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  std::string kind() const override { return "dropout"; }
  Dims infer_dims(std::span<const Dims> in) const override { return in[0]; }
  void forward(Inputs<T> in, Tensor<T>& out, Mode mode) override;
  void backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout, GradInputs<T> gin) override;
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::vector<T> mask_;
};

}  // namespace ghc::nn
