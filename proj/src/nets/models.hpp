#pragma once

#include <array>
#include <cstdint>

#include <json.hpp>

#include "nets/graph.hpp"

namespace ghc::nn {

struct CELUNetConfig {
  int levels = 4;
  int base_features = 16;
  int in_channels = 1;
  int out_classes = 3;
  std::array<int, 3> input{160, 160, 160};  // D, H, W of one patch

  void validate() const;
  int edge_channels() const { return out_classes - 1; }  // one edge map per foreground class
};

struct ArthroNetConfig {
  int blocks = 7;
  int base_fm = 16;
  int doubling_period = 2;
  std::array<int, 2> dense_units{256, 32};
  double dropout = 0.6;
  std::array<int, 3> heads{3, 3, 2};
  std::array<int, 3> input{160, 160, 160};

  void validate() const;
  /// Whether (blocks, base_fm) is one of the six published designs.
  bool in_ablation_grid() const;
  int channels(int block) const { return base_fm << (block / doubling_period); }
};

void to_json(nlohmann::json& j, const CELUNetConfig& c);
void from_json(const nlohmann::json& j, CELUNetConfig& c);
void to_json(nlohmann::json& j, const ArthroNetConfig& c);
void from_json(const nlohmann::json& j, ArthroNetConfig& c);

/// Appends a pyramidal edge-extraction block (f - avgpool_s(f), s = 3, 5,
/// fused back to f's width by a 1^3 conv) and returns the fused node.
template <typename T>
int add_pee(Graph<T>& g, const std::string& prefix, int f, int channels, std::mt19937_64& rng);

template <typename T>
struct SegNet {
  CELUNetConfig cfg;
  Graph<T> graph;
  int region = -1;  // softmax over classes
  int edge = -1;    // sigmoid per foreground class
};

template <typename T>
struct ClsNet {
  ArthroNetConfig cfg;
  Graph<T> graph;
  std::array<int, 3> heads{-1, -1, -1};  // os, js, hsa softmax nodes
};

template <typename T>
SegNet<T> make_celunet(const CELUNetConfig& cfg, std::uint64_t seed);
template <typename T>
ClsNet<T> make_arthronet(const ArthroNetConfig& cfg, std::uint64_t seed);

NetworkGraph build_celunet(const CELUNetConfig& cfg);
NetworkGraph build_arthronet(const ArthroNetConfig& cfg);

/// Spatial size trace of the classifier input through its pooling stages.
std::vector<int> arthronet_spatial_trace(int input, int blocks);

struct SegOutput {
  Tensor<float> region;
  Tensor<float> edge;
};

/// Inference-mode forward passes (batch norm on running statistics, no dropout).
SegOutput forward_seg(SegNet<float>& net, const Tensor<float>& patch);
std::array<Tensor<float>, 3> forward_cls(ClsNet<float>& net, const Tensor<float>& gh_patch);

}  // namespace ghc::nn
