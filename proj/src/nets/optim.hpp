#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "nets/graph.hpp"

namespace ghc::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  /// Applies one update to every trainable parameter from its accumulated grad.
  void step(std::vector<std::pair<std::string, Param<float>*>> params, float grad_scale = 1.0f);
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // moment buffers keyed by parameter name
  std::map<std::string, std::vector<float>>& first() { return m_; }
  std::map<std::string, std::vector<float>>& second() { return v_; }
  const std::map<std::string, std::vector<float>>& first() const { return m_; }
  const std::map<std::string, std::vector<float>>& second() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  nlohmann::json config;
  std::map<std::string, std::vector<float>> tensors;  // parameters incl. batch-norm running stats
  std::map<std::string, std::vector<float>> adam_m, adam_v;
  long adam_steps = 0;
  int epoch = 0;
};

Checkpoint capture(Graph<float>& g, const nlohmann::json& config, const Adam* opt, int epoch);
/// Copies tensors into the graph; every graph parameter must be present with matching size.
void restore(Graph<float>& g, const Checkpoint& ck, Adam* opt = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ghc::nn
