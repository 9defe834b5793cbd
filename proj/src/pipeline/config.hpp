#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "losses/losses.hpp"
#include "nets/models.hpp"
#include "phantom/phantom.hpp"

namespace ghc {

struct OptimizerConfig {
  std::string kind = "Adam";
  double lr = 1e-4;
};

struct PhantomCohortConfig {
  int count = 30;
  PhantomSpec base;
  CohortRanges ranges;
};

/// Every hyperparameter of a run. Loaded from one JSON file; command-line
/// overrides are applied to the JSON before parsing.
struct ExperimentConfig {
  std::filesystem::path manifest;   // resolved against the config file's directory
  double val_fraction = 0.2;        // used when the manifest carries no split field
  LossConfig loss;
  nn::CELUNetConfig seg;
  nn::ArthroNetConfig cls;
  OptimizerConfig optimizer;
  int batch_size = 8;
  int early_stopping_patience = 50;
  int max_epochs = 100;
  int seg_samples_per_epoch = 0;   // random training patches per epoch; 0 = one per training case
  int val_patches_per_case = 1;
  int loader_workers = 1;
  int queue_capacity = 4;
  bool flip_augmentation = true;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  PhantomCohortConfig phantom;

  /// Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Sets a dotted key ("optimizer.lr") to a value parsed as JSON when
/// possible, else kept as a string.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

/// Reads, applies overrides, parses, resolves relative paths, validates.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace ghc
