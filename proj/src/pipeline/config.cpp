#include "pipeline/config.hpp"

#include <algorithm>
#include <sstream>

#include "core/fsutil.hpp"

namespace ghc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::config_error, what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(optimizer.kind == "Adam", "optimizer.kind must be Adam");
  require(optimizer.lr > 0, "optimizer.lr must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(early_stopping_patience >= 1, "early_stopping_patience must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(val_fraction >= 0 && val_fraction < 1, "val_fraction must be in [0, 1)");
  require(seg_samples_per_epoch >= 0, "seg_samples_per_epoch must be >= 0");
  require(val_patches_per_case >= 1, "val_patches_per_case must be >= 1");
  require(loader_workers >= 1 && queue_capacity >= 1, "loader_workers and queue_capacity must be >= 1");
  require(device == "cpu", "device '" + device + "' is not available in this build (cpu only)");
  require(phantom.count >= 1, "phantom.count must be >= 1");
  require(cls.input[0] == cls.input[1] && cls.input[1] == cls.input[2], "classifier input must be a cube");
  try {
    loss.validate();
    seg.validate();
    cls.validate();
    phantom.base.validate();
    phantom.ranges.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config_error, e.what());
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"manifest", c.manifest.string()},
       {"val_fraction", c.val_fraction},
       {"loss",
        {{"gamma", c.loss.gamma},
         {"sigma", c.loss.sigma},
         {"alpha", c.loss.alpha},
         {"ca_weight_start", c.loss.ca_weight_start},
         {"ca_weight_end", c.loss.ca_weight_end},
         {"epsilon", c.loss.epsilon}}},
       {"seg", c.seg},
       {"cls", c.cls},
       {"optimizer", {{"kind", c.optimizer.kind}, {"lr", c.optimizer.lr}}},
       {"batch_size", c.batch_size},
       {"early_stopping_patience", c.early_stopping_patience},
       {"max_epochs", c.max_epochs},
       {"seg_samples_per_epoch", c.seg_samples_per_epoch},
       {"val_patches_per_case", c.val_patches_per_case},
       {"loader_workers", c.loader_workers},
       {"queue_capacity", c.queue_capacity},
       {"flip_augmentation", c.flip_augmentation},
       {"seed", c.seed},
       {"device", c.device},
       {"phantom", {{"count", c.phantom.count}, {"base", c.phantom.base}, {"ranges", c.phantom.ranges}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known = {
      "manifest", "val_fraction", "loss", "seg", "cls", "optimizer", "batch_size", "early_stopping_patience",
      "max_epochs", "seg_samples_per_epoch", "val_patches_per_case", "loader_workers", "queue_capacity",
      "flip_augmentation", "seed", "device", "phantom"};
  if (!j.is_object()) fail(ErrorCode::config_error, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) fail(ErrorCode::config_error, "unknown config key " + key);
  }
  ExperimentConfig d;
  try {
    if (j.contains("manifest")) d.manifest = j.at("manifest").get<std::string>();
    if (j.contains("val_fraction")) j.at("val_fraction").get_to(d.val_fraction);
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      if (l.contains("gamma")) l.at("gamma").get_to(d.loss.gamma);
      if (l.contains("sigma")) l.at("sigma").get_to(d.loss.sigma);
      if (l.contains("alpha")) l.at("alpha").get_to(d.loss.alpha);
      if (l.contains("ca_weight_start")) l.at("ca_weight_start").get_to(d.loss.ca_weight_start);
      if (l.contains("ca_weight_end")) l.at("ca_weight_end").get_to(d.loss.ca_weight_end);
      if (l.contains("epsilon")) l.at("epsilon").get_to(d.loss.epsilon);
    }
    if (j.contains("seg")) d.seg = j.at("seg").get<nn::CELUNetConfig>();
    if (j.contains("cls")) d.cls = j.at("cls").get<nn::ArthroNetConfig>();
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.contains("kind")) o.at("kind").get_to(d.optimizer.kind);
      if (o.contains("lr")) o.at("lr").get_to(d.optimizer.lr);
    }
    if (j.contains("batch_size")) j.at("batch_size").get_to(d.batch_size);
    if (j.contains("early_stopping_patience")) j.at("early_stopping_patience").get_to(d.early_stopping_patience);
    if (j.contains("max_epochs")) j.at("max_epochs").get_to(d.max_epochs);
    if (j.contains("seg_samples_per_epoch")) j.at("seg_samples_per_epoch").get_to(d.seg_samples_per_epoch);
    if (j.contains("val_patches_per_case")) j.at("val_patches_per_case").get_to(d.val_patches_per_case);
    if (j.contains("loader_workers")) j.at("loader_workers").get_to(d.loader_workers);
    if (j.contains("queue_capacity")) j.at("queue_capacity").get_to(d.queue_capacity);
    if (j.contains("flip_augmentation")) j.at("flip_augmentation").get_to(d.flip_augmentation);
    if (j.contains("seed")) j.at("seed").get_to(d.seed);
    if (j.contains("device")) j.at("device").get_to(d.device);
    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      if (p.contains("count")) p.at("count").get_to(d.phantom.count);
      if (p.contains("base")) d.phantom.base = p.at("base").get<PhantomSpec>();
      if (p.contains("ranges")) d.phantom.ranges = p.at("ranges").get<CohortRanges>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config_error, std::string("config: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::config_error, std::string("config: ") + e.what());
  }
  // the contour-weight schedule spans the whole run
  d.loss.max_epochs = d.max_epochs;
  c = d;
}

void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) fail(ErrorCode::config_error, "empty override key");
  nlohmann::json* node = &j;
  std::istringstream in(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(in, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) fail(ErrorCode::config_error, "override " + dotted_key + " descends into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = nlohmann::json::object();
  }
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  (*node)[parts.back()] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json j;
  if (!path.empty()) {
    j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::config_error, path.string() + " is not valid JSON");
  } else {
    j = nlohmann::json::object();
  }
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  ExperimentConfig c = j.get<ExperimentConfig>();
  if (!c.manifest.empty() && c.manifest.is_relative() && !path.empty()) {
    c.manifest = std::filesystem::absolute(path).parent_path() / c.manifest;
  }
  c.validate();
  return c;
}

}  // namespace ghc
