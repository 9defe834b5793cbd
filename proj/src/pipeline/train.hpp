#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "pipeline/config.hpp"
#include "pipeline/data.hpp"

namespace ghc {

struct TrainResult {
  std::filesystem::path best_checkpoint, last_checkpoint, log_path;
  int best_epoch = -1;
  double best_val_loss = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  std::vector<nlohmann::json> log;  // one record per epoch
};

using EpochCallback = std::function<void(const nlohmann::json&)>;

/// Adam on the combined region + contour loss over random patches; early
/// stopping on validation loss. Writes seg_best.ckpt, seg_last.ckpt and
/// seg_log.jsonl under out_dir. Throws DataError on an empty manifest.
TrainResult train_segmentation(const ExperimentConfig& cfg, const std::vector<ManifestRecord>& records,
                               const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

/// Adam on the summed class-weighted cross-entropy of the three heads over
/// GH patches cut around ground-truth joints. Writes cls_best.ckpt,
/// cls_last.ckpt and cls_log.jsonl. Throws DegenerateClass when a task has
/// a class with no training case.
TrainResult train_classifier(const ExperimentConfig& cfg, const std::vector<ManifestRecord>& records,
                             const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

/// Class weights for each task from the training labels.
std::array<std::vector<double>, 3> task_class_weights(const std::vector<StagingLabels>& labels);

}  // namespace ghc
