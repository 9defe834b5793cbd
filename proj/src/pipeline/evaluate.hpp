#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

namespace ghc {

/// Scores one or more prediction directories (as written by infer: files
/// <id>_labels.nii and <id>_report.json) against a truth manifest. Each set
/// gets per-case segmentation records {case_id, class, dice, jaccard,
/// precision, recall, rmse_mm, hausdorff_mm} and per-task classification
/// reports. With two or more sets, per-metric Wilcoxon tests between every
/// pair (Bonferroni over the pairs) and, with three or more, Friedman tests
/// are added. Throws PairingError when a truth case has no prediction or a
/// prediction has no truth.
nlohmann::json evaluate(const std::vector<std::filesystem::path>& pred_dirs, const std::filesystem::path& truth_manifest);

/// Aggregates the *_report.json files of a directory: case count, per-stage
/// timing median / min / max and predicted class histograms. Throws
/// DataError when the directory holds no report.
nlohmann::json summarize_reports(const std::filesystem::path& dir);

}  // namespace ghc
