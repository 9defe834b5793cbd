#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ghloc/ghloc.hpp"
#include "nets/models.hpp"
#include "recon/mesh.hpp"
#include "volcore/volume.hpp"

namespace ghc {

struct TaskPrediction {
  int label = 0;
  std::vector<double> probs;
};

struct StageTimings {
  double segmentation = 0, reconstruction = 0, classification = 0, overall = 0;
};

struct StagingResult {
  TaskPrediction os, js, hsa;
  GhBox gh_box;
  StageTimings timings_s;
};

struct CascadeOutput {
  std::string case_id;
  LabelMap labels;
  TriMesh humerus_mesh, scapula_mesh;
  HeadFit head;
  StagingResult staging;
};

/// The two trained networks plus the geometric stages between them.
class Cascade {
 public:
  Cascade(const std::filesystem::path& seg_checkpoint, const std::filesystem::path& cls_checkpoint);

  /// Raw HU volume in, staging out. Throws PipelineError when segmentation
  /// finds no humerus; MissingScapula propagates from box construction.
  CascadeOutput run(const Volume& ct, const std::string& case_id);

  /// Patch-wise segmentation of a normalised volume with overlap averaging.
  LabelMap segment(const Volume& normalized);

  int gh_patch() const { return cls_.cfg.input[0]; }
  nn::SegNet<float>& segmenter() { return seg_; }
  nn::ClsNet<float>& classifier() { return cls_; }

 private:
  nn::SegNet<float> seg_;
  nn::ClsNet<float> cls_;
};

/// Patch-wise segmentation of a normalised volume: default-stride patches,
/// mean merge, argmax.
LabelMap segment_volume(nn::SegNet<float>& net, const Volume& normalized);

nn::SegNet<float> load_segmenter(const std::filesystem::path& checkpoint);
nn::ClsNet<float> load_classifier(const std::filesystem::path& checkpoint);

nlohmann::json report_json(const CascadeOutput& out);

/// Writes <id>_labels.nii, <id>_humerus.stl, <id>_scapula.stl and
/// <id>_report.json under out_dir, each atomically.
void write_outputs(const CascadeOutput& out, const std::filesystem::path& out_dir);

/// Reads the CT, runs the cascade, writes outputs; returns the report. The
/// case id defaults to the file name without extension.
nlohmann::json infer_file(const std::filesystem::path& ct_path, const std::filesystem::path& seg_checkpoint,
                          const std::filesystem::path& cls_checkpoint, const std::filesystem::path& out_dir,
                          std::string case_id = {});

}  // namespace ghc
