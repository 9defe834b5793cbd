#include "pipeline/infer.hpp"

#include <algorithm>
#include <chrono>

#include "core/fsutil.hpp"
#include "core/version.hpp"
#include "nets/optim.hpp"
#include "recon/marching_cubes.hpp"
#include "volcore/nifti_io.hpp"
#include "volcore/patch.hpp"
#include "volcore/preprocess.hpp"

namespace ghc {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

nn::Checkpoint load_kind(const std::filesystem::path& path, const std::string& kind) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  if (!ck.config.is_object() || ck.config.value("kind", "") != kind) {
    fail(ErrorCode::format_error, path.string() + " is not a " + kind + " checkpoint");
  }
  return ck;
}

TaskPrediction take(const nn::Tensor<float>& probs) {
  TaskPrediction t;
  t.probs.assign(probs.data.begin(), probs.data.begin() + probs.dims.c());
  t.label = static_cast<int>(std::max_element(t.probs.begin(), t.probs.end()) - t.probs.begin());
  return t;
}

std::size_t count_label(const LabelMap& labels, std::uint8_t cls) {
  return static_cast<std::size_t>(std::count(labels.data().begin(), labels.data().end(), cls));
}

}  // namespace

nn::SegNet<float> load_segmenter(const std::filesystem::path& checkpoint) {
  const nn::Checkpoint ck = load_kind(checkpoint, "segmentation");
  auto net = nn::make_celunet<float>(ck.config.at("net").get<nn::CELUNetConfig>(), 0);
  nn::restore(net.graph, ck);
  return net;
}

nn::ClsNet<float> load_classifier(const std::filesystem::path& checkpoint) {
  const nn::Checkpoint ck = load_kind(checkpoint, "classification");
  auto net = nn::make_arthronet<float>(ck.config.at("net").get<nn::ArthroNetConfig>(), 0);
  nn::restore(net.graph, ck);
  return net;
}

Cascade::Cascade(const std::filesystem::path& seg_checkpoint, const std::filesystem::path& cls_checkpoint)
    : seg_(load_segmenter(seg_checkpoint)), cls_(load_classifier(cls_checkpoint)) {
  const auto& in = cls_.cfg.input;
  if (in[0] != in[1] || in[1] != in[2]) fail(ErrorCode::config_error, "classifier input must be a cube");
}

LabelMap segment_volume(nn::SegNet<float>& net, const Volume& normalized) {
  const auto& in = net.cfg.input;
  const Index3 size{in[2], in[1], in[0]};
  const Index3 stride{default_stride(size[0]), default_stride(size[1]), default_stride(size[2])};
  const GridGeometry& g = normalized.geometry();
  const PatchGrid grid = make_patch_grid(g.shape, size, stride);
  std::vector<PatchPrediction> preds;
  preds.reserve(grid.offsets.size());
  nn::Tensor<float> x(nn::make_dims(1, 1, in[0], in[1], in[2]));
  for (const Index3& off : grid.offsets) {
    x.data = extract_patch(normalized, off, size);
    const auto out = nn::forward_seg(net, x);
    preds.push_back({off, size, out.region.data});
  }
  return argmax_labels(merge_patches(preds, g, net.cfg.out_classes));
}

LabelMap Cascade::segment(const Volume& normalized) { return segment_volume(seg_, normalized); }

CascadeOutput Cascade::run(const Volume& ct, const std::string& case_id) {
  CascadeOutput out;
  out.case_id = case_id;
  StageTimings& t = out.staging.timings_s;
  const auto start = Clock::now();

  const Volume image = normalize_hu(ct);
  out.labels = segment(image);
  t.segmentation = since(start);

  const auto t1 = Clock::now();
  if (count_label(out.labels, label::humerus) == 0) {
    fail(ErrorCode::pipeline_error, "NoHumerus: segmentation of " + case_id + " found no humerus");
  }
  if (count_label(out.labels, label::scapula) == 0) {
    fail(ErrorCode::missing_scapula, "segmentation of " + case_id + " found no scapula");
  }
  out.humerus_mesh = marching_cubes(out.labels, label::humerus);
  out.scapula_mesh = marching_cubes(out.labels, label::scapula);
  out.head = fit_humeral_head(out.humerus_mesh);
  out.staging.gh_box = gh_bounding_box(out.head, out.labels, gh_patch());
  t.reconstruction = since(t1);

  const auto t2 = Clock::now();
  const int p = gh_patch();
  nn::Tensor<float> x(nn::make_dims(1, 1, p, p, p));
  x.data = extract_patch(image, out.staging.gh_box.lo, Index3{p, p, p});
  const auto heads = nn::forward_cls(cls_, x);
  out.staging.os = take(heads[0]);
  out.staging.js = take(heads[1]);
  out.staging.hsa = take(heads[2]);
  t.classification = since(t2);
  t.overall = since(start);
  return out;
}

nlohmann::json report_json(const CascadeOutput& out) {
  const StagingResult& s = out.staging;
  const GhBox& b = s.gh_box;
  return {{"case_id", out.case_id},
          {"os", s.os.label},
          {"js", s.js.label},
          {"hsa", s.hsa.label},
          {"probs", {{"os", s.os.probs}, {"js", s.js.probs}, {"hsa", s.hsa.probs}}},
          {"gh_box",
           {{"lo", b.lo},
            {"hi", b.hi()},
            {"patch", b.patch},
            {"joint_center_mm", {b.joint_center.x(), b.joint_center.y(), b.joint_center.z()}}}},
          {"head", {{"center_mm", {out.head.center.x(), out.head.center.y(), out.head.center.z()}},
                    {"radius_mm", out.head.radius}}},
          {"timings_s",
           {{"segmentation", s.timings_s.segmentation},
            {"reconstruction", s.timings_s.reconstruction},
            {"classification", s.timings_s.classification},
            {"overall", s.timings_s.overall}}},
          {"versions",
           {{"ghcascade", kVersion}, {"checkpoint_format", nn::kCheckpointVersion}, {"report_schema", kReportSchemaVersion}}}};
}

void write_outputs(const CascadeOutput& out, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_labelmap(out_dir / (out.case_id + "_labels.nii"), out.labels);
  write_stl(out.humerus_mesh, (out_dir / (out.case_id + "_humerus.stl")).string());
  write_stl(out.scapula_mesh, (out_dir / (out.case_id + "_scapula.stl")).string());
  atomic_write(out_dir / (out.case_id + "_report.json"), report_json(out).dump(2) + "\n");
}

nlohmann::json infer_file(const std::filesystem::path& ct_path, const std::filesystem::path& seg_checkpoint,
                          const std::filesystem::path& cls_checkpoint, const std::filesystem::path& out_dir,
                          std::string case_id) {
  if (case_id.empty()) {
    // phantom files are named <id>_ct.nii
    case_id = ct_path.stem().string();
    if (case_id.size() > 3 && case_id.ends_with("_ct")) case_id.resize(case_id.size() - 3);
  }
  const Volume ct = read_volume(ct_path);
  Cascade cascade(seg_checkpoint, cls_checkpoint);
  const CascadeOutput out = cascade.run(ct, case_id);
  write_outputs(out, out_dir);
  return report_json(out);
}

}  // namespace ghc
