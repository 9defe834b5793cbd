#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "core/fsutil.hpp"
#include "evalstats/metrics.hpp"
#include "losses/losses.hpp"
#include "nets/optim.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/infer.hpp"
#include "pipeline/prefetch.hpp"
#include "pipeline/train.hpp"
#include "test_util.hpp"
#include "volcore/nifti_io.hpp"
#include "volcore/preprocess.hpp"

using namespace ghc;
using testutil::expect_code;

namespace {

// Coarse phantoms: same anatomy in mm, 2.5 mm voxels on a 48^3 grid.
PhantomSpec coarse() {
  PhantomSpec s;
  s.grid = {48, 48, 48};
  s.spacing = 2.5;
  return s;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.seg.levels = 2;
  c.seg.base_features = 4;
  c.seg.input = {32, 32, 32};
  c.cls.blocks = 3;
  c.cls.base_fm = 4;
  c.cls.dense_units = {16, 8};
  c.cls.dropout = 0.2;
  c.cls.input = {32, 32, 32};
  c.batch_size = 2;
  c.max_epochs = 3;
  c.early_stopping_patience = 10;
  c.optimizer.lr = 3e-3;
  c.seed = 5;
  c.loss.max_epochs = c.max_epochs;
  return c;
}

ExperimentConfig seg_fixture_config() {
  ExperimentConfig c = tiny_config();
  c.max_epochs = 20;
  c.loss.max_epochs = 20;
  c.seg_samples_per_epoch = 16;
  c.val_fraction = 0.25;
  c.optimizer.lr = 1e-2;
  return c;
}

// Shared cohort and trained tiny models, built once.
struct Fixture {
  std::filesystem::path dir;
  std::vector<ManifestRecord> records;
  TrainResult seg, cls;

  Fixture() {
    dir = testutil::scratch("pipeline");
    records = read_manifest(generate_cohort(8, CohortRanges{}, coarse(), 21, dir / "cohort"));
    ExperimentConfig c = seg_fixture_config();
    seg = train_segmentation(c, records, dir / "seg");
    c = tiny_config();
    c.max_epochs = 2;
    cls = train_classifier(c, records, dir / "cls");
  }
  ~Fixture() { std::filesystem::remove_all(dir); }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::filesystem::path artifact_dir() {
  const std::filesystem::path d = GHC_TEST_ARTIFACT_DIR;
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("experiment config parsing, overrides and validation") {
  const auto dir = testutil::scratch("config");
  atomic_write(dir / "exp.json", R"({"manifest": "data/manifest.jsonl", "optimizer": {"lr": 0.001},
                                     "seg": {"levels": 2, "base_features": 8, "input": [64, 64, 64]},
                                     "max_epochs": 7})");
  ExperimentConfig c = load_config(dir / "exp.json", {{"seed", "42"}, {"batch_size", "2"}});
  CHECK(c.optimizer.lr == doctest::Approx(1e-3));
  CHECK(c.seed == 42);
  CHECK(c.batch_size == 2);
  CHECK(c.seg.levels == 2);
  CHECK(c.loss.max_epochs == 7);
  CHECK(c.early_stopping_patience == 50);
  CHECK(c.manifest == std::filesystem::absolute(dir) / "data/manifest.jsonl");

  // defaults follow the published training setup
  const ExperimentConfig d;
  CHECK(d.optimizer.lr == 1e-4);
  CHECK(d.batch_size == 8);
  CHECK(d.early_stopping_patience == 50);

  // round trip
  const ExperimentConfig back = nlohmann::json(c).get<ExperimentConfig>();
  CHECK(nlohmann::json(back) == nlohmann::json(c));

  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"optimizer.lr", "0"}}); });
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"batch_size", "0"}}); });
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"early_stopping_patience", "0"}}); });
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"device", "cuda:0"}}); });
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"learning_rate", "1"}}); });
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "exp.json", {{"seg.levels", "9"}}); });
  atomic_write(dir / "bad.json", "{not json");
  expect_code(ErrorCode::config_error, [&] { load_config(dir / "bad.json"); });

  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "optimizer.kind", "Adam");
  apply_override(j, "cls.input", "[32,32,32]");
  CHECK(j["optimizer"]["kind"] == "Adam");
  CHECK(j["cls"]["input"][2] == 32);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest split") {
  expect_code(ErrorCode::data_error, [] { split_manifest({}, 0.2, 1); });
  std::vector<ManifestRecord> recs(10);
  for (int i = 0; i < 10; ++i) recs[i].id = "c" + std::to_string(i);
  const DataSplit a = split_manifest(recs, 0.2, 3), b = split_manifest(recs, 0.2, 3);
  CHECK(a.train.size() == 8);
  CHECK(a.val.size() == 2);
  CHECK(a.val[0].id == b.val[0].id);
  CHECK(split_manifest(recs, 0.0, 3).val.size() == 10);  // validates on the training cases
  CHECK(split_manifest({recs[0], recs[1]}, 0.2, 3).val.size() == 1);
  recs[0].split = "val";
  recs[1].split = "test";
  const DataSplit e = split_manifest(recs, 0.5, 3);
  CHECK(e.val.size() == 1);
  CHECK(e.train.size() == 8);
  for (auto& r : recs) r.split = "val";
  expect_code(ErrorCode::data_error, [&] { split_manifest(recs, 0.2, 3); });
}

TEST_CASE("prefetcher delivers in order and propagates errors") {
  for (int workers : {1, 3}) {
    OrderedPrefetcher<int> p(50, workers, 4, [](std::size_t i) {
      std::this_thread::sleep_for(std::chrono::microseconds((i * 37) % 200));
      return static_cast<int>(i * i);
    });
    for (int i = 0; i < 50; ++i) CHECK(p.next() == i * i);
  }
  std::atomic<int> made{0};
  {
    OrderedPrefetcher<int> p(100, 2, 3, [&](std::size_t i) {
      made++;
      return static_cast<int>(i);
    });
    CHECK(p.next() == 0);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    CHECK(made.load() <= 1 + 3 + 2);  // bounded look-ahead
  }
  OrderedPrefetcher<int> bad(3, 2, 2, [](std::size_t i) -> int {
    if (i == 1) fail(ErrorCode::data_error, "boom");
    return 0;
  });
  CHECK(bad.next() == 0);
  expect_code(ErrorCode::data_error, [&] { bad.next(); });
}

TEST_CASE("segmentation training: log, best checkpoint, determinism") {
  Fixture& f = fixture();
  const TrainResult& r = f.seg;
  REQUIRE(r.epochs_run == 20);
  CHECK(std::filesystem::exists(r.best_checkpoint));
  CHECK(std::filesystem::exists(r.last_checkpoint));
  const std::string log = read_file(r.log_path);
  CHECK(std::count(log.begin(), log.end(), '\n') == 20);
  const double first = r.log.front()["val_loss"].get<double>();
  CHECK(r.best_val_loss < first);
  CHECK(r.log[r.best_epoch]["val_loss"].get<double>() == r.best_val_loss);
  CHECK(r.log.back()["train_loss"].get<double>() < r.log.front()["train_loss"].get<double>());

  // same seed, same first epoch, with a different number of loader threads
  ExperimentConfig c = seg_fixture_config();
  c.max_epochs = 1;
  c.loader_workers = 3;
  const auto dir = testutil::scratch("segdet");
  const TrainResult again = train_segmentation(c, f.records, dir);
  CHECK(std::abs(again.log[0]["train_loss"].get<double>() - r.log[0]["train_loss"].get<double>()) < 1e-6);
  CHECK(std::abs(again.log[0]["val_loss"].get<double>() - r.log[0]["val_loss"].get<double>()) < 1e-6);

  expect_code(ErrorCode::data_error, [&] { train_segmentation(c, {}, dir); });
  std::filesystem::remove_all(dir);
}

TEST_CASE("early stopping with patience 1 on a frozen model") {
  Fixture& f = fixture();
  ExperimentConfig c = tiny_config();
  c.optimizer.lr = 1e-30;  // parameters effectively constant, so is the loss
  c.early_stopping_patience = 1;
  c.max_epochs = 10;
  c.loss.ca_weight_end = c.loss.ca_weight_start;
  c.seg_samples_per_epoch = 2;
  const auto dir = testutil::scratch("patience");
  const TrainResult r = train_segmentation(c, f.records, dir);
  CHECK(r.early_stopped);
  CHECK(r.epochs_run - 1 - r.best_epoch <= 2);
  CHECK(r.epochs_run < 10);
  std::filesystem::remove_all(dir);
}

TEST_CASE("classifier training data: weights, flips, degenerate classes") {
  Fixture& f = fixture();
  std::vector<StagingLabels> labels;
  for (const auto& r : f.records) labels.push_back(r.staging);
  const auto w = task_class_weights(labels);
  const auto counts = staging_counts(labels);
  for (int t = 0; t < 3; ++t) {
    double inv = 0;
    for (double n : counts[t]) inv += 1 / n;
    for (std::size_t c = 0; c < counts[t].size(); ++c) CHECK(w[t][c] == doctest::Approx((1 / counts[t][c]) / inv).epsilon(1e-12));
  }
  const auto plain = build_gh_dataset({f.records[0], f.records[1]}, 32, false);
  const auto flipped = build_gh_dataset({f.records[0], f.records[1]}, 32, true);
  CHECK(flipped.size() == 2 * plain.size());
  CHECK(flipped[0].patch == plain[0].patch);
  CHECK(flipped[1].patch == mirror_x(plain[0].patch, 32));
  CHECK(mirror_x(flipped[1].patch, 32) == plain[0].patch);
  CHECK(flipped[1].staging == plain[0].staging);

  std::vector<ManifestRecord> same = f.records;
  for (auto& r : same) r.staging.hsa = 0;
  expect_code(ErrorCode::degenerate_class, [&] { train_classifier(tiny_config(), same, f.dir / "degenerate"); });

  REQUIRE(f.cls.epochs_run == 2);
  CHECK(f.cls.log[0].contains("val_accuracy"));
  const auto ck = nn::load_checkpoint(f.cls.best_checkpoint);
  CHECK(ck.config["kind"] == "classification");
}

TEST_CASE("cascade inference: report, timings, determinism, round trip") {
  Fixture& f = fixture();
  const ManifestRecord& rec = f.records[0];
  const Volume ct = read_volume(rec.volume_path);
  Cascade a(f.seg.best_checkpoint, f.cls.best_checkpoint);
  CascadeOutput out;
  try {
    out = a.run(ct, rec.id);
  } catch (const Error& e) {
    FAIL("cascade failed on a training phantom: " << std::string(e.what()));
  }
  const auto& t = out.staging.timings_s;
  const double stages = t.segmentation + t.reconstruction + t.classification;
  CHECK(t.overall >= std::max({t.segmentation, t.reconstruction, t.classification}));
  CHECK(std::abs(stages - t.overall) <= 0.05 * t.overall);
  for (const auto* p : {&out.staging.os, &out.staging.js, &out.staging.hsa}) {
    double sum = 0;
    for (double v : p->probs) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK(out.staging.os.probs.size() == 3);
  CHECK(out.staging.hsa.probs.size() == 2);

  const CascadeOutput again = a.run(ct, rec.id);
  CHECK(again.labels.data() == out.labels.data());
  CHECK(again.staging.os.label == out.staging.os.label);
  CHECK(again.staging.js.probs == out.staging.js.probs);

  // save -> load -> infer equals infer before saving
  const auto dir = testutil::scratch("roundtrip");
  nn::save_checkpoint(dir / "seg.ckpt", nn::capture(a.segmenter().graph, nn::load_checkpoint(f.seg.best_checkpoint).config, nullptr, 0));
  nn::save_checkpoint(dir / "cls.ckpt", nn::capture(a.classifier().graph, nn::load_checkpoint(f.cls.best_checkpoint).config, nullptr, 0));
  Cascade b(dir / "seg.ckpt", dir / "cls.ckpt");
  const CascadeOutput third = b.run(ct, rec.id);
  CHECK(third.labels.data() == out.labels.data());
  CHECK(third.staging.hsa.probs == out.staging.hsa.probs);

  const auto report = infer_file(rec.volume_path, f.seg.best_checkpoint, f.cls.best_checkpoint, dir / "pred");
  CHECK(report["case_id"] == rec.id);
  for (const char* key : {"os", "js", "hsa", "probs", "gh_box", "timings_s", "versions"}) CHECK(report.contains(key));
  CHECK(std::filesystem::exists(dir / "pred" / (rec.id + "_labels.nii")));
  CHECK(read_stl((dir / "pred" / (rec.id + "_humerus.stl")).string()).watertight());
  atomic_write(artifact_dir() / "unit_case_report.json", report.dump(2));

  expect_code(ErrorCode::format_error, [&] { Cascade(f.cls.best_checkpoint, f.cls.best_checkpoint); });
  std::filesystem::remove_all(dir);
}

TEST_CASE("cascade reports a missing humerus") {
  Fixture& f = fixture();
  auto ck = nn::load_checkpoint(f.seg.best_checkpoint);
  // head that votes background everywhere
  auto& w = ck.tensors.at("ra.head.weight");
  std::fill(w.begin(), w.end(), 0.0f);
  ck.tensors.at("ra.head.bias") = {10.0f, 0.0f, 0.0f};
  const auto dir = testutil::scratch("nohumerus");
  nn::save_checkpoint(dir / "seg.ckpt", ck);
  Cascade c(dir / "seg.ckpt", f.cls.best_checkpoint);
  try {
    c.run(read_volume(f.records[0].volume_path), "x");
    FAIL("expected PipelineError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::pipeline_error);
    CHECK(std::string(e.what()).find("NoHumerus") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation of prediction sets") {
  Fixture& f = fixture();
  const auto dir = testutil::scratch("evaluate");
  const std::vector<ManifestRecord> truth(f.records.begin(), f.records.begin() + 3);
  write_manifest(dir / "truth.jsonl", truth);
  // perfect set: ground truth labels and reports carrying the true grades
  auto write_set = [&](const std::filesystem::path& d, bool perturb) {
    std::filesystem::create_directories(d);
    for (const auto& r : truth) {
      LabelMap l = read_labelmap(r.label_path);
      if (perturb) {
        for (std::size_t i = 0; i < l.size(); i += 7) {
          if (l.data()[i] == label::humerus) l.data()[i] = label::background;
        }
      }
      write_labelmap(d / (r.id + "_labels.nii"), l);
      nlohmann::json rep = {{"case_id", r.id}, {"os", r.staging.os}, {"js", r.staging.js}, {"hsa", perturb ? 1 - r.staging.hsa : r.staging.hsa},
                           {"timings_s", {{"segmentation", 1.0}, {"overall", 2.0}}}};
      atomic_write(d / (r.id + "_report.json"), rep.dump());
    }
  };
  write_set(dir / "perfect", false);
  write_set(dir / "noisy", true);
  const auto ev = evaluate({dir / "perfect", dir / "noisy"}, dir / "truth.jsonl");
  const auto& p = ev["sets"][0];
  for (const auto& rec : p["records"]) {
    CHECK(rec["dice"].get<double>() == 1.0);
    CHECK(rec["rmse_mm"].get<double>() == 0.0);
    CHECK(rec["hausdorff_mm"].get<double>() == 0.0);
  }
  CHECK(p["classification"]["os"]["accuracy"].get<double>() == 1.0);
  CHECK(ev["sets"][1]["classification"]["hsa"]["accuracy"].get<double>() == 0.0);
  CHECK(ev["sets"][1]["summary"]["humerus"]["mean_dice"].get<double>() < 1.0);
  bool found = false;
  for (const auto& t : ev["comparisons"]["wilcoxon"]) {
    if (t["class"] == "humerus" && t["metric"] == "dice") {
      found = true;
      // 3 pairs, all in one direction: exact p = 2 / 8
      CHECK(t["p"].get<double>() == doctest::Approx(0.25));
      CHECK(t["p_bonferroni"].get<double>() == doctest::Approx(0.25));
    }
  }
  CHECK(found);

  std::filesystem::remove(dir / "noisy" / (truth[1].id + "_labels.nii"));
  std::filesystem::remove(dir / "noisy" / (truth[1].id + "_report.json"));
  expect_code(ErrorCode::pairing_error, [&] { evaluate({dir / "noisy"}, dir / "truth.jsonl"); });
  atomic_write(dir / "perfect" / "stray_report.json", "{}");
  expect_code(ErrorCode::pairing_error, [&] { evaluate({dir / "perfect"}, dir / "truth.jsonl"); });

  const auto summary = summarize_reports(dir / "noisy");
  CHECK(summary["count"] == 2);
  std::filesystem::create_directories(dir / "empty");
  expect_code(ErrorCode::data_error, [&] { summarize_reports(dir / "empty"); });
  expect_code(ErrorCode::io_error, [&] { summarize_reports(dir / "missing"); });
  std::filesystem::remove_all(dir);
}
