#include "pipeline/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "core/fsutil.hpp"
#include "evalstats/metrics.hpp"
#include "phantom/phantom.hpp"
#include "recon/distance.hpp"
#include "recon/marching_cubes.hpp"
#include "volcore/nifti_io.hpp"

namespace ghc {

namespace {

const char* kClassNames[3] = {"background", "humerus", "scapula"};
const char* kTaskNames[3] = {"os", "js", "hsa"};
const char* kMetrics[6] = {"dice", "jaccard", "precision", "recall", "rmse_mm", "hausdorff_mm"};

std::set<std::string> prediction_ids(const std::filesystem::path& dir) {
  std::set<std::string> ids;
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::io_error, dir.string() + " is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    for (const std::string suffix : {"_labels.nii", "_report.json"}) {
      if (name.size() > suffix.size() && name.ends_with(suffix)) ids.insert(name.substr(0, name.size() - suffix.size()));
    }
  }
  return ids;
}

nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json score_set(const std::filesystem::path& dir, const std::vector<ManifestRecord>& truth) {
  const auto ids = prediction_ids(dir);
  std::set<std::string> truth_ids;
  for (const auto& r : truth) truth_ids.insert(r.id);
  for (const auto& id : ids) {
    if (!truth_ids.count(id)) fail(ErrorCode::pairing_error, "prediction " + id + " in " + dir.string() + " has no truth case");
  }
  nlohmann::json records = nlohmann::json::array();
  std::array<std::vector<int>, 3> y_true, y_pred;
  bool any_staging = false;
  for (const auto& r : truth) {
    if (!ids.count(r.id)) fail(ErrorCode::pairing_error, "truth case " + r.id + " has no prediction in " + dir.string());
    const auto label_path = dir / (r.id + "_labels.nii");
    if (std::filesystem::exists(label_path)) {
      const LabelMap pred = read_labelmap(label_path);
      const LabelMap gt = read_labelmap(r.label_path);
      for (std::uint8_t cls : {label::humerus, label::scapula}) {
        nlohmann::json rec = {{"case_id", r.id}, {"class", kClassNames[cls]}};
        try {
          const OverlapMetrics m = overlap_metrics(gt, pred, cls);
          rec["dice"] = m.dice;
          rec["jaccard"] = m.jaccard;
          rec["precision"] = m.precision;
          rec["recall"] = m.recall;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::undefined_metric) throw;
          for (int k = 0; k < 4; ++k) rec[kMetrics[k]] = nullptr;
        }
        double rmse = NAN, hd = NAN;
        try {
          const TriMesh a = marching_cubes(pred, cls), b = marching_cubes(gt, cls);
          rmse = surface_rmse(a, b);
          hd = hausdorff(a, b);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::empty_surface && e.code() != ErrorCode::empty_mesh) throw;
        }
        rec["rmse_mm"] = nullable(rmse);
        rec["hausdorff_mm"] = nullable(hd);
        records.push_back(rec);
      }
    }
    const auto report_path = dir / (r.id + "_report.json");
    if (std::filesystem::exists(report_path)) {
      const auto rep = nlohmann::json::parse(read_file(report_path), nullptr, false);
      if (rep.is_discarded()) fail(ErrorCode::format_error, report_path.string() + " is not valid JSON");
      any_staging = true;
      const int truth_labels[3] = {r.staging.os, r.staging.js, r.staging.hsa};
      for (int t = 0; t < 3; ++t) {
        y_true[t].push_back(truth_labels[t]);
        y_pred[t].push_back(rep.at(kTaskNames[t]).get<int>());
      }
    }
  }
  nlohmann::json set = {{"dir", dir.string()}, {"records", records}};
  if (any_staging) {
    if (y_true[0].size() != truth.size()) fail(ErrorCode::pairing_error, "some cases in " + dir.string() + " lack a report");
    nlohmann::json cls;
    for (int t = 0; t < 3; ++t) cls[kTaskNames[t]] = classification_report(y_true[t], y_pred[t], kTaskClasses[t]);
    set["classification"] = cls;
  }
  // per-class means over defined values
  nlohmann::json summary;
  for (const char* cname : {"humerus", "scapula"}) {
    for (const char* metric : kMetrics) {
      double sum = 0;
      int n = 0;
      for (const auto& rec : records) {
        if (rec["class"] == cname && !rec[metric].is_null()) {
          sum += rec[metric].get<double>();
          ++n;
        }
      }
      summary[cname][std::string("mean_") + metric] = n ? nlohmann::json(sum / n) : nlohmann::json(nullptr);
    }
  }
  set["summary"] = summary;
  return set;
}

// metric values per case for one set and class; NaN for undefined
std::vector<double> column(const nlohmann::json& set, const std::string& cls, const std::string& metric) {
  std::vector<double> v;
  for (const auto& rec : set["records"]) {
    if (rec["class"] == cls) v.push_back(rec[metric].is_null() ? NAN : rec[metric].get<double>());
  }
  return v;
}

nlohmann::json compare_sets(const nlohmann::json& sets) {
  nlohmann::json out = {{"wilcoxon", nlohmann::json::array()}, {"friedman", nlohmann::json::array()}};
  const std::size_t k = sets.size();
  for (const char* cls : {"humerus", "scapula"}) {
    for (const char* metric : kMetrics) {
      std::vector<std::vector<double>> cols;
      for (const auto& s : sets) cols.push_back(column(s, cls, metric));
      if (cols[0].empty()) continue;
      // only cases where every set has a defined value
      std::vector<std::vector<double>> groups(k);
      for (std::size_t c = 0; c < cols[0].size(); ++c) {
        bool ok = true;
        for (const auto& col : cols) ok = ok && std::isfinite(col[c]);
        if (!ok) continue;
        for (std::size_t g = 0; g < k; ++g) groups[g].push_back(cols[g][c]);
      }
      std::vector<nlohmann::json> tests;
      std::vector<double> ps;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          nlohmann::json t = {{"class", cls}, {"metric", metric}, {"a", a}, {"b", b}, {"n", groups[a].size()}};
          try {
            const TestResult r = wilcoxon_signed_rank(groups[a], groups[b]);
            t["statistic"] = r.statistic;
            t["p"] = r.p;
            ps.push_back(r.p);
          } catch (const Error& e) {
            t["statistic"] = nullptr;
            t["p"] = nullptr;
            t["error"] = error_name(e.code());
          }
          tests.push_back(t);
        }
      }
      const std::size_t pairs = k * (k - 1) / 2;
      std::size_t next = 0;
      for (auto& t : tests) {
        if (!t["p"].is_null()) t["p_bonferroni"] = bonferroni({ps[next++]}, static_cast<int>(pairs))[0];
        out["wilcoxon"].push_back(t);
      }
      if (k >= 3 && groups[0].size() >= 2) {
        const TestResult f = friedman_test(groups);
        out["friedman"].push_back({{"class", cls}, {"metric", metric}, {"statistic", f.statistic}, {"p", f.p},
                                   {"n", groups[0].size()}});
      }
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

nlohmann::json evaluate(const std::vector<std::filesystem::path>& pred_dirs, const std::filesystem::path& truth_manifest) {
  if (pred_dirs.empty()) fail(ErrorCode::invalid_argument, "no prediction directory given");
  const auto truth = read_manifest(truth_manifest);
  if (truth.empty()) fail(ErrorCode::data_error, "truth manifest lists no cases");
  nlohmann::json out = {{"manifest", truth_manifest.string()}, {"cases", truth.size()}};
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& d : pred_dirs) sets.push_back(score_set(d, truth));
  out["sets"] = sets;
  if (sets.size() >= 2) out["comparisons"] = compare_sets(sets);
  return out;
}

nlohmann::json summarize_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::io_error, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().filename().string().ends_with("_report.json")) files.push_back(e.path());
  }
  if (files.empty()) fail(ErrorCode::data_error, "no *_report.json files in " + dir.string());
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<double>> timings;
  std::array<std::vector<int>, 3> hist;
  for (int t = 0; t < 3; ++t) hist[t].assign(kTaskClasses[t], 0);
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& f : files) {
    const auto rep = nlohmann::json::parse(read_file(f), nullptr, false);
    if (rep.is_discarded()) fail(ErrorCode::format_error, f.string() + " is not valid JSON");
    try {
      for (const auto& [stage, v] : rep.at("timings_s").items()) timings[stage].push_back(v.get<double>());
      for (int t = 0; t < 3; ++t) {
        const int c = rep.at(kTaskNames[t]).get<int>();
        if (c < 0 || c >= kTaskClasses[t]) fail(ErrorCode::label_error, f.string() + ": class out of range");
        hist[t][c]++;
      }
      cases.push_back({{"case_id", rep.at("case_id")}, {"os", rep.at("os")}, {"js", rep.at("js")}, {"hsa", rep.at("hsa")}});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format_error, f.string() + ": " + e.what());
    }
  }
  nlohmann::json t;
  for (const auto& [stage, v] : timings) {
    t[stage] = {{"median", median(v)},
                {"min", *std::min_element(v.begin(), v.end())},
                {"max", *std::max_element(v.begin(), v.end())}};
  }
  return {{"cases", cases},
          {"count", files.size()},
          {"timings_s", t},
          {"predicted_counts", {{"os", hist[0]}, {"js", hist[1]}, {"hsa", hist[2]}}}};
}

}  // namespace ghc
