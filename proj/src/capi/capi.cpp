#include "ghcascade/ghcascade.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "core/fsutil.hpp"
#include "core/version.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/infer.hpp"
#include "pipeline/train.hpp"
#include "volcore/nifti_io.hpp"

struct ghc_cascade {
  std::unique_ptr<ghc::Cascade> impl;
};

namespace {

thread_local std::string g_last_error;

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename F>
int guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return GHC_OK;
  } catch (const ghc::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return GHC_IO_ERROR;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return GHC_FORMAT_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GHC_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GHC_INTERNAL_ERROR;
  }
}

void require_arg(const void* p, const char* name) {
  if (!p) ghc::fail(ghc::ErrorCode::invalid_argument, std::string(name) + " must not be NULL");
}

void set_out(char** out, const std::string& value) {
  if (out) *out = dup(value);
}

std::vector<std::pair<std::string, std::string>> parse_overrides(const char* overrides_json) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!overrides_json || !*overrides_json) return out;
  const auto j = nlohmann::json::parse(overrides_json, nullptr, false);
  if (j.is_discarded() || !j.is_object()) ghc::fail(ghc::ErrorCode::config_error, "overrides must be a JSON object");
  for (const auto& [k, v] : j.items()) out.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
  return out;
}

ghc::ExperimentConfig resolve(const char* config_path, const char* overrides_json) {
  return ghc::load_config(config_path ? std::filesystem::path(config_path) : std::filesystem::path{},
                          parse_overrides(overrides_json));
}

std::filesystem::path out_or_cache(const char* out_dir, const char* fallback) {
  return out_dir && *out_dir ? std::filesystem::path(out_dir) : ghc::cache_dir() / fallback;
}

nlohmann::json result_json(const ghc::TrainResult& r) {
  return {{"best_checkpoint", r.best_checkpoint.string()},
          {"last_checkpoint", r.last_checkpoint.string()},
          {"log", r.log_path.string()},
          {"best_epoch", r.best_epoch},
          {"best_val_loss", r.best_val_loss},
          {"epochs_run", r.epochs_run},
          {"early_stopped", r.early_stopped}};
}

template <typename Train>
int train(Train&& fn, const char* config_path, const char* overrides_json, const char* manifest_path,
          const char* out_dir, const char* fallback, ghc_epoch_callback cb, void* user, char** result_json_out) {
  return guarded([&] {
    const ghc::ExperimentConfig cfg = resolve(config_path, overrides_json);
    const std::filesystem::path manifest = manifest_path ? std::filesystem::path(manifest_path) : cfg.manifest;
    if (manifest.empty()) ghc::fail(ghc::ErrorCode::config_error, "no manifest given (config key 'manifest')");
    ghc::EpochCallback on_epoch;
    if (cb) on_epoch = [&](const nlohmann::json& rec) { cb(rec.dump().c_str(), user); };
    const auto r = fn(cfg, ghc::read_manifest(manifest), out_or_cache(out_dir, fallback), on_epoch);
    set_out(result_json_out, result_json(r).dump(2));
  });
}

}  // namespace

extern "C" {

const char* ghc_version(void) { return ghc::kVersion; }

const char* ghc_status_name(int status) {
  if (status == GHC_INTERNAL_ERROR) return "InternalError";
  if (status < 0 || status > GHC_INVALID_ARGUMENT) return "Unknown";
  return ghc::error_name(static_cast<ghc::ErrorCode>(status));
}

const char* ghc_last_error(void) { return g_last_error.c_str(); }

void ghc_free_string(char* s) { std::free(s); }

int ghc_cache_dir(char** path_out) {
  return guarded([&] {
    require_arg(path_out, "path_out");
    set_out(path_out, ghc::cache_dir().string());
  });
}

int ghc_config_resolve(const char* config_path, const char* overrides_json, char** config_json_out) {
  return guarded([&] { set_out(config_json_out, nlohmann::json(resolve(config_path, overrides_json)).dump(2)); });
}

int ghc_phantom_generate(const char* config_path, const char* overrides_json, const char* out_dir,
                         char** manifest_path_out) {
  return guarded([&] {
    const ghc::ExperimentConfig cfg = resolve(config_path, overrides_json);
    const auto manifest = ghc::generate_cohort(cfg.phantom.count, cfg.phantom.ranges, cfg.phantom.base, cfg.seed,
                                               out_or_cache(out_dir, "phantoms"));
    set_out(manifest_path_out, manifest.string());
  });
}

int ghc_train_segmentation(const char* config_path, const char* overrides_json, const char* manifest_path,
                           const char* out_dir, ghc_epoch_callback cb, void* user, char** result_json_out) {
  return train(ghc::train_segmentation, config_path, overrides_json, manifest_path, out_dir, "runs/seg", cb, user,
               result_json_out);
}

int ghc_train_classifier(const char* config_path, const char* overrides_json, const char* manifest_path,
                         const char* out_dir, ghc_epoch_callback cb, void* user, char** result_json_out) {
  return train(ghc::train_classifier, config_path, overrides_json, manifest_path, out_dir, "runs/cls", cb, user,
               result_json_out);
}

int ghc_cascade_open(const char* seg_checkpoint, const char* cls_checkpoint, ghc_cascade** out) {
  return guarded([&] {
    require_arg(seg_checkpoint, "seg_checkpoint");
    require_arg(cls_checkpoint, "cls_checkpoint");
    require_arg(out, "out");
    auto c = std::make_unique<ghc_cascade>();
    c->impl = std::make_unique<ghc::Cascade>(seg_checkpoint, cls_checkpoint);
    *out = c.release();
  });
}

int ghc_cascade_run(ghc_cascade* cascade, const char* ct_path, const char* case_id, const char* out_dir,
                    char** report_json_out) {
  return guarded([&] {
    require_arg(cascade, "cascade");
    require_arg(ct_path, "ct_path");
    std::string id = case_id ? case_id : "";
    if (id.empty()) {
      id = std::filesystem::path(ct_path).stem().string();
      if (id.size() > 3 && id.ends_with("_ct")) id.resize(id.size() - 3);
    }
    const auto out = cascade->impl->run(ghc::read_volume(ct_path), id);
    ghc::write_outputs(out, out_or_cache(out_dir, "predictions"));
    set_out(report_json_out, ghc::report_json(out).dump(2));
  });
}

void ghc_cascade_close(ghc_cascade* cascade) { delete cascade; }

int ghc_evaluate(const char* const* pred_dirs, size_t count, const char* truth_manifest, char** metrics_json_out) {
  return guarded([&] {
    require_arg(pred_dirs, "pred_dirs");
    require_arg(truth_manifest, "truth_manifest");
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < count; ++i) {
      require_arg(pred_dirs[i], "pred_dirs[i]");
      dirs.emplace_back(pred_dirs[i]);
    }
    set_out(metrics_json_out, ghc::evaluate(dirs, truth_manifest).dump(2));
  });
}

int ghc_report(const char* reports_dir, char** summary_json_out) {
  return guarded([&] {
    require_arg(reports_dir, "reports_dir");
    set_out(summary_json_out, ghc::summarize_reports(reports_dir).dump(2));
  });
}

}  // extern "C"
