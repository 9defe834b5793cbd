/* C interface to the shoulder CT cascade: phantom generation, training,
 * inference, evaluation. Every call returns a ghc_status; on failure the
 * message is available from ghc_last_error() on the same thread. Strings
 * returned through char** are owned by the caller and released with
 * ghc_free_string. */
#ifndef GHCASCADE_H
#define GHCASCADE_H

#include <stddef.h>

#if defined(_WIN32)
#define GHC_API __declspec(dllexport)
#else
#define GHC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ghc_status {
  GHC_OK = 0,
  GHC_INVALID_INTENSITY = 1,
  GHC_EMPTY_FOREGROUND = 2,
  GHC_COVERAGE_GAP = 3,
  GHC_ORIENTATION_UNKNOWN = 4,
  GHC_FORMAT_ERROR = 5,
  GHC_EMPTY_CLASS = 6,
  GHC_SHAPE_ERROR = 7,
  GHC_DEGENERATE_CLASS = 8,
  GHC_EMPTY_SURFACE = 9,
  GHC_EMPTY_MESH = 10,
  GHC_INVALID_DISTANCE = 11,
  GHC_INSUFFICIENT_SURFACE = 12,
  GHC_MISSING_SCAPULA = 13,
  GHC_UNDEFINED_METRIC = 14,
  GHC_LABEL_ERROR = 15,
  GHC_PAIRING_ERROR = 16,
  GHC_DEGENERATE_PAIRS = 17,
  GHC_GRID_OVERFLOW = 18,
  GHC_RANGE_ERROR = 19,
  GHC_DATA_ERROR = 20,
  GHC_PIPELINE_ERROR = 21,
  GHC_CONFIG_ERROR = 22,
  GHC_IO_ERROR = 23,
  GHC_INVALID_ARGUMENT = 24,
  GHC_INTERNAL_ERROR = 99
} ghc_status;

typedef struct ghc_cascade ghc_cascade;

/* Called after every training epoch with the epoch's log record (JSON). */
typedef void (*ghc_epoch_callback)(const char* record_json, void* user);

GHC_API const char* ghc_version(void);
GHC_API const char* ghc_status_name(int status);
GHC_API const char* ghc_last_error(void);
GHC_API void ghc_free_string(char* s);

/* Cache directory: $GHCASCADE_CACHE_DIR, else a folder under the temp dir. */
GHC_API int ghc_cache_dir(char** path_out);

/* config_path may be NULL (defaults). overrides_json is NULL or a JSON
 * object of dotted keys to values, e.g. {"seed": "3", "optimizer.lr": "1e-3"}.
 * The resolved configuration is returned as JSON. */
GHC_API int ghc_config_resolve(const char* config_path, const char* overrides_json, char** config_json_out);

/* Writes a phantom cohort (config section "phantom", seed "seed") under
 * out_dir; returns the manifest path. */
GHC_API int ghc_phantom_generate(const char* config_path, const char* overrides_json, const char* out_dir,
                                 char** manifest_path_out);

/* Train on the config's manifest (or manifest_path when non-NULL); the
 * result summary (checkpoint paths, best epoch, log) is returned as JSON. */
GHC_API int ghc_train_segmentation(const char* config_path, const char* overrides_json, const char* manifest_path,
                                   const char* out_dir, ghc_epoch_callback cb, void* user, char** result_json_out);
GHC_API int ghc_train_classifier(const char* config_path, const char* overrides_json, const char* manifest_path,
                                 const char* out_dir, ghc_epoch_callback cb, void* user, char** result_json_out);

GHC_API int ghc_cascade_open(const char* seg_checkpoint, const char* cls_checkpoint, ghc_cascade** out);
/* Runs the cascade on one CT file and writes labels, meshes and the report
 * under out_dir. case_id may be NULL (derived from the file name). */
GHC_API int ghc_cascade_run(ghc_cascade* cascade, const char* ct_path, const char* case_id, const char* out_dir,
                            char** report_json_out);
GHC_API void ghc_cascade_close(ghc_cascade* cascade);

GHC_API int ghc_evaluate(const char* const* pred_dirs, size_t count, const char* truth_manifest,
                         char** metrics_json_out);
GHC_API int ghc_report(const char* reports_dir, char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif
