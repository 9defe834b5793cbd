#include "core/error.hpp"

namespace ghc {

const char* error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ok: return "Ok";
    case ErrorCode::invalid_intensity: return "InvalidIntensity";
    case ErrorCode::empty_foreground: return "EmptyForeground";
    case ErrorCode::coverage_gap: return "CoverageGap";
    case ErrorCode::orientation_unknown: return "OrientationUnknown";
    case ErrorCode::format_error: return "FormatError";
    case ErrorCode::empty_class: return "EmptyClass";
    case ErrorCode::shape_error: return "ShapeError";
    case ErrorCode::degenerate_class: return "DegenerateClass";
    case ErrorCode::empty_surface: return "EmptySurface";
    case ErrorCode::empty_mesh: return "EmptyMesh";
    case ErrorCode::invalid_distance: return "InvalidDistance";
    case ErrorCode::insufficient_surface: return "InsufficientSurface";
    case ErrorCode::missing_scapula: return "MissingScapula";
    case ErrorCode::undefined_metric: return "UndefinedMetric";
    case ErrorCode::label_error: return "LabelError";
    case ErrorCode::pairing_error: return "PairingError";
    case ErrorCode::degenerate_pairs: return "DegeneratePairs";
    case ErrorCode::grid_overflow: return "GridOverflow";
    case ErrorCode::range_error: return "RangeError";
    case ErrorCode::data_error: return "DataError";
    case ErrorCode::pipeline_error: return "PipelineError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace ghc
