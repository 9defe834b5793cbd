#pragma once

#include <stdexcept>
#include <string>

namespace ghc {

/// Failure categories shared by every module. The numeric values are part of
/// the C API (see ghcascade.h) and must not be reordered.
enum class ErrorCode : int {
  ok = 0,
  invalid_intensity = 1,
  empty_foreground = 2,
  coverage_gap = 3,
  orientation_unknown = 4,
  format_error = 5,
  empty_class = 6,
  shape_error = 7,
  degenerate_class = 8,
  empty_surface = 9,
  empty_mesh = 10,
  invalid_distance = 11,
  insufficient_surface = 12,
  missing_scapula = 13,
  undefined_metric = 14,
  label_error = 15,
  pairing_error = 16,
  degenerate_pairs = 17,
  grid_overflow = 18,
  range_error = 19,
  data_error = 20,
  pipeline_error = 21,
  config_error = 22,
  io_error = 23,
  invalid_argument = 24,
};

const char* error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace ghc
