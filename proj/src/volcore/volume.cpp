#include "volcore/volume.hpp"

#include <cmath>
#include <string>

namespace ghc {

Laterality opposite(Laterality side) noexcept {
  switch (side) {
    case Laterality::left: return Laterality::right;
    case Laterality::right: return Laterality::left;
    default: return Laterality::unknown;
  }
}

const char* to_string(Laterality side) noexcept {
  switch (side) {
    case Laterality::left: return "left";
    case Laterality::right: return "right";
    default: return "unknown";
  }
}

Laterality laterality_from_string(const std::string& text) {
  if (text == "left" || text == "L") return Laterality::left;
  if (text == "right" || text == "R") return Laterality::right;
  if (text == "unknown" || text.empty()) return Laterality::unknown;
  fail(ErrorCode::format_error, "unrecognised laterality '" + text + "'");
}

bool GridGeometry::same_grid(const GridGeometry& other) const {
  return shape == other.shape && (spacing - other.spacing).cwiseAbs().maxCoeff() < 1e-9 &&
         (origin - other.origin).cwiseAbs().maxCoeff() < 1e-9;
}

void GridGeometry::validate() const {
  if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1) fail(ErrorCode::shape_error, "grid shape components must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) fail(ErrorCode::shape_error, "grid spacing must be positive");
  }
  if (sagittal_axis && (*sagittal_axis < 0 || *sagittal_axis > 2)) fail(ErrorCode::shape_error, "sagittal axis out of range");
}

void StagingLabels::validate() const {
  if (os < 0 || os >= kTaskClasses[0] || js < 0 || js >= kTaskClasses[1] || hsa < 0 || hsa >= kTaskClasses[2]) {
    fail(ErrorCode::label_error, "staging label outside its task's class range");
  }
}

void validate_labels(const LabelMap& labels) {
  for (auto v : labels.data()) {
    if (v >= label::count) fail(ErrorCode::label_error, "label id " + std::to_string(int(v)) + " outside {0,1,2}");
  }
}

}  // namespace ghc
