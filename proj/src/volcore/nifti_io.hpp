#pragma once

#include <filesystem>

#include "volcore/volume.hpp"

namespace ghc {

// Single-file NIfTI-1 (.nii, magic "n+1") with a JSON sidecar next to it
// (same stem, .json) carrying laterality and full-precision spacing/origin.
//
// Orientation: the sform maps array axes to world axes; the array axis whose
// column dominates world x is the sagittal axis. A file with neither sform nor
// qform has unknown orientation.

void write_volume(const std::filesystem::path& path, const Volume& vol);
Volume read_volume(const std::filesystem::path& path);

void write_labelmap(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labelmap(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& nifti_path);

}  // namespace ghc
