#pragma once

#include <cstdint>
#include <vector>

#include "ghloc/ghloc.hpp"
#include "phantom/phantom.hpp"
#include "volcore/volume.hpp"

namespace ghc {

struct DataSplit {
  std::vector<ManifestRecord> train, val;
};

/// Uses the records' split fields when any record has one ("val" goes to
/// validation, "test" is skipped); otherwise a seeded shuffle puts
/// round(val_fraction * n) cases (at least one when n >= 2) into validation.
/// val_fraction = 0 validates on the training cases. Throws DataError on an
/// empty manifest or an empty training set.
DataSplit split_manifest(const std::vector<ManifestRecord>& records, double val_fraction, std::uint64_t seed);

struct CaseData {
  std::string id;
  Volume image;     // normalised to [0, 1]
  LabelMap labels;
  StagingLabels staging;
};

CaseData load_case(const ManifestRecord& record);

/// Cubic GH patch around the joint, x fastest; `box` receives the box used.
std::vector<float> gh_patch(const Volume& image, const LabelMap& labels, int patch, GhBox* box = nullptr);

/// Mirrors a cubic x-fastest patch along x.
std::vector<float> mirror_x(const std::vector<float>& patch, int n);

struct GhSample {
  std::string id;
  std::vector<float> patch;
  StagingLabels staging;
  bool mirrored = false;
};

/// One GH patch per case from ground-truth labels, plus a mirrored copy of
/// each when `flip` is set.
std::vector<GhSample> build_gh_dataset(const std::vector<ManifestRecord>& records, int patch, bool flip);

/// Per-task class counts over records.
std::array<std::vector<double>, 3> staging_counts(const std::vector<StagingLabels>& labels);

}  // namespace ghc
