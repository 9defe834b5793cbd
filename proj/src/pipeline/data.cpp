#include "pipeline/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "volcore/nifti_io.hpp"
#include "volcore/patch.hpp"
#include "volcore/preprocess.hpp"

namespace ghc {

DataSplit split_manifest(const std::vector<ManifestRecord>& records, double val_fraction, std::uint64_t seed) {
  if (records.empty()) fail(ErrorCode::data_error, "manifest lists no cases");
  DataSplit s;
  const bool explicit_split =
      std::any_of(records.begin(), records.end(), [](const ManifestRecord& r) { return !r.split.empty(); });
  if (explicit_split) {
    for (const auto& r : records) {
      if (r.split == "val") {
        s.val.push_back(r);
      } else if (r.split != "test") {
        s.train.push_back(r);
      }
    }
  } else {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = 0;
    if (val_fraction > 0 && records.size() >= 2) {
      n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(val_fraction * records.size())));
      n_val = std::min(n_val, records.size() - 1);
    }
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? s.val : s.train).push_back(records[order[i]]);
  }
  if (s.train.empty()) fail(ErrorCode::data_error, "no training cases");
  if (s.val.empty()) s.val = s.train;
  return s;
}

CaseData load_case(const ManifestRecord& record) {
  CaseData c;
  c.id = record.id;
  c.image = normalize_hu(read_volume(record.volume_path));
  c.labels = read_labelmap(record.label_path);
  validate_labels(c.labels);
  if (!(c.image.geometry().shape == c.labels.geometry().shape)) {
    fail(ErrorCode::shape_error, "case " + record.id + ": volume and label map shapes differ");
  }
  c.staging = record.staging;
  return c;
}

std::vector<float> gh_patch(const Volume& image, const LabelMap& labels, int patch, GhBox* box) {
  const HeadFit fit = fit_humeral_head(labels);
  const GhBox b = gh_bounding_box(fit, labels, patch);
  if (box) *box = b;
  return extract_patch(image, b.lo, Index3{patch, patch, patch});
}

std::vector<float> mirror_x(const std::vector<float>& patch, int n) {
  std::vector<float> out(patch.size());
  const std::size_t rows = patch.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = patch.data() + r * n;
    float* dst = out.data() + r * n;
    for (int i = 0; i < n; ++i) dst[i] = src[n - 1 - i];
  }
  return out;
}

std::vector<GhSample> build_gh_dataset(const std::vector<ManifestRecord>& records, int patch, bool flip) {
  std::vector<GhSample> out;
  for (const auto& r : records) {
    const CaseData c = load_case(r);
    GhSample s{r.id, gh_patch(c.image, c.labels, patch), r.staging, false};
    if (flip) {
      GhSample m{r.id, mirror_x(s.patch, patch), r.staging, true};
      out.push_back(std::move(s));
      out.push_back(std::move(m));
    } else {
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::array<std::vector<double>, 3> staging_counts(const std::vector<StagingLabels>& labels) {
  std::array<std::vector<double>, 3> counts;
  for (int t = 0; t < 3; ++t) counts[t].assign(kTaskClasses[t], 0.0);
  for (const auto& l : labels) {
    l.validate();
    counts[0][l.os] += 1;
    counts[1][l.js] += 1;
    counts[2][l.hsa] += 1;
  }
  return counts;
}

}  // namespace ghc
