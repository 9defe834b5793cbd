#include "pipeline/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <span>

#include "core/fsutil.hpp"
#include "losses/losses.hpp"
#include "nets/optim.hpp"
#include "pipeline/prefetch.hpp"
#include "volcore/patch.hpp"
#include "volcore/preprocess.hpp"

namespace ghc {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(c)};
  std::array<std::uint32_t, 2> w;
  seq.generate(w.begin(), w.end());
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

void write_log(const std::filesystem::path& path, const std::vector<nlohmann::json>& log) {
  std::string text;
  for (const auto& r : log) text += r.dump() + "\n";
  atomic_write(path, text);
}

// ---- segmentation ----

struct SegSample {
  std::vector<float> image;
  std::vector<std::uint8_t> labels;
};

struct SegBatch {
  nn::Tensor<float> x;
  std::vector<float> y, w, edge;  // per sample blocks, class-major
};

Index3 patch_extent(const nn::CELUNetConfig& c) { return {c.input[2], c.input[1], c.input[0]}; }

SegSample cut(const CaseData& c, const Index3& offset, const Index3& size, bool mirror) {
  SegSample s{extract_patch(c.image, offset, size), extract_patch(c.labels, offset, size)};
  if (mirror) {
    const int n = size[0];
    for (std::size_t r = 0; r < s.image.size() / n; ++r) {
      std::reverse(s.image.begin() + r * n, s.image.begin() + (r + 1) * n);
      std::reverse(s.labels.begin() + r * n, s.labels.begin() + (r + 1) * n);
    }
  }
  return s;
}

Index3 random_offset(const Shape3& shape, const Index3& size, std::mt19937_64& rng) {
  Index3 o{0, 0, 0};
  const std::array<int, 3> n{shape.nx, shape.ny, shape.nz};
  for (int a = 0; a < 3; ++a) {
    if (n[a] > size[a]) o[a] = std::uniform_int_distribution<int>(0, n[a] - size[a])(rng);
  }
  return o;
}

Index3 centered_offset(const CaseData& c, const Index3& size) {
  const Box3 fg = foreground_box(c.labels);
  const std::array<int, 3> n{c.labels.geometry().shape.nx, c.labels.geometry().shape.ny, c.labels.geometry().shape.nz};
  Index3 o{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const int mid = fg.empty() ? n[a] / 2 : (fg.lo[a] + fg.hi[a]) / 2;
    o[a] = n[a] > size[a] ? std::clamp(mid - size[a] / 2, 0, n[a] - size[a]) : 0;
  }
  return o;
}

SegBatch make_seg_batch(const std::vector<SegSample>& samples, const nn::CELUNetConfig& net, const LossConfig& loss) {
  const Index3 size = patch_extent(net);
  const Shape3 shape{size[0], size[1], size[2]};
  const int classes = net.out_classes;
  SegBatch b;
  b.x = nn::Tensor<float>(nn::make_dims(static_cast<int>(samples.size()), 1, net.input[0], net.input[1], net.input[2]));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    std::copy(samples[n].image.begin(), samples[n].image.end(), b.x.sample(static_cast<int>(n)));
    const auto y = one_hot<float>(samples[n].labels, classes);
    const auto w = dwm_stack(shape, samples[n].labels, classes, loss.gamma, loss.sigma);
    const auto e = edge_targets(shape, samples[n].labels, classes);
    b.y.insert(b.y.end(), y.begin(), y.end());
    b.w.insert(b.w.end(), w.begin(), w.end());
    b.edge.insert(b.edge.end(), e.begin(), e.end());
  }
  return b;
}

struct SegLossResult {
  double total = 0, region = 0, contour = 0;
};

// Losses averaged over the batch; seeds output grads when `seed_grads`.
SegLossResult seg_losses(nn::SegNet<float>& net, const SegBatch& b, int epoch, const LossConfig& loss, bool seed_grads) {
  const int classes = net.cfg.out_classes, edges = net.cfg.edge_channels();
  const auto& region = net.graph.value(net.region);
  const auto& edge = net.graph.value(net.edge);
  const int batch = region.dims.n();
  const std::size_t rs = region.dims.per_sample(), es = edge.dims.per_sample();
  nn::Tensor<float>* gr = seed_grads ? &net.graph.grad(net.region) : nullptr;
  nn::Tensor<float>* ge = seed_grads ? &net.graph.grad(net.edge) : nullptr;
  const double wca = loss.ca_weight(epoch);
  SegLossResult r;
  for (int n = 0; n < batch; ++n) {
    std::span<const float> y(b.y.data() + n * rs, rs), w(b.w.data() + n * rs, rs), p(region.sample(n), rs);
    std::span<const float> ey(b.edge.data() + n * es, es), ep(edge.sample(n), es);
    std::span<float> g1, g2;
    if (seed_grads) {
      g1 = {gr->sample(n), rs};
      g2 = {ge->sample(n), es};
    }
    const double ra = ra_loss<float>(y, p, w, classes, loss, g1);
    const double ca = ca_loss<float>(ey, ep, edges, loss.epsilon, g2);
    if (seed_grads) {
      for (auto& g : g1) g = static_cast<float>(g / batch);
      for (auto& g : g2) g = static_cast<float>(g * wca / batch);
    }
    r.region += ra / batch;
    r.contour += ca / batch;
    r.total += total_loss(ra, ca, epoch, loss) / batch;
  }
  return r;
}

// Hard Dice per foreground class over a patch batch.
std::array<double, 2> batch_dice_counts(const nn::Tensor<float>& region, const SegBatch& b, std::array<double, 4>& acc) {
  const int classes = region.dims.c();
  const std::size_t v = region.dims.spatial();
  for (int n = 0; n < region.dims.n(); ++n) {
    const float* p = region.sample(n);
    const float* y = b.y.data() + n * region.dims.per_sample();
    for (std::size_t i = 0; i < v; ++i) {
      int best = 0, truth = 0;
      for (int c = 1; c < classes; ++c) {
        if (p[c * v + i] > p[best * v + i]) best = c;
        if (y[c * v + i] > 0.5f) truth = c;
      }
      for (int c = 1; c <= 2 && c < classes; ++c) {
        acc[(c - 1) * 2] += (best == c) && (truth == c) ? 2.0 : 0.0;
        acc[(c - 1) * 2 + 1] += (best == c) + (truth == c);
      }
    }
  }
  return {acc[1] > 0 ? acc[0] / acc[1] : 1.0, acc[3] > 0 ? acc[2] / acc[3] : 1.0};
}

nlohmann::json seg_checkpoint_config(const ExperimentConfig& cfg) {
  nlohmann::json lc = nlohmann::json(cfg).at("loss");
  return {{"kind", "segmentation"}, {"net", cfg.seg}, {"loss", lc}, {"seed", cfg.seed}};
}

}  // namespace

TrainResult train_segmentation(const ExperimentConfig& cfg, const std::vector<ManifestRecord>& records,
                               const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  cfg.validate();
  const DataSplit split = split_manifest(records, cfg.val_fraction, cfg.seed);
  std::vector<CaseData> train, val;
  for (const auto& r : split.train) train.push_back(load_case(r));
  for (const auto& r : split.val) val.push_back(load_case(r));
  std::filesystem::create_directories(out_dir);

  auto net = nn::make_celunet<float>(cfg.seg, cfg.seed);
  nn::Adam opt({cfg.optimizer.lr});
  const Index3 size = patch_extent(cfg.seg);
  const LossConfig& loss = cfg.loss;

  // validation patches are fixed for the whole run
  std::vector<SegBatch> val_batches;
  {
    std::mt19937_64 rng(mix(cfg.seed, 0x76616cULL));
    for (const auto& c : val) {
      for (int k = 0; k < cfg.val_patches_per_case; ++k) {
        const Index3 off = k == 0 ? centered_offset(c, size) : random_offset(c.labels.geometry().shape, size, rng);
        val_batches.push_back(make_seg_batch({cut(c, off, size, false)}, cfg.seg, loss));
      }
    }
  }

  const int samples = cfg.seg_samples_per_epoch > 0 ? cfg.seg_samples_per_epoch : static_cast<int>(train.size());
  const int batches = (samples + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult res;
  res.best_checkpoint = out_dir / "seg_best.ckpt";
  res.last_checkpoint = out_dir / "seg_last.ckpt";
  res.log_path = out_dir / "seg_log.jsonl";
  const nlohmann::json ck_config = seg_checkpoint_config(cfg);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 erng(mix(cfg.seed, epoch, 1));
    std::shuffle(order.begin(), order.end(), erng);

    auto make = [&](std::size_t bi) {
      std::mt19937_64 rng(mix(cfg.seed, epoch, 1000 + bi));
      std::vector<SegSample> s;
      const int lo = static_cast<int>(bi) * cfg.batch_size, hi = std::min(samples, lo + cfg.batch_size);
      for (int i = lo; i < hi; ++i) {
        const CaseData& c = train[order[i % order.size()]];
        const Index3 off = random_offset(c.labels.geometry().shape, size, rng);
        const bool mirror = cfg.flip_augmentation && (rng() & 1);
        s.push_back(cut(c, off, size, mirror));
      }
      return make_seg_batch(s, cfg.seg, loss);
    };
    OrderedPrefetcher<SegBatch> loader(batches, cfg.loader_workers, cfg.queue_capacity, make);

    double train_loss = 0;
    for (int bi = 0; bi < batches; ++bi) {
      const SegBatch b = loader.next();
      net.graph.zero_param_grads();
      net.graph.forward({&b.x}, nn::Mode::train);
      const auto l = seg_losses(net, b, epoch, loss, true);
      net.graph.backward();
      opt.step(net.graph.named_params());
      train_loss += l.total * b.x.dims.n();
    }
    train_loss /= samples;

    double val_loss = 0;
    std::array<double, 4> acc{};
    std::array<double, 2> dice{};
    for (const auto& b : val_batches) {
      net.graph.forward({&b.x}, nn::Mode::infer);
      val_loss += seg_losses(net, b, epoch, loss, false).total / val_batches.size();
      dice = batch_dice_counts(net.graph.value(net.region), b, acc);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    const bool improved = res.best_epoch < 0 || val_loss < res.best_val_loss;
    if (improved) {
      res.best_epoch = epoch;
      res.best_val_loss = val_loss;
      nn::save_checkpoint(res.best_checkpoint, nn::capture(net.graph, ck_config, &opt, epoch));
    }
    nlohmann::json rec = {{"epoch", epoch},
                          {"train_loss", train_loss},
                          {"val_loss", val_loss},
                          {"val_dice_humerus", dice[0]},
                          {"val_dice_scapula", dice[1]},
                          {"ca_weight", loss.ca_weight(epoch)},
                          {"seconds", secs},
                          {"best", improved}};
    res.log.push_back(rec);
    write_log(res.log_path, res.log);
    res.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(rec);
    if (epoch - res.best_epoch >= cfg.early_stopping_patience) {
      res.early_stopped = true;
      break;
    }
  }
  nn::save_checkpoint(res.last_checkpoint, nn::capture(net.graph, ck_config, &opt, res.epochs_run - 1));
  return res;
}

std::array<std::vector<double>, 3> task_class_weights(const std::vector<StagingLabels>& labels) {
  const auto counts = staging_counts(labels);
  static const char* names[3] = {"OS", "JS", "HSA"};
  std::array<std::vector<double>, 3> w;
  for (int t = 0; t < 3; ++t) {
    for (std::size_t c = 0; c < counts[t].size(); ++c) {
      if (counts[t][c] == 0) {
        fail(ErrorCode::degenerate_class, std::string(names[t]) + " class " + std::to_string(c) + " has no training case");
      }
    }
    w[t] = class_weights(counts[t]);
  }
  return w;
}

namespace {

struct ClsBatch {
  nn::Tensor<float> x;
  std::array<std::vector<float>, 3> y;  // one-hot [sample][class]
};

ClsBatch make_cls_batch(const std::vector<GhSample>& data, const std::vector<std::size_t>& idx, int patch) {
  ClsBatch b;
  b.x = nn::Tensor<float>(nn::make_dims(static_cast<int>(idx.size()), 1, patch, patch, patch));
  for (int t = 0; t < 3; ++t) b.y[t].assign(idx.size() * kTaskClasses[t], 0.0f);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const GhSample& s = data[idx[n]];
    std::copy(s.patch.begin(), s.patch.end(), b.x.sample(static_cast<int>(n)));
    b.y[0][n * 3 + s.staging.os] = 1;
    b.y[1][n * 3 + s.staging.js] = 1;
    b.y[2][n * 2 + s.staging.hsa] = 1;
  }
  return b;
}

double cls_losses(nn::ClsNet<float>& net, const ClsBatch& b, const std::array<std::vector<double>, 3>& w, double eps,
                  bool seed_grads, std::array<int, 3>* correct) {
  double total = 0;
  for (int t = 0; t < 3; ++t) {
    const auto& probs = net.graph.value(net.heads[t]);
    std::span<float> g;
    if (seed_grads) g = {net.graph.grad(net.heads[t]).data.data(), probs.size()};
    total += task_ce<float>(b.y[t], probs.data, w[t], kTaskClasses[t], eps, g);
    if (correct) {
      const int k = kTaskClasses[t];
      for (int n = 0; n < probs.dims.n(); ++n) {
        const float* p = probs.data.data() + n * k;
        const int arg = static_cast<int>(std::max_element(p, p + k) - p);
        (*correct)[t] += b.y[t][n * k + arg] > 0.5f;
      }
    }
  }
  return total;
}

void reseed_dropout(nn::Graph<float>& g, std::uint64_t seed) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (auto* d = dynamic_cast<nn::Dropout<float>*>(&g.op(static_cast<int>(i)))) d->reseed(mix(seed, i, 7));
  }
}

}  // namespace

TrainResult train_classifier(const ExperimentConfig& cfg, const std::vector<ManifestRecord>& records,
                             const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  cfg.validate();
  const DataSplit split = split_manifest(records, cfg.val_fraction, cfg.seed);
  std::vector<StagingLabels> train_labels;
  for (const auto& r : split.train) train_labels.push_back(r.staging);
  const auto weights = task_class_weights(train_labels);
  const int patch = cfg.cls.input[0];
  const auto train = build_gh_dataset(split.train, patch, cfg.flip_augmentation);
  const auto val = build_gh_dataset(split.val, patch, false);
  std::filesystem::create_directories(out_dir);

  auto net = nn::make_arthronet<float>(cfg.cls, cfg.seed);
  nn::Adam opt({cfg.optimizer.lr});
  const nlohmann::json ck_config = {{"kind", "classification"},
                                    {"net", cfg.cls},
                                    {"class_weights", weights},
                                    {"seed", cfg.seed}};
  TrainResult res;
  res.best_checkpoint = out_dir / "cls_best.ckpt";
  res.last_checkpoint = out_dir / "cls_last.ckpt";
  res.log_path = out_dir / "cls_log.jsonl";
  const double eps = cfg.loss.epsilon;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 erng(mix(cfg.seed, epoch, 2));
    std::shuffle(order.begin(), order.end(), erng);
    const std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    auto make = [&](std::size_t bi) {
      const std::size_t lo = bi * cfg.batch_size, hi = std::min(order.size(), lo + cfg.batch_size);
      return make_cls_batch(train, std::vector<std::size_t>(order.begin() + lo, order.begin() + hi), patch);
    };
    OrderedPrefetcher<ClsBatch> loader(batches, cfg.loader_workers, cfg.queue_capacity, make);
    double train_loss = 0;
    std::array<int, 3> train_correct{};
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const ClsBatch b = loader.next();
      reseed_dropout(net.graph, mix(cfg.seed, epoch, 5000 + bi));
      net.graph.zero_param_grads();
      net.graph.forward({&b.x}, nn::Mode::train);
      train_loss += cls_losses(net, b, weights, eps, true, &train_correct) * b.x.dims.n();
      net.graph.backward();
      opt.step(net.graph.named_params());
    }
    train_loss /= train.size();

    double val_loss = 0;
    std::array<int, 3> correct{};
    for (std::size_t lo = 0; lo < val.size(); lo += cfg.batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t i = lo; i < std::min(val.size(), lo + cfg.batch_size); ++i) idx.push_back(i);
      const ClsBatch b = make_cls_batch(val, idx, patch);
      net.graph.forward({&b.x}, nn::Mode::infer);
      val_loss += cls_losses(net, b, weights, eps, false, &correct) * idx.size();
    }
    val_loss /= val.size();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    const bool improved = res.best_epoch < 0 || val_loss < res.best_val_loss;
    if (improved) {
      res.best_epoch = epoch;
      res.best_val_loss = val_loss;
      nn::save_checkpoint(res.best_checkpoint, nn::capture(net.graph, ck_config, &opt, epoch));
    }
    const double nv = static_cast<double>(val.size()), nt = static_cast<double>(train.size());
    nlohmann::json rec = {{"epoch", epoch},
                          {"train_loss", train_loss},
                          {"val_loss", val_loss},
                          {"train_accuracy", {train_correct[0] / nt, train_correct[1] / nt, train_correct[2] / nt}},
                          {"val_accuracy", {correct[0] / nv, correct[1] / nv, correct[2] / nv}},
                          {"seconds", secs},
                          {"best", improved}};
    res.log.push_back(rec);
    write_log(res.log_path, res.log);
    res.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(rec);
    if (epoch - res.best_epoch >= cfg.early_stopping_patience) {
      res.early_stopped = true;
      break;
    }
  }
  nn::save_checkpoint(res.last_checkpoint, nn::capture(net.graph, ck_config, &opt, res.epochs_run - 1));
  return res;
}

}  // namespace ghc
