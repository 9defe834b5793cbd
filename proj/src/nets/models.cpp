#include "nets/models.hpp"

namespace ghc::nn {

void CELUNetConfig::validate() const {
  if (levels < 2) fail(ErrorCode::config_error, "CEL-UNet needs at least 2 levels");
  if (base_features < 1 || in_channels < 1 || out_classes < 2) fail(ErrorCode::config_error, "bad CEL-UNet widths");
  const int div = 1 << levels;
  for (int s : input) {
    if (s < 1 || s % div != 0) {
      fail(ErrorCode::shape_error, "patch axis " + std::to_string(s) + " not divisible by 2^" + std::to_string(levels));
    }
    // the coarsest decoder block still feeds a 5^3 edge-extraction window
    if (s / (div / 2) < 5) fail(ErrorCode::shape_error, "patch too small for edge extraction at the coarsest level");
  }
}

bool ArthroNetConfig::in_ablation_grid() const {
  return (blocks == 7 || blocks == 8) && (base_fm == 16 || base_fm == 32 || base_fm == 48);
}

void ArthroNetConfig::validate() const {
  if (blocks < 1 || blocks > 12) fail(ErrorCode::config_error, "classifier blocks must be in [1, 12]");
  if (base_fm < 1) fail(ErrorCode::config_error, "base feature maps must be >= 1");
  if (doubling_period < 1) fail(ErrorCode::config_error, "doubling period must be >= 1");
  if (dense_units[0] < 1 || dense_units[1] < 1) fail(ErrorCode::config_error, "dense widths must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::config_error, "dropout must be in [0, 1)");
  if (heads != std::array<int, 3>{3, 3, 2}) fail(ErrorCode::config_error, "heads must be (3, 3, 2)");
  // the last two blocks may run on collapsed 1-voxel maps, nothing earlier
  const int need = blocks >= 2 ? 1 << (blocks - 2) : 1;
  for (int s : input) {
    if (s < need) {
      fail(ErrorCode::shape_error, "classifier input " + std::to_string(s) + " too small for " + std::to_string(blocks) +
                                       " blocks (need >= " + std::to_string(need) + ")");
    }
  }
}

void to_json(nlohmann::json& j, const CELUNetConfig& c) {
  j = {{"levels", c.levels},
       {"base_features", c.base_features},
       {"in_channels", c.in_channels},
       {"out_classes", c.out_classes},
       {"input", c.input}};
}

void from_json(const nlohmann::json& j, CELUNetConfig& c) {
  c.levels = j.value("levels", c.levels);
  c.base_features = j.value("base_features", c.base_features);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_classes = j.value("out_classes", c.out_classes);
  if (j.contains("input")) c.input = j.at("input").get<std::array<int, 3>>();
}

void to_json(nlohmann::json& j, const ArthroNetConfig& c) {
  j = {{"blocks", c.blocks},        {"base_fm", c.base_fm}, {"doubling_period", c.doubling_period},
       {"dense_units", c.dense_units}, {"dropout", c.dropout}, {"heads", c.heads},
       {"input", c.input}};
}

void from_json(const nlohmann::json& j, ArthroNetConfig& c) {
  c.blocks = j.value("blocks", c.blocks);
  c.base_fm = j.value("base_fm", c.base_fm);
  c.doubling_period = j.value("doubling_period", c.doubling_period);
  if (j.contains("dense_units")) c.dense_units = j.at("dense_units").get<std::array<int, 2>>();
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("heads")) c.heads = j.at("heads").get<std::array<int, 3>>();
  if (j.contains("input")) c.input = j.at("input").get<std::array<int, 3>>();
}

namespace {

template <typename T>
int conv_bn_relu(Graph<T>& g, const std::string& p, int x, int cin, int cout, std::mt19937_64& rng) {
  int c = g.add(p + ".conv", std::make_unique<Conv3d<T>>(cin, cout, 3, rng), {x});
  int b = g.add(p + ".bn", std::make_unique<BatchNorm<T>>(cout), {c});
  return g.add(p + ".relu", std::make_unique<Relu<T>>(), {b});
}

template <typename T>
int double_conv(Graph<T>& g, const std::string& p, int x, int cin, int cout, std::mt19937_64& rng) {
  x = conv_bn_relu(g, p + ".a", x, cin, cout, rng);
  return conv_bn_relu(g, p + ".b", x, cout, cout, rng);
}

}  // namespace

template <typename T>
int add_pee(Graph<T>& g, const std::string& p, int f, int channels, std::mt19937_64& rng) {
  int a3 = g.add(p + ".avg3", std::make_unique<AvgPoolSame<T>>(3), {f});
  int e3 = g.add(p + ".edge3", std::make_unique<Subtract<T>>(), {f, a3});
  int a5 = g.add(p + ".avg5", std::make_unique<AvgPoolSame<T>>(5), {f});
  int e5 = g.add(p + ".edge5", std::make_unique<Subtract<T>>(), {f, a5});
  int cat = g.add(p + ".cat", std::make_unique<Concat<T>>(), {f, e3, e5});
  return g.add(p + ".fuse", std::make_unique<Conv3d<T>>(3 * channels, channels, 1, rng), {cat});
}

template <typename T>
SegNet<T> make_celunet(const CELUNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SegNet<T> net;
  net.cfg = cfg;
  auto& g = net.graph;
  std::mt19937_64 rng(seed);
  const int L = cfg.levels;
  auto width = [&](int level) { return cfg.base_features << level; };

  int x = g.input("input", make_dims(1, cfg.in_channels, cfg.input[0], cfg.input[1], cfg.input[2]));
  std::vector<int> skips(L);
  std::vector<std::array<int, 3>> res(L);
  int cin = cfg.in_channels;
  for (int l = 0; l < L; ++l) {
    const std::string p = "enc" + std::to_string(l);
    skips[l] = double_conv(g, p, x, cin, width(l), rng);
    const Dims& d = g.dims(skips[l]);
    res[l] = {d.depth(), d.height(), d.width()};
    x = g.add(p + ".pool", std::make_unique<MaxPool2<T>>(), {skips[l]});
    cin = width(l);
  }
  const int bottleneck = double_conv(g, "bottleneck", x, cin, width(L), rng);

  // contour branch first so the region branch can take its vertical skips
  std::vector<int> contour(L);
  for (int pass = 0; pass < 2; ++pass) {
    const bool region = pass == 1;
    const std::string branch = region ? "ra" : "ca";
    int h = bottleneck;
    int hc = width(L);
    for (int l = L - 1; l >= 0; --l) {
      const std::string p = branch + std::to_string(l);
      int up = g.add(p + ".up", std::make_unique<UpsampleNearest<T>>(res[l][0], res[l][1], res[l][2]), {h});
      int upc = g.add(p + ".upconv", std::make_unique<Conv3d<T>>(hc, width(l), 1, rng), {up});
      std::vector<int> parts{upc, skips[l]};
      if (region) parts.push_back(contour[l]);
      int cat = g.add(p + ".cat", std::make_unique<Concat<T>>(), parts);
      h = double_conv(g, p, cat, static_cast<int>(parts.size()) * width(l), width(l), rng);
      if (!region) {
        h = add_pee(g, p + ".pee", h, width(l), rng);
        contour[l] = h;
      }
      hc = width(l);
    }
    if (region) {
      int logits = g.add("ra.head", std::make_unique<Conv3d<T>>(hc, cfg.out_classes, 1, rng), {h});
      net.region = g.add("ra.softmax", std::make_unique<Softmax<T>>(), {logits});
    } else {
      int logits = g.add("ca.head", std::make_unique<Conv3d<T>>(hc, cfg.edge_channels(), 1, rng), {h});
      net.edge = g.add("ca.sigmoid", std::make_unique<Sigmoid<T>>(), {logits});
    }
  }
  g.set_output("region", net.region);
  g.set_output("edge", net.edge);
  return net;
}

std::vector<int> arthronet_spatial_trace(int input, int blocks) {
  std::vector<int> trace{input};
  for (int b = 0; b < blocks; ++b) trace.push_back(MaxPool2<float>::pooled(trace.back()));
  return trace;
}

template <typename T>
ClsNet<T> make_arthronet(const ArthroNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ClsNet<T> net;
  net.cfg = cfg;
  auto& g = net.graph;
  std::mt19937_64 rng(seed);
  int x = g.input("input", make_dims(1, 1, cfg.input[0], cfg.input[1], cfg.input[2]));
  int cin = 1;
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    x = double_conv(g, p, x, cin, cfg.channels(b), rng);
    x = g.add(p + ".pool", std::make_unique<MaxPool2<T>>(), {x});
    cin = cfg.channels(b);
  }
  x = g.add("flatten", std::make_unique<Flatten<T>>(), {x});
  const int features = g.dims(x).c();
  const char* names[3] = {"os", "js", "hsa"};
  for (int t = 0; t < 3; ++t) {
    const std::string p = names[t];
    int h = g.add(p + ".dropout", std::make_unique<Dropout<T>>(cfg.dropout, seed * 31 + 7 + t), {x});
    h = g.add(p + ".dense1", std::make_unique<Dense<T>>(features, cfg.dense_units[0], rng), {h});
    h = g.add(p + ".relu1", std::make_unique<Relu<T>>(), {h});
    h = g.add(p + ".dense2", std::make_unique<Dense<T>>(cfg.dense_units[0], cfg.dense_units[1], rng), {h});
    h = g.add(p + ".relu2", std::make_unique<Relu<T>>(), {h});
    h = g.add(p + ".logits", std::make_unique<Dense<T>>(cfg.dense_units[1], cfg.heads[t], rng), {h});
    net.heads[t] = g.add(p + ".softmax", std::make_unique<Softmax<T>>(), {h});
    g.set_output(p, net.heads[t]);
  }
  return net;
}

NetworkGraph build_celunet(const CELUNetConfig& cfg) { return make_celunet<float>(cfg, 0).graph.describe(); }
NetworkGraph build_arthronet(const ArthroNetConfig& cfg) { return make_arthronet<float>(cfg, 0).graph.describe(); }

SegOutput forward_seg(SegNet<float>& net, const Tensor<float>& patch) {
  net.graph.forward({&patch}, Mode::infer);
  return {net.graph.value(net.region), net.graph.value(net.edge)};
}

std::array<Tensor<float>, 3> forward_cls(ClsNet<float>& net, const Tensor<float>& gh_patch) {
  net.graph.forward({&gh_patch}, Mode::infer);
  return {net.graph.value(net.heads[0]), net.graph.value(net.heads[1]), net.graph.value(net.heads[2])};
}

template int add_pee<float>(Graph<float>&, const std::string&, int, int, std::mt19937_64&);
template int add_pee<double>(Graph<double>&, const std::string&, int, int, std::mt19937_64&);
template SegNet<float> make_celunet<float>(const CELUNetConfig&, std::uint64_t);
template SegNet<double> make_celunet<double>(const CELUNetConfig&, std::uint64_t);
template ClsNet<float> make_arthronet<float>(const ArthroNetConfig&, std::uint64_t);
template ClsNet<double> make_arthronet<double>(const ArthroNetConfig&, std::uint64_t);

}  // namespace ghc::nn
