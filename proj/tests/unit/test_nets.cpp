#include <doctest.h>

#include <cmath>
#include <random>

#include "core/fsutil.hpp"
#include "nets/conv_kernels.hpp"
#include "nets/models.hpp"
#include "nets/optim.hpp"
#include "test_util.hpp"

using namespace ghc;
using namespace ghc::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(const Dims& d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(d);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

// Scalar probe: sum over outputs of a fixed random weighting, so every output
// element contributes to the gradient.
struct Probe {
  std::vector<int> outputs;
  std::vector<std::vector<double>> weights;

  double value(Graph<double>& g) const {
    double s = 0.0;
    for (std::size_t o = 0; o < outputs.size(); ++o) {
      const auto& v = g.value(outputs[o]).data;
      for (std::size_t i = 0; i < v.size(); ++i) s += weights[o][i] * v[i];
    }
    return s;
  }
  void seed(Graph<double>& g) const {
    for (std::size_t o = 0; o < outputs.size(); ++o) {
      auto& gr = g.grad(outputs[o]);
      for (std::size_t i = 0; i < gr.size(); ++i) gr.data[i] = weights[o][i];
    }
  }
};

Probe make_probe(Graph<double>& g, std::vector<int> outputs, std::mt19937_64& rng) {
  Probe p{outputs, {}};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int o : outputs) {
    std::vector<double> w(g.value(o).size());
    for (auto& x : w) x = u(rng);
    p.weights.push_back(std::move(w));
  }
  return p;
}

// Max relative error of parameter and input gradients against central differences.
double gradient_error(Graph<double>& g, Tensor<double>& x, const std::vector<int>& outputs, std::mt19937_64& rng,
                      int param_samples, Mode mode = Mode::train) {
  g.forward({&x}, mode);
  const Probe probe = make_probe(g, outputs, rng);
  g.zero_param_grads();
  probe.seed(g);
  g.backward();

  std::vector<std::pair<Param<double>*, std::size_t>> picks;
  auto params = g.params();
  std::vector<Param<double>*> trainable;
  for (auto* p : params)
    if (p->trainable) trainable.push_back(p);
  for (int i = 0; i < param_samples; ++i) {
    auto* p = trainable[rng() % trainable.size()];
    picks.emplace_back(p, rng() % p->value.size());
  }
  std::vector<double> analytic;
  for (auto& [p, i] : picks) analytic.push_back(p->grad.data[i]);

  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < picks.size(); ++k) {
    auto [p, i] = picks[k];
    const double x0 = p->value.data[i];
    p->value.data[i] = x0 + h;
    g.forward({&x}, mode);
    const double fp = probe.value(g);
    p->value.data[i] = x0 - h;
    g.forward({&x}, mode);
    const double fm = probe.value(g);
    p->value.data[i] = x0;
    const double num = (fp - fm) / (2 * h);
    // the floor keeps analytically-zero entries (biases ahead of batch norm) from dividing noise by noise
    worst = std::max(worst, std::abs(num - analytic[k]) / std::max({std::abs(num), std::abs(analytic[k]), 1e-4}));
  }
  return worst;
}

}  // namespace

TEST_CASE("direct convolution kernels agree with the portable double path") {
  std::mt19937_64 rng(1);
  for (auto [cin, cout, D, H, W] : std::vector<std::array<int, 5>>{{1, 4, 5, 6, 7}, {3, 5, 4, 3, 17}, {8, 8, 6, 6, 16},
                                                                    {2, 3, 1, 1, 9}, {5, 9, 3, 7, 24}}) {
    const std::size_t S = static_cast<std::size_t>(D) * H * W;
    auto in = random_tensor<double>(make_dims(1, cin, D, H, W), rng);
    auto w = random_tensor<double>(make_dims(cout, cin, 1, 1, 27), rng);
    auto b = random_tensor<double>(make_dims(1, cout, 1, 1, 1), rng);
    auto g = random_tensor<double>(make_dims(1, cout, D, H, W), rng);
    std::vector<float> inf(in.data.begin(), in.data.end()), wf(w.data.begin(), w.data.end()),
        bf(b.data.begin(), b.data.end()), gf(g.data.begin(), g.data.end());

    std::vector<double> out(cout * S);
    std::vector<float> outf(cout * S);
    kernels::conv3_forward(in.data.data(), cin, D, H, W, w.data.data(), b.data.data(), cout, out.data());
    kernels::conv3_forward(inf.data(), cin, D, H, W, wf.data(), bf.data(), cout, outf.data());
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(outf[i] == doctest::Approx(out[i]).epsilon(1e-4));

    // brute-force oracle for the double path
    for (int co = 0; co < cout; ++co)
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            double s = b.data[co];
            for (int ci = 0; ci < cin; ++ci)
              for (int dz = 0; dz < 3; ++dz)
                for (int dy = 0; dy < 3; ++dy)
                  for (int dx = 0; dx < 3; ++dx) {
                    const int zz = z + dz - 1, yy = y + dy - 1, xx = x + dx - 1;
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= D || yy >= H || xx >= W) continue;
                    s += w.data[(co * cin + ci) * 27 + dz * 9 + dy * 3 + dx] * in.data[ci * S + (zz * H + yy) * W + xx];
                  }
            REQUIRE(out[co * S + (z * H + y) * W + x] == doctest::Approx(s).epsilon(1e-12));
          }

    std::vector<double> gin(cin * S, 0.0);
    std::vector<float> ginf(cin * S, 0.0f);
    kernels::conv3_backward_data(g.data.data(), cout, D, H, W, w.data.data(), cin, gin.data());
    kernels::conv3_backward_data(gf.data(), cout, D, H, W, wf.data(), cin, ginf.data());
    for (std::size_t i = 0; i < gin.size(); ++i) REQUIRE(ginf[i] == doctest::Approx(gin[i]).epsilon(1e-4));

    std::vector<double> gw(cout * cin * 27, 0.0), gb(cout, 0.0), gwf(gw.size(), 0.0), gbf(cout, 0.0);
    kernels::conv3_backward_weights(in.data.data(), cin, g.data.data(), cout, D, H, W, gw.data(), gb.data());
    kernels::conv3_backward_weights(inf.data(), cin, gf.data(), cout, D, H, W, gwf.data(), gbf.data());
    for (std::size_t i = 0; i < gw.size(); ++i) REQUIRE(gwf[i] == doctest::Approx(gw[i]).epsilon(1e-4));
    for (int i = 0; i < cout; ++i) REQUIRE(gbf[i] == doctest::Approx(gb[i]).epsilon(1e-4));

    // transposed-conv and weight-correlation identities: <conv(x), g> = <x, conv^T(g)> = <w, dW> + <b, db>
    double lhs = 0.0, rhs_x = 0.0, rhs_w = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) lhs += out[i] * g.data[i];
    for (std::size_t i = 0; i < gin.size(); ++i) rhs_x += in.data[i] * gin[i];
    for (std::size_t i = 0; i < gw.size(); ++i) rhs_w += w.data[i] * gw[i];
    double bias_term = 0.0;
    for (int i = 0; i < cout; ++i) bias_term += b.data[i] * gb[i];
    CHECK(lhs - bias_term == doctest::Approx(rhs_x).epsilon(1e-10));
    CHECK(lhs - bias_term == doctest::Approx(rhs_w).epsilon(1e-10));
  }
}

TEST_CASE("every op's backward matches finite differences") {
  std::mt19937_64 rng(2);
  auto check = [&](Graph<double>& g, int, int out, Dims dims, Mode mode = Mode::train) {
    g.keep_intermediates(true);
    auto x = random_tensor<double>(dims, rng);
    return gradient_error(g, x, {out}, rng, 15, mode);
  };

  // Input gradients flow through a leading 1^3 conv so they reach a parameter.
  auto lead = [&](Graph<double>& g, int cin, const Dims& d) {
    int in = g.input("x", d);
    return std::make_pair(in, g.add("lead", std::make_unique<Conv3d<double>>(d.c(), cin, 1, rng), {in}));
  };

  SUBCASE("conv3 / batchnorm / relu") {
    Graph<double> g;
    const Dims d = make_dims(2, 2, 4, 5, 6);
    auto [in, l] = lead(g, 3, d);
    int c = g.add("c", std::make_unique<Conv3d<double>>(3, 4, 3, rng), {l});
    int b = g.add("b", std::make_unique<BatchNorm<double>>(4), {c});
    int r = g.add("r", std::make_unique<Relu<double>>(), {b});
    CHECK(check(g, in, r, d) < 1e-4);
    CHECK(check(g, in, b, d, Mode::infer) < 1e-4);
  }
  SUBCASE("maxpool / upsample / avgpool") {
    Graph<double> g;
    const Dims d = make_dims(1, 2, 5, 6, 7);
    auto [in, l] = lead(g, 2, d);
    int p = g.add("p", std::make_unique<MaxPool2<double>>(), {l});
    int u = g.add("u", std::make_unique<UpsampleNearest<double>>(5, 6, 7), {p});
    int a = g.add("a", std::make_unique<AvgPoolSame<double>>(5), {u});
    int a3 = g.add("a3", std::make_unique<AvgPoolSame<double>>(3), {l});
    int cat = g.add("cat", std::make_unique<Concat<double>>(), {a, a3, l});
    int s = g.add("s", std::make_unique<Subtract<double>>(), {l, a3});
    int cat2 = g.add("cat2", std::make_unique<Concat<double>>(), {cat, s});
    CHECK(check(g, in, cat2, d) < 1e-4);
  }
  SUBCASE("softmax / sigmoid") {
    Graph<double> g;
    const Dims d = make_dims(2, 3, 3, 3, 3);
    auto [in, l] = lead(g, 3, d);
    int sm = g.add("sm", std::make_unique<Softmax<double>>(), {l});
    int sg = g.add("sg", std::make_unique<Sigmoid<double>>(), {l});
    int cat = g.add("cat", std::make_unique<Concat<double>>(), {sm, sg});
    CHECK(check(g, in, cat, d) < 1e-4);
  }
  SUBCASE("flatten / dense / dropout") {
    Graph<double> g;
    const Dims d = make_dims(3, 2, 2, 2, 2);
    auto [in, l] = lead(g, 2, d);
    int f = g.add("f", std::make_unique<Flatten<double>>(), {l});
    int dr = g.add("dr", std::make_unique<Dropout<double>>(0.0, 1), {f});
    int de = g.add("de", std::make_unique<Dense<double>>(16, 5, rng), {dr});
    int sm = g.add("sm", std::make_unique<Softmax<double>>(), {de});
    CHECK(check(g, in, sm, d) < 1e-4);
  }
}

TEST_CASE("input gradients of a conv/pool stack match finite differences") {
  std::mt19937_64 rng(3);
  Graph<double> g;
  const Dims d = make_dims(1, 2, 4, 4, 6);
  int in = g.input("x", d);
  // a trainable 1^3 "input" layer whose weight gradient is the input gradient of the rest
  int c = g.add("c", std::make_unique<Conv3d<double>>(2, 3, 3, rng), {in});
  int a = g.add("a", std::make_unique<AvgPoolSame<double>>(3), {c});
  int p = g.add("p", std::make_unique<MaxPool2<double>>(), {a});
  auto x = random_tensor<double>(d, rng);
  g.forward({&x}, Mode::train);
  const Probe probe = make_probe(g, {p}, rng);
  probe.seed(g);
  // Compute dL/dx by treating x as a perturbable tensor.
  Tensor<double> gin(d);
  {
    std::vector<const Tensor<double>*> ins{&x};
    Tensor<double> ga(g.value(a).dims), gc(g.value(c).dims);
    std::vector<Tensor<double>*> gins{&ga};
    g.op(p).backward(std::vector<const Tensor<double>*>{&g.value(a)}, g.value(p), g.grad(p), gins);
    gins = {&gc};
    g.op(a).backward(std::vector<const Tensor<double>*>{&g.value(c)}, g.value(a), ga, gins);
    gins = {&gin};
    g.op(c).backward(ins, g.value(c), gc, gins);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); i += 3) {
    const double x0 = x.data[i], h = 1e-6;
    x.data[i] = x0 + h;
    g.forward({&x}, Mode::train);
    const double fp = probe.value(g);
    x.data[i] = x0 - h;
    g.forward({&x}, Mode::train);
    const double fm = probe.value(g);
    x.data[i] = x0;
    const double num = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(num - gin.data[i]) / std::max({std::abs(num), std::abs(gin.data[i]), 1e-6}));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("pyramidal edge extraction") {
  std::mt19937_64 rng(4);
  Graph<double> g;
  int in = g.input("f", make_dims(1, 2, 5, 5, 5));
  int fused = add_pee(g, "pee", in, 2, rng);
  CHECK(g.dims(fused).c() == 2);

  // constant input: both edge maps vanish, output = fusion of f alone
  Tensor<double> c(make_dims(1, 2, 5, 5, 5), 0.0);
  for (std::size_t i = 0; i < 125; ++i) c.data[i] = 3.0, c.data[125 + i] = -1.5;
  g.forward({&c}, Mode::train);
  for (const char* name : {"pee.edge3", "pee.edge5"}) {
    for (double v : g.value(g.find(name)).data) REQUIRE(std::abs(v) < 1e-12);
  }
  auto* fuse = dynamic_cast<Conv3d<double>*>(&g.op(fused));
  REQUIRE(fuse);
  const auto& w = fuse->params()[0]->value.data;
  const auto& b = fuse->params()[1]->value.data;
  for (int co = 0; co < 2; ++co) {
    const double expect = b[co] + w[co * 6 + 0] * 3.0 + w[co * 6 + 1] * -1.5;
    for (std::size_t v = 0; v < 125; ++v) REQUIRE(g.value(fused).data[co * 125 + v] == doctest::Approx(expect));
  }

  // impulse at the centre of 5^3: e3 = impulse - box3 response, e5 = impulse - box5 response
  Tensor<double> imp(make_dims(1, 2, 5, 5, 5), 0.0);
  imp.data[62] = 1.0;
  g.forward({&imp}, Mode::train);
  const auto& e3 = g.value(g.find("pee.edge3")).data;
  const auto& e5 = g.value(g.find("pee.edge5")).data;
  auto count = [](int i, int r) { return std::min(4, i + r) - std::max(0, i - r) + 1; };
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        const int v = (z * 5 + y) * 5 + x;
        const double delta = v == 62 ? 1.0 : 0.0;
        const bool in3 = std::abs(z - 2) <= 1 && std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
        const double box3 = in3 ? 1.0 / (count(z, 1) * count(y, 1) * count(x, 1)) : 0.0;
        const double box5 = 1.0 / (count(z, 2) * count(y, 2) * count(x, 2));
        REQUIRE(e3[v] == doctest::Approx(delta - box3));
        REQUIRE(e5[v] == doctest::Approx(delta - box5));
      }
  CHECK(e3[62] == doctest::Approx(1.0 - 1.0 / 27.0));
  CHECK(e5[0] == doctest::Approx(-1.0 / 27.0));  // corner: 3x3x3 in-grid window of the 5^3 box

  Graph<double> tiny;
  int t = tiny.input("f", make_dims(1, 2, 4, 8, 8));
  CHECK_THROWS_AS(add_pee(tiny, "pee", t, 2, rng), Error);
}

namespace {

std::size_t conv_params(int k, int cin, int cout) { return static_cast<std::size_t>(k * k * k) * cin * cout + cout; }

// Closed-form trainable-parameter count of the segmenter, layer by layer.
std::size_t celunet_params(int levels, int base, int in_ch, int classes) {
  auto w = [&](int l) { return base << l; };
  std::size_t n = 0;
  auto dbl = [&](int cin, int cout) { return conv_params(3, cin, cout) + conv_params(3, cout, cout) + 4 * cout; };
  int cin = in_ch;
  for (int l = 0; l < levels; ++l) {
    n += dbl(cin, w(l));
    cin = w(l);
  }
  n += dbl(cin, w(levels));
  for (int branch = 0; branch < 2; ++branch) {
    int hc = w(levels);
    for (int l = levels - 1; l >= 0; --l) {
      n += conv_params(1, hc, w(l));
      n += dbl((branch == 0 ? 2 : 3) * w(l), w(l));
      if (branch == 0) n += conv_params(1, 3 * w(l), w(l));
      hc = w(l);
    }
  }
  n += conv_params(1, base, classes) + conv_params(1, base, classes - 1);
  return n;
}

}  // namespace

TEST_CASE("segmenter structure") {
  CELUNetConfig cfg;
  cfg.levels = 2;
  cfg.base_features = 8;
  cfg.input = {64, 64, 64};
  const NetworkGraph g = build_celunet(cfg);
  CHECK(g.acyclic());
  CHECK(g.skips_consistent());
  CHECK(g.parameter_count == celunet_params(2, 8, 1, 3));
  const Dims ra = g.layer("ra.softmax").out_dims, ca = g.layer("ca.sigmoid").out_dims;
  CHECK(ra == make_dims(1, 3, 64, 64, 64));
  CHECK(ca == make_dims(1, 2, 64, 64, 64));
  for (int l = 0; l < 2; ++l) {
    const std::string s = std::to_string(l);
    CHECK(g.layer("ca" + s + ".pee.fuse").out_dims == g.layer("ra" + s + ".b.relu").out_dims);
    // vertical skip: the region block at level l concatenates the contour block output
    const auto& cat = g.layer("ra" + s + ".cat");
    CHECK(std::find(cat.inputs.begin(), cat.inputs.end(), g.layer("ca" + s + ".pee.fuse").id) != cat.inputs.end());
  }

  CELUNetConfig deep;
  CHECK(build_celunet([] {
          CELUNetConfig c;
          c.input = {160, 160, 160};
          return c;
        }())
            .parameter_count == celunet_params(4, 16, 1, 3));
  deep.input = {60, 64, 64};
  CHECK_THROWS_AS(build_celunet(deep), Error);
  deep.input = {32, 32, 32};  // coarsest decoder level would be 4^3 < 5^3
  CHECK_THROWS_AS(build_celunet(deep), Error);
}

TEST_CASE("segmenter forward contract") {
  CELUNetConfig cfg;
  cfg.levels = 2;
  cfg.base_features = 4;
  cfg.input = {24, 24, 24};
  auto net = make_celunet<float>(cfg, 7);
  std::mt19937_64 rng(5);
  auto x = random_tensor<float>(make_dims(2, 1, 24, 24, 24), rng, 0.0, 1.0);
  Tensor<float> x0(make_dims(1, 1, 24, 24, 24)), x1(make_dims(1, 1, 24, 24, 24));
  std::copy(x.sample(0), x.sample(0) + x0.size(), x0.data.begin());
  std::copy(x.sample(1), x.sample(1) + x1.size(), x1.data.begin());

  const SegOutput both = forward_seg(net, x);
  const SegOutput a = forward_seg(net, x0);
  const SegOutput a2 = forward_seg(net, x0);
  const SegOutput b = forward_seg(net, x1);
  CHECK(a.region.data == a2.region.data);
  CHECK(a.edge.data == a2.edge.data);
  const std::size_t S = 24 * 24 * 24;
  for (std::size_t v = 0; v < S; ++v) {
    const double sum = a.region.data[v] + a.region.data[S + v] + a.region.data[2 * S + v];
    REQUIRE(std::abs(sum - 1.0) < 1e-6);
  }
  for (float p : a.region.data) REQUIRE((p > 0.0f && p < 1.0f));
  for (float p : a.edge.data) REQUIRE((p > 0.0f && p < 1.0f));
  for (std::size_t i = 0; i < a.region.size(); ++i) {
    REQUIRE(both.region.data[i] == doctest::Approx(a.region.data[i]).epsilon(1e-5));
    REQUIRE(both.region.data[a.region.size() + i] == doctest::Approx(b.region.data[i]).epsilon(1e-5));
  }
  Tensor<float> wrong(make_dims(1, 1, 24, 24, 16));
  CHECK_THROWS_AS(forward_seg(net, wrong), Error);
}

TEST_CASE("segmenter backprop matches finite differences on random parameters") {
  CELUNetConfig cfg;
  cfg.levels = 2;
  cfg.base_features = 2;
  cfg.input = {12, 12, 12};
  auto net = make_celunet<double>(cfg, 11);
  std::mt19937_64 rng(12);
  auto x = random_tensor<double>(make_dims(2, 1, 12, 12, 12), rng, 0.0, 1.0);
  const double err = gradient_error(net.graph, x, {net.region, net.edge}, rng, 20);
  CHECK(err < 1e-3);
}

TEST_CASE("classifier structure") {
  CHECK(arthronet_spatial_trace(160, 7) == std::vector<int>{160, 80, 40, 20, 10, 5, 2, 1});
  CHECK(arthronet_spatial_trace(160, 8) == std::vector<int>{160, 80, 40, 20, 10, 5, 2, 1, 1});
  ArthroNetConfig a;
  a.blocks = 7;
  a.base_fm = 48;
  std::vector<int> trace;
  for (int b = 0; b < 7; ++b) trace.push_back(a.channels(b));
  CHECK(trace == std::vector<int>{48, 48, 96, 96, 192, 192, 384});

  a.input = {64, 64, 64};
  const NetworkGraph g = build_arthronet(a);
  CHECK(g.acyclic());
  CHECK(g.layer("block6.b.conv").out_features == 384);
  CHECK(g.layer("flatten").out_features == 384);
  for (const char* t : {"os", "js", "hsa"}) {
    CHECK(g.layer(std::string(t) + ".dense1").out_features == 256);
    CHECK(g.layer(std::string(t) + ".dense2").out_features == 32);
  }
  CHECK(g.layer("os.softmax").out_features == 3);
  CHECK(g.layer("js.softmax").out_features == 3);
  CHECK(g.layer("hsa.softmax").out_features == 2);

  CHECK(a.in_ablation_grid());
  ArthroNetConfig bad = a;
  bad.blocks = 5;
  bad.base_fm = 16;
  CHECK_FALSE(bad.in_ablation_grid());
  CHECK(build_arthronet(bad).layer("flatten").out_features == 64 * 8);
  bad.blocks = 0;
  CHECK_THROWS_AS(build_arthronet(bad), Error);
  bad = a;
  bad.blocks = 8;
  bad.input = {32, 32, 32};
  try {
    build_arthronet(bad);
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_error);
  }
}

TEST_CASE("classifier forward contract") {
  ArthroNetConfig cfg;
  cfg.input = {32, 32, 32};
  cfg.blocks = 7;
  cfg.base_fm = 16;
  auto net = make_arthronet<float>(cfg, 3);
  std::mt19937_64 rng(6);
  auto x = random_tensor<float>(make_dims(2, 1, 32, 32, 32), rng, 0.0, 1.0);
  Tensor<float> x0(make_dims(1, 1, 32, 32, 32));
  std::copy(x.sample(0), x.sample(0) + x0.size(), x0.data.begin());
  const auto both = forward_cls(net, x);
  const auto one = forward_cls(net, x0);
  const auto again = forward_cls(net, x0);
  for (int t = 0; t < 3; ++t) {
    CHECK(one[t].data == again[t].data);
    double s = 0.0;
    for (float p : one[t].data) {
      CHECK((p > 0.0f && p < 1.0f));
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 0; i < one[t].size(); ++i) CHECK(both[t].data[i] == doctest::Approx(one[t].data[i]).epsilon(1e-5));
  }
}

TEST_CASE("classifier backprop in double precision") {
  ArthroNetConfig cfg;
  cfg.input = {32, 32, 32};
  cfg.dropout = 0.0;
  auto net = make_arthronet<double>(cfg, 5);
  std::mt19937_64 rng(8);
  auto x = random_tensor<double>(make_dims(3, 1, 32, 32, 32), rng, 0.0, 1.0);
  std::vector<int> heads(net.heads.begin(), net.heads.end());
  CHECK(gradient_error(net.graph, x, heads, rng, 20) < 1e-3);
}

TEST_CASE("checkpoint round-trip and version check") {
  const auto dir = testutil::scratch("ckpt");
  CELUNetConfig cfg;
  cfg.levels = 2;
  cfg.base_features = 2;
  cfg.input = {12, 12, 12};
  auto net = make_celunet<float>(cfg, 1);
  std::mt19937_64 rng(2);
  auto x = random_tensor<float>(make_dims(1, 1, 12, 12, 12), rng);
  net.graph.forward({&x}, Mode::train);  // moves the running statistics
  Adam opt;
  for (auto* p : net.graph.params()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.5f);
  opt.step(net.graph.named_params());
  nlohmann::json jc = cfg;
  save_checkpoint(dir / "a.ckpt", capture(net.graph, jc, &opt, 3));
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.epoch == 3);
  CHECK(ck.adam_steps == 1);
  CHECK(ck.config.get<CELUNetConfig>().base_features == 2);
  auto other = make_celunet<float>(ck.config.get<CELUNetConfig>(), 99);
  Adam opt2;
  restore(other.graph, ck, &opt2);
  auto pa = net.graph.named_params();
  auto pb = other.graph.named_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->value.data == pb[i].second->value.data);
  }
  CHECK(opt2.first() == opt.first());
  CHECK(opt2.second() == opt.second());
  const auto ya = forward_seg(net, x), yb = forward_seg(other, x);
  CHECK(ya.region.data == yb.region.data);

  std::string bytes = read_file(dir / "a.ckpt");
  bytes[4] = 9;  // format_version
  atomic_write(dir / "b.ckpt", bytes);
  try {
    load_checkpoint(dir / "b.ckpt");
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format_error);
  }
  atomic_write(dir / "c.ckpt", bytes.substr(0, 40));
  CHECK_THROWS_AS(load_checkpoint(dir / "c.ckpt"), Error);
  std::filesystem::remove_all(dir);
}
