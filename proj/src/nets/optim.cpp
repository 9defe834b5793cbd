#include "nets/optim.hpp"

#include <cmath>
#include <cstring>

#include "core/fsutil.hpp"

namespace ghc::nn {

void Adam::step(std::vector<std::pair<std::string, Param<float>*>> params, float grad_scale) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float step = static_cast<float>(cfg_.lr * std::sqrt(c2) / c1);
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float eps = static_cast<float>(cfg_.eps * std::sqrt(c2));
  for (auto& [name, p] : params) {
    if (!p->trainable) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    const std::size_t n = p->value.size();
    if (m.size() != n) m.assign(n, 0.0f);
    if (v.size() != n) v.assign(n, 0.0f);
    float* w = p->value.data.data();
    const float* g = p->grad.data.data();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i] * grad_scale;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      w[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

Checkpoint capture(Graph<float>& g, const nlohmann::json& config, const Adam* opt, int epoch) {
  Checkpoint ck;
  ck.config = config;
  ck.epoch = epoch;
  for (auto& [name, p] : g.named_params()) ck.tensors[name] = p->value.data;
  if (opt) {
    ck.adam_m = opt->first();
    ck.adam_v = opt->second();
    ck.adam_steps = opt->steps();
  }
  return ck;
}

void restore(Graph<float>& g, const Checkpoint& ck, Adam* opt) {
  for (auto& [name, p] : g.named_params()) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) fail(ErrorCode::format_error, "checkpoint lacks tensor " + name);
    if (it->second.size() != p->value.size()) fail(ErrorCode::shape_error, "checkpoint tensor " + name + " has wrong size");
    p->value.data = it->second;
  }
  if (opt) {
    opt->first() = ck.adam_m;
    opt->second() = ck.adam_v;
    opt->set_steps(ck.adam_steps);
  }
}

namespace {

constexpr char kMagic[4] = {'G', 'H', 'C', 'K'};

template <typename V>
void put(std::string& out, V v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(V));
}

void put_map(std::string& out, const std::map<std::string, std::vector<float>>& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, values] : m) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, values.size());
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  }
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (buf.size() - pos < n) fail(ErrorCode::format_error, "checkpoint truncated");
  }
  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, buf.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::map<std::string, std::vector<float>> map() {
    std::map<std::string, std::vector<float>> m;
    const auto count = get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = bytes(get<std::uint32_t>());
      const auto n = get<std::uint64_t>();
      if (n > (buf.size() - pos) / sizeof(float)) fail(ErrorCode::format_error, "checkpoint truncated");
      std::vector<float> v(n);
      std::memcpy(v.data(), buf.data() + pos, n * sizeof(float));
      pos += n * sizeof(float);
      m.emplace(std::move(name), std::move(v));
    }
    return m;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ck.format_version);
  const std::string cfg = ck.config.dump();
  put<std::uint64_t>(out, cfg.size());
  out += cfg;
  put<std::int32_t>(out, ck.epoch);
  put<std::int64_t>(out, ck.adam_steps);
  put_map(out, ck.tensors);
  put_map(out, ck.adam_m);
  put_map(out, ck.adam_v);
  atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4)) fail(ErrorCode::format_error, "not a checkpoint: " + path.string());
  Checkpoint ck;
  ck.format_version = r.get<std::uint32_t>();
  if (ck.format_version != kCheckpointVersion) {
    fail(ErrorCode::format_error, "checkpoint format_version " + std::to_string(ck.format_version) + " unsupported (expected " +
                                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto cfg_len = r.get<std::uint64_t>();
  if (cfg_len > buf.size()) fail(ErrorCode::format_error, "checkpoint truncated");
  try {
    ck.config = nlohmann::json::parse(r.bytes(cfg_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format_error, std::string("checkpoint config: ") + e.what());
  }
  ck.epoch = r.get<std::int32_t>();
  ck.adam_steps = r.get<std::int64_t>();
  ck.tensors = r.map();
  ck.adam_m = r.map();
  ck.adam_v = r.map();
  return ck;
}

}  // namespace ghc::nn
