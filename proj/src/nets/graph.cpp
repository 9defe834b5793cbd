#include "nets/graph.hpp"

#include <algorithm>

namespace ghc::nn {

const LayerSpec& NetworkGraph::layer(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  fail(ErrorCode::invalid_argument, "no layer named " + name);
}

bool NetworkGraph::acyclic() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id != static_cast<int>(i)) return false;
    for (int in : layers[i].inputs) {
      if (in < 0 || in >= layers[i].id) return false;
    }
  }
  return true;
}

bool NetworkGraph::skips_consistent() const {
  for (const auto& l : layers) {
    if (l.kind != "concat" && l.kind != "subtract") continue;
    for (int in : l.inputs) {
      if (!layers[in].out_dims.same_spatial(l.out_dims)) return false;
    }
  }
  return true;
}

template <typename T>
int Graph<T>::input(const std::string& name, const Dims& dims) {
  Node n;
  n.name = name;
  n.dims = dims;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  input_ids_.push_back(id);
  by_name_[name] = id;
  return id;
}

template <typename T>
int Graph<T>::add(const std::string& name, std::unique_ptr<Op<T>> op, std::vector<int> inputs) {
  if (by_name_.count(name)) fail(ErrorCode::invalid_argument, "duplicate node name " + name);
  std::vector<Dims> in_dims;
  for (int id : inputs) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) fail(ErrorCode::invalid_argument, "bad node input");
    in_dims.push_back(nodes_[id].dims);
  }
  Node n;
  n.name = name;
  n.dims = op->infer_dims(in_dims);
  n.op = std::move(op);
  n.inputs = std::move(inputs);
  for (int id : n.inputs) nodes_[id].consumers++;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  by_name_[name] = id;
  return id;
}

template <typename T>
int Graph<T>::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) fail(ErrorCode::invalid_argument, "no output named " + name);
  return it->second;
}

template <typename T>
int Graph<T>::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail(ErrorCode::invalid_argument, "no node named " + name);
  return it->second;
}

template <typename T>
void Graph<T>::forward(const std::vector<const Tensor<T>*>& inputs, Mode mode) {
  if (inputs.size() != input_ids_.size()) fail(ErrorCode::shape_error, "graph input count mismatch");
  int batch = -1;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Node& n = nodes_[input_ids_[k]];
    Dims want = n.dims;
    want.d[0] = inputs[k]->dims.n();
    if (!(inputs[k]->dims == want) || inputs[k]->dims.n() < 1) {
      fail(ErrorCode::shape_error, "input " + n.name + " expects " + n.dims.str() + ", got " + inputs[k]->dims.str());
    }
    if (batch >= 0 && batch != want.n()) fail(ErrorCode::shape_error, "inputs disagree on batch size");
    batch = want.n();
    n.value = *inputs[k];
  }
  std::vector<int> pending(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) pending[i] = nodes_[i].consumers;
  std::vector<bool> is_output(nodes_.size(), false);
  for (const auto& [name, id] : outputs_) is_output[id] = true;

  std::vector<const Tensor<T>*> in;
  for (auto& n : nodes_) {
    n.grad.release();
    if (!n.op) continue;
    in.clear();
    for (int id : n.inputs) in.push_back(&nodes_[id].value);
    n.op->forward(in, n.value, mode);
    if (mode != Mode::infer || keep_) continue;
    for (int id : n.inputs) {
      if (--pending[id] == 0 && !is_output[id]) nodes_[id].value.release();
    }
  }
}

template <typename T>
Tensor<T>& Graph<T>::grad(int id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad.resize(n.value.dims);
  return n.grad;
}

template <typename T>
void Graph<T>::backward() {
  std::vector<const Tensor<T>*> in;
  std::vector<Tensor<T>*> gin;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.op || n.grad.empty()) continue;
    in.clear();
    gin.clear();
    for (int id : n.inputs) {
      in.push_back(&nodes_[id].value);
      gin.push_back(nodes_[id].op ? &grad(id) : nullptr);
    }
    n.op->backward(in, n.value, n.grad, gin);
    n.grad.release();
  }
}

template <typename T>
void Graph<T>::zero_param_grads() {
  for (auto* p : params()) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
}

template <typename T>
std::vector<Param<T>*> Graph<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& n : nodes_) {
    if (!n.op) continue;
    for (auto* p : n.op->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Param<T>*>> Graph<T>::named_params() {
  std::vector<std::pair<std::string, Param<T>*>> out;
  for (auto& n : nodes_) {
    if (!n.op) continue;
    for (auto* p : n.op->params()) out.emplace_back(n.name + "." + p->name, p);
  }
  return out;
}

template <typename T>
std::size_t Graph<T>::parameter_count() {
  std::size_t total = 0;
  for (auto* p : params()) {
    if (p->trainable) total += p->value.size();
  }
  return total;
}

template <typename T>
NetworkGraph Graph<T>::describe() {
  NetworkGraph g;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    LayerSpec l;
    l.id = static_cast<int>(i);
    l.name = n.name;
    l.kind = n.op ? n.op->kind() : "input";
    l.kernel = n.op ? n.op->kernel() : 0;
    l.stride = n.op ? n.op->stride() : 1;
    l.inputs = n.inputs;
    l.out_dims = n.dims;
    l.out_features = n.dims.c();
    for (int id : n.inputs) l.in_features += nodes_[id].dims.c();
    if (n.op) {
      for (auto* p : n.op->params()) {
        if (p->trainable) l.params += p->value.size();
      }
    }
    g.parameter_count += l.params;
    g.layers.push_back(std::move(l));
  }
  return g;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ghc::nn
