#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nets/ops.hpp"

namespace ghc::nn {

struct LayerSpec {
  int id = 0;
  std::string name;
  std::string kind;
  int kernel = 0;
  int stride = 1;
  int in_features = 0;
  int out_features = 0;
  std::vector<int> inputs;
  Dims out_dims;
  std::size_t params = 0;
};

/// Structural description of a built network.
struct NetworkGraph {
  std::vector<LayerSpec> layers;
  std::size_t parameter_count = 0;

  const LayerSpec& layer(const std::string& name) const;
  bool acyclic() const;
  /// Every multi-input join (concat/subtract) sees equal spatial shapes.
  bool skips_consistent() const;
};

/// Static DAG. Nodes are added in topological order, so forward walks ids
/// upward and backward walks them downward.
template <typename T>
class Graph {
 public:
  int input(const std::string& name, const Dims& dims);
  int add(const std::string& name, std::unique_ptr<Op<T>> op, std::vector<int> inputs);
  void set_output(const std::string& name, int id) { outputs_[name] = id; }
  int output(const std::string& name) const;
  int find(const std::string& name) const;

  /// Inputs are given in the order the input nodes were declared. In
  /// inference mode intermediate values are freed once their consumers ran.
  void forward(const std::vector<const Tensor<T>*>& inputs, Mode mode);
  /// Keeps every intermediate in inference mode too (needed to backprop through it).
  void keep_intermediates(bool keep) { keep_ = keep; }
  const Tensor<T>& value(int id) const { return nodes_.at(id).value; }
  Tensor<T>& grad(int id);
  /// Backpropagates from whatever output grads were seeded via grad().
  void backward();
  void zero_param_grads();

  std::vector<Param<T>*> params();
  std::vector<std::pair<std::string, Param<T>*>> named_params();
  std::size_t parameter_count();
  NetworkGraph describe();
  Op<T>& op(int id) { return *nodes_.at(id).op; }
  const Dims& dims(int id) const { return nodes_.at(id).dims; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string name;
    std::unique_ptr<Op<T>> op;  // null for inputs
    std::vector<int> inputs;
    Dims dims;
    Tensor<T> value;
    Tensor<T> grad;
    int consumers = 0;
  };
  std::vector<Node> nodes_;
  std::vector<int> input_ids_;
  std::map<std::string, int> outputs_;
  std::map<std::string, int> by_name_;
  bool keep_ = false;
};

}  // namespace ghc::nn
