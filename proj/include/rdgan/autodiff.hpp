#ifndef RDGAN_AUTODIFF_HPP_
#define RDGAN_AUTODIFF_HPP_

// Define-then-run reverse-mode differentiation over dense double tensors.
//
// A Graph is built once from named leaves and operations, then evaluated any
// number of times with forward(bindings). Nodes are stored in construction
// order, which is a topological order, so forward walks the node list front to
// back and backward walks it back to front.
//
// Broadcasting is restricted to the leading axes: the second operand of add,
// sub and mul may have the shape of a trailing suffix of the first operand's
// shape (a bias row, or a scalar).

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rdgan/tensor.hpp"

namespace rdgan::autodiff {

inline constexpr double kLeakySlope = 0.2;

using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;
using ScalarFn = std::function<double(double)>;

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kLeakyRelu,
  kSoftplus,
  kSigmoid,
  kSquare,
  kSum,
  kMean,
  kRowSum,
  kConcat,
  kMap,
};

const char* op_name(Op op);

class Graph {
 public:
  // Named leaf. Differentiable leaves receive gradients from backward();
  // constant leaves do not, and nothing upstream of only-constant inputs is
  // differentiated.
  NodeId input(const std::string& name, bool differentiable);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  NodeId leaky_relu(NodeId a, double slope = kLeakySlope);
  NodeId softplus(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId square(NodeId a);
  // Sum and mean reduce to a rank-0 tensor; row_sum reduces the last axis to 1.
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId row_sum(NodeId a);
  NodeId concat(const std::vector<NodeId>& parts);
  // Elementwise map with a caller-supplied derivative.
  NodeId map(NodeId a, ScalarFn fn, ScalarFn derivative, std::string label);

  // The node forward() returns; defaults to the most recently added node.
  void set_output(NodeId id);
  NodeId output() const;

  const Tensor& forward(const Bindings& bindings);
  // Gradient of sum(seed * output) for every differentiable leaf. The
  // no-argument form seeds a scalar output with 1.
  Gradients backward() const;
  Gradients backward(const Tensor& seed) const;

  const Tensor& value(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }
  std::vector<std::string> leaf_names(bool differentiable_only) const;
  bool has_leaf(const std::string& name) const { return leaves_.contains(name); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    double param = 0.0;
    bool requires_grad = false;
    std::string name;  // leaves and map labels
    ScalarFn fn;
    ScalarFn derivative;
  };

  NodeId push(Node node);
  void check_id(NodeId id) const;
  void evaluate(std::size_t index);
  void propagate(std::size_t index, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  std::size_t output_ = 0;
  bool has_output_ = false;
  bool evaluated_ = false;
};

Tensor forward(Graph& graph, const Bindings& bindings);
Gradients backward(const Graph& graph, const Tensor& seed);

// Worst relative disagreement max |g_ad - g_fd| / (|g_fd| + 1e-8) between the
// backward gradient and central differences with the given step, over every
// element of every differentiable leaf. The output must be a single value.
double check_gradient(Graph& graph, const Bindings& bindings, double step);

}  // namespace rdgan::autodiff

#endif  // RDGAN_AUTODIFF_HPP_
