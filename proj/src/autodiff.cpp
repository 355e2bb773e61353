#include "rdgan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace rdgan::autodiff {
namespace {

double stable_softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b, const char* what) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + what + " (shapes " + shape_string(a) + " and " +
                              shape_string(b) + ")");
}

// b broadcasts against a when b's shape is a trailing suffix of a's shape.
void check_broadcast(Op op, const Shape& a, const Shape& b) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    shape_error(op, a, b, "second operand must match a trailing suffix of the first");
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// C[m,k] += G[m,n] * B[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c, M, K).noalias() += ConstMap(g, M, N) * ConstMap(b, K, N).transpose();
}

// C[k,n] += A[m,k]^T * G[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(c, K, N).noalias() += ConstMap(a, M, K).transpose() * ConstMap(g, M, N);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kRowSum: return "row_sum";
    case Op::kConcat: return "concat";
    case Op::kMap: return "map";
  }
  return "unknown";
}

NodeId Graph::push(Node node) {
  for (std::size_t in : node.inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

void Graph::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) throw std::out_of_range("Graph: unknown node id " + std::to_string(id.index));
}

NodeId Graph::input(const std::string& name, bool differentiable) {
  if (leaves_.contains(name)) throw std::invalid_argument("Graph: duplicate leaf '" + name + "'");
  Node node;
  node.op = Op::kLeaf;
  node.name = name;
  node.requires_grad = differentiable;
  const NodeId id = push(std::move(node));
  leaves_.emplace(name, id.index);
  return id;
}

#define RDGAN_UNARY(method, opcode)      \
  NodeId Graph::method(NodeId a) {       \
    check_id(a);                         \
    Node node;                           \
    node.op = opcode;                    \
    node.inputs = {a.index};             \
    return push(std::move(node));        \
  }

RDGAN_UNARY(softplus, Op::kSoftplus)
RDGAN_UNARY(sigmoid, Op::kSigmoid)
RDGAN_UNARY(square, Op::kSquare)
RDGAN_UNARY(sum, Op::kSum)
RDGAN_UNARY(mean, Op::kMean)
RDGAN_UNARY(row_sum, Op::kRowSum)

#undef RDGAN_UNARY

#define RDGAN_BINARY(method, opcode)     \
  NodeId Graph::method(NodeId a, NodeId b) { \
    check_id(a);                         \
    check_id(b);                         \
    Node node;                           \
    node.op = opcode;                    \
    node.inputs = {a.index, b.index};    \
    return push(std::move(node));        \
  }

RDGAN_BINARY(matmul, Op::kMatMul)
RDGAN_BINARY(add, Op::kAdd)
RDGAN_BINARY(sub, Op::kSub)
RDGAN_BINARY(mul, Op::kMul)

#undef RDGAN_BINARY

NodeId Graph::scale(NodeId a, double factor) {
  check_id(a);
  Node node;
  node.op = Op::kScale;
  node.inputs = {a.index};
  node.param = factor;
  return push(std::move(node));
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
  check_id(a);
  Node node;
  node.op = Op::kLeakyRelu;
  node.inputs = {a.index};
  node.param = slope;
  return push(std::move(node));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Node node;
  node.op = Op::kConcat;
  for (NodeId p : parts) {
    check_id(p);
    node.inputs.push_back(p.index);
  }
  return push(std::move(node));
}

NodeId Graph::map(NodeId a, ScalarFn fn, ScalarFn derivative, std::string label) {
  check_id(a);
  Node node;
  node.op = Op::kMap;
  node.inputs = {a.index};
  node.fn = std::move(fn);
  node.derivative = std::move(derivative);
  node.name = std::move(label);
  return push(std::move(node));
}

void Graph::set_output(NodeId id) {
  check_id(id);
  output_ = id.index;
  has_output_ = true;
}

NodeId Graph::output() const {
  if (nodes_.empty()) throw std::logic_error("Graph: empty graph has no output");
  return NodeId{has_output_ ? output_ : nodes_.size() - 1};
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  if (!evaluated_) throw std::logic_error("Graph: value requested before forward");
  return nodes_[id.index].value;
}

std::vector<std::string> Graph::leaf_names(bool differentiable_only) const {
  std::vector<std::string> names;
  for (const auto& [name, index] : leaves_) {
    if (!differentiable_only || nodes_[index].requires_grad) names.push_back(name);
  }
  return names;
}

const Tensor& Graph::forward(const Bindings& bindings) {
  evaluated_ = false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (node.op == Op::kLeaf) {
      auto it = bindings.find(node.name);
      if (it == bindings.end()) throw std::invalid_argument("forward: leaf '" + node.name + "' is not bound");
      node.value = it->second;
    } else {
      evaluate(i);
    }
  }
  evaluated_ = true;
  return nodes_[output().index].value;
}

void Graph::evaluate(std::size_t index) {
  Node& node = nodes_[index];
  const Op op = node.op;
  const Tensor& a = nodes_[node.inputs[0]].value;
  switch (op) {
    case Op::kMatMul: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      if (a.rank() != 2 || b.rank() != 2) shape_error(op, a.shape(), b.shape(), "operands must be rank 2");
      if (a.shape()[1] != b.shape()[0]) shape_error(op, a.shape(), b.shape(), "inner dimensions differ");
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      Tensor out({m, n});
      gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
      node.value = std::move(out);
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      check_broadcast(op, a.shape(), b.shape());
      Tensor out(a.shape());
      const std::size_t nb = b.size();
      if (nb == 0) {
        node.value = std::move(out);
        return;
      }
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i % nb];
        out[i] = op == Op::kAdd ? x + y : op == Op::kSub ? x - y : x * y;
      }
      node.value = std::move(out);
      return;
    }
    case Op::kConcat: {
      std::size_t total = 0;
      const std::size_t rows = a.rows();
      for (std::size_t in : node.inputs) {
        const Tensor& t = nodes_[in].value;
        if (t.rank() == 0 || t.rows() != rows || t.rank() != a.rank() ||
            !std::equal(a.shape().begin(), a.shape().end() - 1, t.shape().begin())) {
          shape_error(op, a.shape(), t.shape(), "leading axes differ");
        }
        total += t.cols();
      }
      Shape shape = a.shape();
      shape.back() = total;
      Tensor out(shape);
      std::size_t offset = 0;
      for (std::size_t in : node.inputs) {
        const Tensor& t = nodes_[in].value;
        const std::size_t c = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(t.data().data() + r * c, c, out.data().data() + r * total + offset);
        }
        offset += c;
      }
      node.value = std::move(out);
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      double acc = 0.0;
      for (double v : a.data()) acc += v;
      if (op == Op::kMean) acc /= static_cast<double>(a.size());
      node.value = Tensor::scalar(acc);
      return;
    }
    case Op::kRowSum: {
      Shape shape = a.shape();
      if (shape.empty()) shape.push_back(1);
      shape.back() = 1;
      Tensor out(shape);
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += a[r * c + j];
        out[r] = acc;
      }
      node.value = std::move(out);
      return;
    }
    default:
      break;
  }
  Tensor out(a.shape());
  const double slope = node.param;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    switch (op) {
      case Op::kScale: out[i] = node.param * x; break;
      case Op::kLeakyRelu: out[i] = x > 0.0 ? x : slope * x; break;
      case Op::kSoftplus: out[i] = stable_softplus(x); break;
      case Op::kSigmoid: out[i] = stable_sigmoid(x); break;
      case Op::kSquare: out[i] = x * x; break;
      case Op::kMap: out[i] = node.fn(x); break;
      default: throw std::logic_error(std::string("forward: unhandled op ") + op_name(op));
    }
  }
  node.value = std::move(out);
}

Gradients Graph::backward() const {
  const Tensor& out = nodes_.empty() ? Tensor() : nodes_[output().index].value;
  if (!evaluated_) throw std::logic_error("backward: forward has not been run");
  return backward(Tensor(out.shape(), 1.0));
}

Gradients Graph::backward(const Tensor& seed) const {
  if (!evaluated_) throw std::logic_error("backward: forward has not been run");
  const std::size_t out = output().index;
  if (seed.shape() != nodes_[out].value.shape()) {
    throw std::invalid_argument("backward: seed shape " + shape_string(seed.shape()) + " differs from output shape " +
                                shape_string(nodes_[out].value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  grads[out] = seed;
  touched[out] = true;
  for (std::size_t i = out + 1; i-- > 0;) {
    if (!touched[i] || !nodes_[i].requires_grad || nodes_[i].op == Op::kLeaf) continue;
    for (std::size_t in : nodes_[i].inputs) {
      if (nodes_[in].requires_grad && !touched[in]) {
        grads[in] = Tensor(nodes_[in].value.shape());
        touched[in] = true;
      }
    }
    propagate(i, grads);
  }
  Gradients result;
  for (const auto& [name, index] : leaves_) {
    if (!nodes_[index].requires_grad) continue;
    result.emplace(name, touched[index] ? std::move(grads[index]) : Tensor(nodes_[index].value.shape()));
  }
  return result;
}

void Graph::propagate(std::size_t index, std::vector<Tensor>& grads) const {
  const Node& node = nodes_[index];
  const Tensor& g = grads[index];
  const std::size_t ia = node.inputs[0];
  const Node& na = nodes_[ia];
  const Tensor& a = na.value;
  switch (node.op) {
    case Op::kMatMul: {
      const std::size_t ib = node.inputs[1];
      const Tensor& b = nodes_[ib].value;
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      if (na.requires_grad) gemm_nt(g.data().data(), b.data().data(), grads[ia].data().data(), m, k, n);
      if (nodes_[ib].requires_grad) gemm_tn(a.data().data(), g.data().data(), grads[ib].data().data(), m, k, n);
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const std::size_t ib = node.inputs[1];
      const Tensor& b = nodes_[ib].value;
      const std::size_t nb = b.size();
      if (nb == 0) return;
      const bool ga = na.requires_grad, gb = nodes_[ib].requires_grad;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double gi = g[i];
        if (node.op == Op::kMul) {
          if (ga) grads[ia][i] += gi * b[i % nb];
          if (gb) grads[ib][i % nb] += gi * a[i];
        } else {
          if (ga) grads[ia][i] += gi;
          if (gb) grads[ib][i % nb] += node.op == Op::kAdd ? gi : -gi;
        }
      }
      return;
    }
    case Op::kConcat: {
      const std::size_t total = node.value.cols();
      const std::size_t rows = node.value.rows();
      std::size_t offset = 0;
      for (std::size_t in : node.inputs) {
        const std::size_t c = nodes_[in].value.cols();
        if (nodes_[in].requires_grad) {
          Tensor& gin = grads[in];
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) gin[r * c + j] += g[r * total + offset + j];
          }
        }
        offset += c;
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      double gv = g[0];
      if (node.op == Op::kMean) gv /= static_cast<double>(a.size());
      for (double& v : grads[ia].data()) v += gv;
      return;
    }
    case Op::kRowSum: {
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) grads[ia][r * c + j] += g[r];
      }
      return;
    }
    default:
      break;
  }
  Tensor& ga = grads[ia];
  const Tensor& y = node.value;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    double d = 0.0;
    switch (node.op) {
      case Op::kScale: d = node.param; break;
      case Op::kLeakyRelu: d = x > 0.0 ? 1.0 : node.param; break;
      case Op::kSoftplus: d = stable_sigmoid(x); break;
      case Op::kSigmoid: d = y[i] * (1.0 - y[i]); break;
      case Op::kSquare: d = 2.0 * x; break;
      case Op::kMap: d = node.derivative(x); break;
      default: throw std::logic_error(std::string("backward: unhandled op ") + op_name(node.op));
    }
    ga[i] += g[i] * d;
  }
}

Tensor forward(Graph& graph, const Bindings& bindings) { return graph.forward(bindings); }

Gradients backward(const Graph& graph, const Tensor& seed) { return graph.backward(seed); }

double check_gradient(Graph& graph, const Bindings& bindings, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");
  const Tensor& out = graph.forward(bindings);
  if (out.size() != 1) {
    throw std::invalid_argument("check_gradient: output must be a single value, got shape " +
                                shape_string(out.shape()));
  }
  const Gradients analytic = graph.backward(Tensor(out.shape(), 1.0));
  Bindings probe = bindings;
  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    Tensor& x = probe.at(name);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + step;
      const double up = graph.forward(probe).item();
      x[i] = saved - step;
      const double down = graph.forward(probe).item();
      x[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(grad[i] - fd) / (std::abs(fd) + 1e-8));
    }
  }
  graph.forward(bindings);
  return worst;
}

}  // namespace rdgan::autodiff
