#include "rdgan/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace rdgan::networks {

using autodiff::Bindings;
using autodiff::Graph;
using autodiff::NodeId;

std::size_t NetSpec::input_width() const {
  return role == Role::kGenerator ? data_dim + latent_dim + time_embed_dim : 2 * data_dim + time_embed_dim;
}

void NetSpec::validate() const {
  if (data_dim < 1 || time_embed_dim < 1 || steps < 1) {
    throw std::invalid_argument("NetSpec: data_dim, time_embed_dim and steps must be at least 1");
  }
  if (role == Role::kGenerator && latent_dim < 1) throw std::invalid_argument("NetSpec: latent_dim must be at least 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("NetSpec: hidden layer widths must be at least 1");
  }
}

std::string weight_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".bias"; }

std::map<std::string, Shape> param_shapes(const NetSpec& spec) {
  std::map<std::string, Shape> shapes;
  shapes[kTimeEmbed] = {spec.steps, spec.time_embed_dim};
  std::size_t in = spec.input_width();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim();
    shapes[weight_name(l)] = {in, out};
    shapes[bias_name(l)] = {out};
    in = out;
  }
  return shapes;
}

NetParams init_net(const NetSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  NetParams p{spec, {}, std::nullopt};
  std::normal_distribution<double> normal(0.0, 1.0);
  // Draw in a fixed order (embedding, then layers front to back) so a seed
  // pins every value.
  Tensor embed({spec.steps, spec.time_embed_dim});
  for (double& v : embed.data()) v = normal(rng);
  p.live.emplace(kTimeEmbed, std::move(embed));
  std::size_t in = spec.input_width();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim();
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    Tensor w({in, out});
    for (double& v : w.data()) v = sd * normal(rng);
    p.live.emplace(weight_name(l), std::move(w));
    p.live.emplace(bias_name(l), Tensor({out}));
    in = out;
  }
  p.ema = p.live;
  return p;
}

NetNodes add_param_leaves(Graph& graph, const NetSpec& spec, const std::string& prefix, bool differentiable) {
  NetNodes nodes{spec, prefix, {}};
  for (const auto& [name, shape] : param_shapes(spec)) {
    nodes.params.emplace(name, graph.input(prefix + name, differentiable));
  }
  return nodes;
}

void bind_params(Bindings& bindings, const NetNodes& nodes, const ParamMap& params) {
  for (const auto& [name, id] : nodes.params) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("bind_params: missing parameter '" + name + "'");
    bindings.insert_or_assign(nodes.prefix + name, it->second);
  }
}

NodeId apply_net(Graph& graph, const NetNodes& nodes, const std::vector<NodeId>& data_inputs, NodeId one_hot) {
  std::vector<NodeId> parts = data_inputs;
  parts.push_back(graph.matmul(one_hot, nodes.params.at(kTimeEmbed)));
  NodeId h = graph.concat(parts);
  const std::size_t layers = nodes.spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = graph.add(graph.matmul(h, nodes.params.at(weight_name(l))), nodes.params.at(bias_name(l)));
    if (l + 1 < layers) h = graph.leaky_relu(h);
  }
  return h;
}

Tensor one_hot(std::span<const int> steps, std::size_t num_steps) {
  Tensor out({steps.size(), num_steps});
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const int t = steps[r];
    if (t < 1 || static_cast<std::size_t>(t) > num_steps) {
      throw std::out_of_range("one_hot: step " + std::to_string(t) + " outside [1, " + std::to_string(num_steps) + "]");
    }
    out[r * num_steps + static_cast<std::size_t>(t - 1)] = 1.0;
  }
  return out;
}

namespace {

void check_input(const char* op, const Tensor& x, std::size_t rows, std::size_t cols, const char* what) {
  if (x.rank() != 2 || x.shape()[0] != rows || x.shape()[1] != cols) {
    throw std::invalid_argument(std::string(op) + ": " + what + " has shape " + shape_string(x.shape()) +
                                ", expected " + shape_string({rows, cols}));
  }
}

Tensor run_net(const NetParams& p, const Tensor& first, const Tensor& second, std::span<const int> steps,
               bool use_ema) {
  Graph graph;
  const NetNodes nodes = add_param_leaves(graph, p.spec, "", false);
  const NodeId a = graph.input("in.a", false);
  const NodeId b = graph.input("in.b", false);
  const NodeId oh = graph.input("in.one_hot", false);
  apply_net(graph, nodes, {a, b}, oh);
  Bindings bindings;
  bind_params(bindings, nodes, p.weights(use_ema));
  bindings.emplace("in.a", first);
  bindings.emplace("in.b", second);
  bindings.emplace("in.one_hot", one_hot(steps, p.spec.steps));
  return graph.forward(bindings);
}

}  // namespace

Tensor gen_forward(const NetParams& p, const Tensor& x_t, const Tensor& z, std::span<const int> steps, bool use_ema) {
  if (p.spec.role != Role::kGenerator) throw std::invalid_argument("gen_forward: not a generator");
  const std::size_t rows = steps.size();
  check_input("gen_forward", x_t, rows, p.spec.data_dim, "x_t");
  check_input("gen_forward", z, rows, p.spec.latent_dim, "z");
  return run_net(p, x_t, z, steps, use_ema);
}

Tensor gen_forward(const NetParams& p, const Tensor& x_t, const Tensor& z, int t, bool use_ema) {
  const std::vector<int> steps(x_t.rows(), t);
  return gen_forward(p, x_t, z, steps, use_ema);
}

Tensor disc_forward(const NetParams& p, const Tensor& x_prev, const Tensor& x_t, std::span<const int> steps) {
  if (p.spec.role != Role::kDiscriminator) throw std::invalid_argument("disc_forward: not a discriminator");
  const std::size_t rows = steps.size();
  check_input("disc_forward", x_prev, rows, p.spec.data_dim, "x_prev");
  check_input("disc_forward", x_t, rows, p.spec.data_dim, "x_t");
  return run_net(p, x_prev, x_t, steps, false);
}

Tensor disc_forward(const NetParams& p, const Tensor& x_prev, const Tensor& x_t, int t) {
  const std::vector<int> steps(x_prev.rows(), t);
  return disc_forward(p, x_prev, x_t, steps);
}

void ema_update(NetParams& p, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("ema_update: decay must lie in [0, 1]");
  if (!p.ema) {
    p.ema = p.live;
    return;
  }
  for (auto& [name, avg] : *p.ema) {
    const Tensor& live = p.live.at(name);
    if (live.shape() != avg.shape()) throw std::logic_error("ema_update: shape drift in '" + name + "'");
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = decay * avg[i] + (1.0 - decay) * live[i];
  }
}

}  // namespace rdgan::networks
