#ifndef RDGAN_NETWORKS_HPP_
#define RDGAN_NETWORKS_HPP_

// Toy-scale MLPs for the conditional generator G(x_t, z, t) -> x0_hat and the
// discriminator D(x_{t-1}, x_t, t) -> logit.
//
// Both nets feed concat(data inputs, time_embed[t]) through affine layers
// with leaky-ReLU(0.2) between them and a linear final layer. The time
// embedding is a learned T x time_embed_dim table, looked up by multiplying a
// one-hot row matrix into it so the lookup stays inside the autodiff graph.

#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdgan/autodiff.hpp"
#include "rdgan/tensor.hpp"

namespace rdgan::networks {

enum class Role { kGenerator, kDiscriminator };

struct NetSpec {
  Role role = Role::kGenerator;
  std::size_t data_dim = 1;
  std::vector<std::size_t> hidden_dims{128, 128};
  std::size_t latent_dim = 4;  // generator only
  std::size_t time_embed_dim = 16;
  std::size_t steps = 4;  // rows of the time-embedding table

  // Width of the first layer's input.
  std::size_t input_width() const;
  std::size_t output_dim() const { return role == Role::kGenerator ? data_dim : 1; }
  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  void validate() const;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Parameter tensors keyed "time_embed", "fc<i>.weight" ([in, out]) and
// "fc<i>.bias" ([out]).
using ParamMap = std::map<std::string, Tensor>;

struct NetParams {
  NetSpec spec;
  ParamMap live;
  std::optional<ParamMap> ema;

  const ParamMap& weights(bool use_ema) const { return use_ema && ema ? *ema : live; }
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);
inline constexpr const char* kTimeEmbed = "time_embed";

// He-normal weights N(0, 2 / fan_in), zero biases, N(0, 1) time embedding.
// The EMA copy starts equal to the live parameters.
NetParams init_net(const NetSpec& spec, std::mt19937_64& rng);

// Expected shape of every parameter.
std::map<std::string, Shape> param_shapes(const NetSpec& spec);

// Parameter leaves of one net inside a graph, named prefix + parameter name.
struct NetNodes {
  NetSpec spec;
  std::string prefix;
  std::map<std::string, autodiff::NodeId> params;
};

NetNodes add_param_leaves(autodiff::Graph& graph, const NetSpec& spec, const std::string& prefix,
                          bool differentiable);
void bind_params(autodiff::Bindings& bindings, const NetNodes& nodes, const ParamMap& params);

// Applies the net to concat(data_inputs..., one_hot x time_embed). For a
// generator the data inputs are (x_t, z); for a discriminator (x_prev, x_t).
autodiff::NodeId apply_net(autodiff::Graph& graph, const NetNodes& nodes,
                           const std::vector<autodiff::NodeId>& data_inputs, autodiff::NodeId one_hot);

// One-hot rows for 1-based steps; shape [steps.size(), num_steps].
Tensor one_hot(std::span<const int> steps, std::size_t num_steps);

// Per-row step forms and a single-step convenience form.
Tensor gen_forward(const NetParams& p, const Tensor& x_t, const Tensor& z, std::span<const int> steps,
                   bool use_ema = false);
Tensor gen_forward(const NetParams& p, const Tensor& x_t, const Tensor& z, int t, bool use_ema = false);
Tensor disc_forward(const NetParams& p, const Tensor& x_prev, const Tensor& x_t, std::span<const int> steps);
Tensor disc_forward(const NetParams& p, const Tensor& x_prev, const Tensor& x_t, int t);

// ema <- decay * ema + (1 - decay) * live. Creates the EMA copy from live if
// it is missing.
void ema_update(NetParams& p, double decay);

}  // namespace rdgan::networks

#endif  // RDGAN_NETWORKS_HPP_
