#ifndef RDGAN_TRAINER_HPP_
#define RDGAN_TRAINER_HPP_

// Per-step adversarial training of a few-step diffusion generator.
//
// Three objectives share one pipeline. Every iteration draws x0 from the
// dataset, a step t per row, a real pair (x_{t-1}, x_t) from the forward
// process, a generator proposal x0_hat = G(x_t, z, t) and a fake
// x_{t-1} ~ q(x_{t-1} | x_t, x0_hat). Then:
//
//   UOT rows    L_D = Psi1*(D_fake - c(x_t, x0_hat)) + Psi2*(-D_real)
//               L_G = c(x_t, x0_hat) - D_fake
//   GAN rows    L_D = softplus(D_fake) + softplus(-D_real)
//               L_G = softplus(-D_fake)
//
// with c(x, y) = tau |x - y|^2. Losses are averaged over the batch. A
// partial-timestep run uses the UOT rows for t <= k and GAN rows above.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rdgan/autodiff.hpp"
#include "rdgan/conjugates.hpp"
#include "rdgan/data_metrics.hpp"
#include "rdgan/diffusion.hpp"
#include "rdgan/networks.hpp"

namespace rdgan::trainer {

using conjugates::ConjugateKind;
using networks::NetParams;
using networks::ParamMap;
using Rng = std::mt19937_64;

struct DdganLoss {
  friend bool operator==(const DdganLoss&, const DdganLoss&) = default;
};
struct RdganLoss {
  ConjugateKind psi1 = ConjugateKind::softplus();
  ConjugateKind psi2 = ConjugateKind::softplus();
  double tau = 1e-3;
  friend bool operator==(const RdganLoss&, const RdganLoss&) = default;
};
struct PartialLoss {
  int k = 0;
  RdganLoss inner;
  friend bool operator==(const PartialLoss&, const PartialLoss&) = default;
};
using LossKind = std::variant<DdganLoss, RdganLoss, PartialLoss>;

std::string describe(const LossKind& loss);
// Whether rows at step t use the UOT objective.
bool uses_uot(const LossKind& loss, int t);

struct TrainConfig {
  LossKind loss = RdganLoss{};
  int steps = 4;
  double beta_min = diffusion::kDefaultBetaMin;
  double beta_max = diffusion::kDefaultBetaMax;
  double lr_g = 1.6e-4;
  double lr_d = 1.25e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double r1_gamma = 0.02;
  int lazy_reg_every = 15;
  double ema_decay = 0.999;
  int batch_size = 256;
  long iters = 20000;
  std::uint64_t seed = 0;
  data::MixtureSpec dataset = data::MixtureSpec::toy_1d();
  std::vector<std::size_t> hidden_dims{128, 128};
  // 0 picks 4 for 1D data and 8 otherwise.
  std::size_t latent_dim = 0;
  std::size_t time_embed_dim = 16;
  int probe_every = 500;
  int probe_size = 2048;

  void validate() const;
  std::size_t effective_latent_dim() const;
  networks::NetSpec generator_spec() const;
  networks::NetSpec discriminator_spec() const;
  diffusion::DiffusionSchedule schedule() const;
  // Labels samples for the outlier metric; empty when the dataset has no
  // outlier component.
  std::optional<data::OutlierRule> outlier_rule() const;
};

struct AdamState {
  ParamMap m;
  ParamMap v;
  long step = 0;
};

// One bias-corrected Adam step with epsilon 1e-8. A zero gradient on fresh
// state leaves the parameters unchanged.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr, double beta1, double beta2);

struct TrainState {
  NetParams generator;
  NetParams discriminator;
  AdamState adam_g;
  AdamState adam_d;
  long iteration = 0;
  Rng rng;
};

TrainState init_state(const TrainConfig& cfg);

// One minibatch of sampled randomness. Everything the losses need is fixed
// here so that loss evaluation is a pure function of (state, batch).
struct Batch {
  Tensor x0;
  std::vector<int> steps;  // t per row, 1-based
  Tensor x_prev;           // real x_{t-1}
  Tensor x_t;
  Tensor z;
  Tensor posterior_noise;  // noise for the fake x_{t-1}
};

Batch draw_batch(const TrainConfig& cfg, const diffusion::DiffusionSchedule& schedule, Rng& rng);

// tau * sum_j (x_j - y_j)^2 per row, shape [rows, 1].
Tensor cost(double tau, const Tensor& x, const Tensor& y);

// Per-row objective values, written out for direct evaluation.
double rdgan_disc_row(const RdganLoss& loss, double cost, double d_fake, double d_real);
double rdgan_gen_row(double cost, double d_fake);
double ddgan_disc_row(double d_fake, double d_real);
double ddgan_gen_row(double d_fake);

struct LossEval {
  double value = 0.0;
  ParamMap grad_g;  // zero tensors when the generator is frozen
  ParamMap grad_d;  // zero tensors when the discriminator is frozen
};

// A loss wired into a graph together with the bindings that evaluate it; the
// parameters of exactly one net are differentiable leaves.
struct LossGraph {
  autodiff::Graph graph;
  autodiff::Bindings bindings;
};

// Which objective each row uses.
enum class RowMode { kFollowConfig, kAllUot, kAllGan };

LossGraph build_discriminator_graph(const TrainConfig& cfg, const TrainState& state, const Batch& batch,
                                    RowMode mode = RowMode::kFollowConfig);
LossGraph build_generator_graph(const TrainConfig& cfg, const TrainState& state, const Batch& batch,
                                RowMode mode = RowMode::kFollowConfig);

LossEval discriminator_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch,
                            RowMode mode = RowMode::kFollowConfig);
LossEval generator_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch,
                        RowMode mode = RowMode::kFollowConfig);

// Algorithm-level entry points. The RDGAN forms use the UOT objective on every
// row with the conjugates and tau from cfg.loss (the inner loss for a partial
// config); the DDGAN form uses the GAN objective on every row.
LossEval rdgan_disc_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch);
LossEval rdgan_gen_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch);
std::pair<LossEval, LossEval> ddgan_losses(const TrainConfig& cfg, const TrainState& state, const Batch& batch);

// r1_gamma / 2 * mean_i |grad_{x_{t-1}} D(x_{t-1}, x_t, t)|^2 on the real
// pair. The gradient with respect to the discriminator parameters comes from a
// forward difference of D along the input gradient with step r1_fd_step,
// which avoids second-order differentiation.
inline constexpr double kR1FiniteDifferenceStep = 1e-3;
LossEval r1_penalty(const TrainConfig& cfg, const TrainState& state, const Batch& batch);

// Reverse chain: x_T ~ N(0, I); for t = T..1, x0_hat = G(x_t, z, t) and
// x_{t-1} ~ q(x_{t-1} | x_t, x0_hat). Returns x_0 as an [n, dim] tensor.
Tensor sample(const NetParams& generator, const diffusion::DiffusionSchedule& schedule, std::size_t n, bool use_ema,
              Rng& rng);

struct MetricsRow {
  long iter = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double outlier_fraction = 0.0;
  double w1_clean = 0.0;
};

struct Failure {
  long iteration = 0;
  std::string phase;  // "discriminator" or "generator"
  std::string loss;   // describe(cfg.loss)
  double loss_d = 0.0;
  double loss_g = 0.0;
  std::string reason;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
  std::optional<Failure> failure;
};

// Runs cfg.iters iterations of one discriminator step (plus R1 every
// lazy_reg_every-th step) followed by one generator step and an EMA update.
// A non-finite loss or gradient stops the run; the result then carries the
// failure and the metrics logged so far.
TrainResult train(const TrainConfig& cfg);
TrainResult train(const TrainConfig& cfg, TrainState state);

// Probe statistics: outlier fraction of `n` EMA samples and their marginal W1
// to an equally sized clean draw.
MetricsRow probe(const TrainConfig& cfg, const TrainState& state, std::size_t n, Rng& rng);

}  // namespace rdgan::trainer

#endif  // RDGAN_TRAINER_HPP_
