#include "rdgan/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace rdgan::trainer {

using autodiff::Bindings;
using autodiff::Graph;
using autodiff::NodeId;
using diffusion::DiffusionSchedule;
using networks::NetNodes;

namespace {

constexpr double kAdamEpsilon = 1e-8;
constexpr std::size_t kSampleChunk = 4096;

const RdganLoss* uot_params(const LossKind& loss) {
  if (const auto* r = std::get_if<RdganLoss>(&loss)) return r;
  if (const auto* p = std::get_if<PartialLoss>(&loss)) return &p->inner;
  return nullptr;
}

const RdganLoss& require_uot_params(const LossKind& loss) {
  const RdganLoss* r = uot_params(loss);
  if (!r) throw std::invalid_argument("the configured loss has no UOT conjugates (got " + describe(loss) + ")");
  return *r;
}

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t c = x.cols();
  Tensor out({rows.size(), c});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t j = 0; j < c; ++j) out[k * c + j] = x[rows[k] * c + j];
  }
  return out;
}

std::vector<int> take_steps(const std::vector<int>& steps, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(steps[r]);
  return out;
}

struct RowSplit {
  std::vector<std::size_t> uot;
  std::vector<std::size_t> gan;
};

RowSplit split_rows(const LossKind& loss, const std::vector<int>& steps, RowMode mode) {
  RowSplit split;
  for (std::size_t r = 0; r < steps.size(); ++r) {
    bool uot = false;
    switch (mode) {
      case RowMode::kFollowConfig: uot = uses_uot(loss, steps[r]); break;
      case RowMode::kAllUot: uot = true; break;
      case RowMode::kAllGan: uot = false; break;
    }
    (uot ? split.uot : split.gan).push_back(r);
  }
  return split;
}

NodeId conjugate_node(Graph& g, NodeId x, const ConjugateKind& kind) {
  return g.map(
      x, [kind](double v) { return conjugates::conjugate_eval(kind, v); },
      [kind](double v) { return conjugates::conjugate_grad(kind, v); }, conjugates::to_string(kind));
}

Tensor fill_normal(Shape shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = normal(rng);
  return t;
}

ParamMap zeros_like(const ParamMap& params) {
  ParamMap out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape()));
  return out;
}

// Splits "G.<name>" / "D.<name>" gradients into per-net maps.
LossEval collect(const LossGraph& lg, const TrainState& state) {
  LossEval eval;
  eval.value = lg.graph.value(lg.graph.output()).item();
  eval.grad_g = zeros_like(state.generator.live);
  eval.grad_d = zeros_like(state.discriminator.live);
  for (auto& [name, grad] : lg.graph.backward()) {
    if (name.starts_with("G.")) {
      eval.grad_g.at(name.substr(2)) = std::move(grad);
    } else if (name.starts_with("D.")) {
      eval.grad_d.at(name.substr(2)) = std::move(grad);
    }
  }
  return eval;
}

bool all_finite(const ParamMap& grads) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) return false;
  }
  return true;
}

Rng seeded_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t extra) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(extra),
                    static_cast<std::uint32_t>(extra >> 32)};
  return Rng(seq);
}

}  // namespace

std::string describe(const LossKind& loss) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&os](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, DdganLoss>) {
          os << "ddgan";
        } else if constexpr (std::is_same_v<T, RdganLoss>) {
          os << "rdgan(psi1=" << conjugates::to_string(l.psi1) << ", psi2=" << conjugates::to_string(l.psi2)
             << ", tau=" << l.tau << ')';
        } else {
          os << "partial(k=" << l.k << ", psi1=" << conjugates::to_string(l.inner.psi1)
             << ", psi2=" << conjugates::to_string(l.inner.psi2) << ", tau=" << l.inner.tau << ')';
        }
      },
      loss);
  return os.str();
}

bool uses_uot(const LossKind& loss, int t) {
  if (std::holds_alternative<DdganLoss>(loss)) return false;
  if (std::holds_alternative<RdganLoss>(loss)) return true;
  return t <= std::get<PartialLoss>(loss).k;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw std::invalid_argument("config field '" + field + "': " + what);
  };
  if (steps < 1) fail("T", "must be at least 1");
  if (const RdganLoss* r = uot_params(loss); r && !(r->tau > 0.0)) fail("loss.tau", "must be positive");
  if (const auto* p = std::get_if<PartialLoss>(&loss); p && (p->k < 0 || p->k > steps)) {
    fail("loss.k", "must lie in [0, T]");
  }
  if (!(lr_g > 0.0)) fail("lr_g", "must be positive");
  if (!(lr_d > 0.0)) fail("lr_d", "must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must lie in [0, 1)");
  if (!(r1_gamma >= 0.0)) fail("r1_gamma", "must be non-negative");
  if (lazy_reg_every < 1) fail("lazy_reg_every", "must be at least 1");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) fail("ema_decay", "must lie in [0, 1]");
  if (batch_size < 2) fail("batch_size", "must be at least 2");
  if (iters < 0) fail("iters", "must be non-negative");
  if (probe_every < 1) fail("probe_every", "must be at least 1");
  if (probe_size < 1) fail("probe_size", "must be at least 1");
  if (time_embed_dim < 1) fail("time_embed_dim", "must be at least 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) fail("hidden_dims", "widths must be at least 1");
  }
  try {
    dataset.validate();
  } catch (const std::invalid_argument& e) {
    fail("dataset", e.what());
  }
  try {
    (void)schedule();
  } catch (const std::invalid_argument& e) {
    fail("beta_min/beta_max", e.what());
  }
}

std::size_t TrainConfig::effective_latent_dim() const {
  if (latent_dim > 0) return latent_dim;
  return dataset.dim == 1 ? 4 : 8;
}

networks::NetSpec TrainConfig::generator_spec() const {
  return {networks::Role::kGenerator, dataset.dim, hidden_dims, effective_latent_dim(), time_embed_dim,
          static_cast<std::size_t>(steps)};
}

networks::NetSpec TrainConfig::discriminator_spec() const {
  return {networks::Role::kDiscriminator, dataset.dim, hidden_dims, 0, time_embed_dim,
          static_cast<std::size_t>(steps)};
}

DiffusionSchedule TrainConfig::schedule() const { return diffusion::make_schedule(steps, beta_min, beta_max); }

std::optional<data::OutlierRule> TrainConfig::outlier_rule() const {
  if (!dataset.has_outliers()) return std::nullopt;
  return data::OutlierRule{data::NearestComponent{dataset}};
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr, double beta1, double beta2) {
  ++state.step;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    if (g.shape() != p.shape()) throw std::invalid_argument("adam_step: gradient shape differs for '" + name + "'");
    auto [mit, m_new] = state.m.try_emplace(name, p.shape());
    auto [vit, v_new] = state.v.try_emplace(name, p.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.rng = seeded_rng(cfg.seed, 0, 0);
  state.generator = networks::init_net(cfg.generator_spec(), state.rng);
  state.discriminator = networks::init_net(cfg.discriminator_spec(), state.rng);
  state.discriminator.ema.reset();
  return state;
}

Batch draw_batch(const TrainConfig& cfg, const DiffusionSchedule& schedule, Rng& rng) {
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t d = cfg.dataset.dim;
  Batch b;
  b.x0 = data::sample_mixture(cfg.dataset, n, rng);
  std::uniform_int_distribution<int> pick(1, schedule.steps());
  b.steps.resize(n);
  for (int& t : b.steps) t = pick(rng);
  std::vector<int> prev(n);
  for (std::size_t r = 0; r < n; ++r) prev[r] = b.steps[r] - 1;
  const Tensor noise_prev = fill_normal({n, d}, rng);
  const Tensor noise_step = fill_normal({n, d}, rng);
  b.x_prev = diffusion::q_sample(schedule, b.x0, prev, noise_prev);
  b.x_t = diffusion::q_step(schedule, b.x_prev, b.steps, noise_step);
  b.z = fill_normal({n, cfg.effective_latent_dim()}, rng);
  b.posterior_noise = fill_normal({n, d}, rng);
  return b;
}

Tensor cost(double tau, const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw std::invalid_argument("cost: shape " + shape_string(x.shape()) + " differs from " +
                                shape_string(y.shape()));
  }
  const std::size_t c = x.cols();
  Tensor out({x.rows(), 1});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double diff = x[r * c + j] - y[r * c + j];
      acc += diff * diff;
    }
    out[r] = tau * acc;
  }
  return out;
}

double rdgan_disc_row(const RdganLoss& loss, double c, double d_fake, double d_real) {
  return conjugates::conjugate_eval(loss.psi1, d_fake - c) + conjugates::conjugate_eval(loss.psi2, -d_real);
}

double rdgan_gen_row(double c, double d_fake) { return c - d_fake; }

double ddgan_disc_row(double d_fake, double d_real) {
  const ConjugateKind sp = ConjugateKind::softplus();
  return conjugates::conjugate_eval(sp, d_fake) + conjugates::conjugate_eval(sp, -d_real);
}

double ddgan_gen_row(double d_fake) { return conjugates::conjugate_eval(ConjugateKind::softplus(), -d_fake); }

LossGraph build_discriminator_graph(const TrainConfig& cfg, const TrainState& state, const Batch& batch,
                                    RowMode mode) {
  const DiffusionSchedule schedule = cfg.schedule();
  const RowSplit split = split_rows(cfg.loss, batch.steps, mode);
  const RdganLoss* uot = split.uot.empty() ? nullptr : &require_uot_params(cfg.loss);

  // Fake pairs come from the current generator without a gradient path.
  const Tensor x0_hat = networks::gen_forward(state.generator, batch.x_t, batch.z, batch.steps);
  const Tensor x_fake = diffusion::posterior_sample(schedule, x0_hat, batch.x_t, batch.steps, batch.posterior_noise);

  LossGraph lg;
  Graph& g = lg.graph;
  const NetNodes disc = networks::add_param_leaves(g, state.discriminator.spec, "D.", true);
  networks::bind_params(lg.bindings, disc, state.discriminator.live);

  std::vector<NodeId> terms;
  for (const bool is_uot : {true, false}) {
    const auto& rows = is_uot ? split.uot : split.gan;
    if (rows.empty()) continue;
    const std::string p = is_uot ? "uot." : "gan.";
    const NodeId x_real = g.input(p + "x_real", false);
    const NodeId x_hat = g.input(p + "x_fake", false);
    const NodeId x_t = g.input(p + "x_t", false);
    const NodeId oh = g.input(p + "one_hot", false);
    const std::vector<int> steps = take_steps(batch.steps, rows);
    lg.bindings.emplace(p + "x_real", take_rows(batch.x_prev, rows));
    lg.bindings.emplace(p + "x_fake", take_rows(x_fake, rows));
    lg.bindings.emplace(p + "x_t", take_rows(batch.x_t, rows));
    lg.bindings.emplace(p + "one_hot", networks::one_hot(steps, state.discriminator.spec.steps));
    const NodeId d_real = networks::apply_net(g, disc, {x_real, x_t}, oh);
    const NodeId d_fake = networks::apply_net(g, disc, {x_hat, x_t}, oh);
    if (is_uot) {
      const NodeId c = g.input(p + "cost", false);
      lg.bindings.emplace(p + "cost", take_rows(cost(uot->tau, batch.x_t, x0_hat), rows));
      const NodeId fake_term = conjugate_node(g, g.sub(d_fake, c), uot->psi1);
      const NodeId real_term = conjugate_node(g, g.neg(d_real), uot->psi2);
      terms.push_back(g.sum(g.add(fake_term, real_term)));
    } else {
      terms.push_back(g.sum(g.add(g.softplus(d_fake), g.softplus(g.neg(d_real)))));
    }
  }
  NodeId total = terms.front();
  if (terms.size() == 2) total = g.add(terms[0], terms[1]);
  g.set_output(g.scale(total, 1.0 / static_cast<double>(batch.steps.size())));
  return lg;
}

LossGraph build_generator_graph(const TrainConfig& cfg, const TrainState& state, const Batch& batch, RowMode mode) {
  const DiffusionSchedule schedule = cfg.schedule();
  const RowSplit split = split_rows(cfg.loss, batch.steps, mode);
  const RdganLoss* uot = split.uot.empty() ? nullptr : &require_uot_params(cfg.loss);
  const std::size_t d = batch.x_t.cols();

  LossGraph lg;
  Graph& g = lg.graph;
  const NetNodes gen = networks::add_param_leaves(g, state.generator.spec, "G.", true);
  const NetNodes disc = networks::add_param_leaves(g, state.discriminator.spec, "D.", false);
  networks::bind_params(lg.bindings, gen, state.generator.live);
  networks::bind_params(lg.bindings, disc, state.discriminator.live);

  std::vector<NodeId> terms;
  for (const bool is_uot : {true, false}) {
    const auto& rows = is_uot ? split.uot : split.gan;
    if (rows.empty()) continue;
    const std::string p = is_uot ? "uot." : "gan.";
    const std::vector<int> steps = take_steps(batch.steps, rows);
    const Tensor xt_rows = take_rows(batch.x_t, rows);
    const Tensor noise_rows = take_rows(batch.posterior_noise, rows);
    // x_fake = coef_x0 * x0_hat + (coef_xt * x_t + sd * noise); the bracket is
    // constant with respect to every parameter.
    Tensor coef({rows.size(), d});
    Tensor offset({rows.size(), d});
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const int t = steps[k];
      const double c0 = schedule.posterior_coef_x0(t), ct = schedule.posterior_coef_xt(t);
      const double sd = std::sqrt(schedule.posterior_var(t));
      for (std::size_t j = 0; j < d; ++j) {
        coef[k * d + j] = c0;
        offset[k * d + j] = ct * xt_rows[k * d + j] + sd * noise_rows[k * d + j];
      }
    }
    const NodeId x_t = g.input(p + "x_t", false);
    const NodeId z = g.input(p + "z", false);
    const NodeId oh = g.input(p + "one_hot", false);
    const NodeId coef_node = g.input(p + "coef_x0", false);
    const NodeId offset_node = g.input(p + "offset", false);
    lg.bindings.emplace(p + "x_t", xt_rows);
    lg.bindings.emplace(p + "z", take_rows(batch.z, rows));
    lg.bindings.emplace(p + "one_hot", networks::one_hot(steps, state.generator.spec.steps));
    lg.bindings.emplace(p + "coef_x0", std::move(coef));
    lg.bindings.emplace(p + "offset", std::move(offset));

    const NodeId x0_hat = networks::apply_net(g, gen, {x_t, z}, oh);
    const NodeId x_fake = g.add(g.mul(coef_node, x0_hat), offset_node);
    const NodeId d_fake = networks::apply_net(g, disc, {x_fake, x_t}, oh);
    if (is_uot) {
      const NodeId c = g.scale(g.row_sum(g.square(g.sub(x_t, x0_hat))), uot->tau);
      terms.push_back(g.sum(g.sub(c, d_fake)));
    } else {
      terms.push_back(g.sum(g.softplus(g.neg(d_fake))));
    }
  }
  NodeId total = terms.front();
  if (terms.size() == 2) total = g.add(terms[0], terms[1]);
  g.set_output(g.scale(total, 1.0 / static_cast<double>(batch.steps.size())));
  return lg;
}

LossEval discriminator_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch, RowMode mode) {
  LossGraph lg = build_discriminator_graph(cfg, state, batch, mode);
  lg.graph.forward(lg.bindings);
  return collect(lg, state);
}

LossEval generator_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch, RowMode mode) {
  LossGraph lg = build_generator_graph(cfg, state, batch, mode);
  lg.graph.forward(lg.bindings);
  return collect(lg, state);
}

LossEval rdgan_disc_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch) {
  return discriminator_loss(cfg, state, batch, RowMode::kAllUot);
}

LossEval rdgan_gen_loss(const TrainConfig& cfg, const TrainState& state, const Batch& batch) {
  return generator_loss(cfg, state, batch, RowMode::kAllUot);
}

std::pair<LossEval, LossEval> ddgan_losses(const TrainConfig& cfg, const TrainState& state, const Batch& batch) {
  return {discriminator_loss(cfg, state, batch, RowMode::kAllGan), generator_loss(cfg, state, batch, RowMode::kAllGan)};
}

LossEval r1_penalty(const TrainConfig& cfg, const TrainState& state, const Batch& batch) {
  LossEval eval;
  eval.grad_g = zeros_like(state.generator.live);
  eval.grad_d = zeros_like(state.discriminator.live);
  const std::size_t n = batch.x_prev.rows();
  const Tensor oh = networks::one_hot(batch.steps, state.discriminator.spec.steps);

  // Input gradient of D at the real pair; rows are independent, so the
  // gradient of sum_i D(x_i) gives every per-row gradient at once.
  Graph input_graph;
  Bindings bindings;
  {
    const NetNodes disc = networks::add_param_leaves(input_graph, state.discriminator.spec, "D.", false);
    const NodeId x = input_graph.input("x_real", true);
    const NodeId xt = input_graph.input("x_t", false);
    const NodeId o = input_graph.input("one_hot", false);
    input_graph.set_output(input_graph.sum(networks::apply_net(input_graph, disc, {x, xt}, o)));
    networks::bind_params(bindings, disc, state.discriminator.live);
    bindings.emplace("x_real", batch.x_prev);
    bindings.emplace("x_t", batch.x_t);
    bindings.emplace("one_hot", oh);
  }
  input_graph.forward(bindings);
  const Tensor grad_x = input_graph.backward().at("x_real");
  double sq = 0.0;
  for (double v : grad_x.data()) sq += v * v;
  eval.value = 0.5 * cfg.r1_gamma * sq / static_cast<double>(n);
  if (cfg.r1_gamma == 0.0) return eval;

  // d/dphi 0.5 |g|^2 = J^T g with g held fixed, and J^T g is the parameter
  // gradient of the directional derivative g . grad_x D, approximated by
  // (D(x + h g) - D(x)) / h. The penalty is gamma / n times sum 0.5 |g|^2.
  const double h = kR1FiniteDifferenceStep;
  Tensor x_plus = batch.x_prev;
  for (std::size_t i = 0; i < x_plus.size(); ++i) x_plus[i] += h * grad_x[i];
  LossGraph lg;
  Graph& g = lg.graph;
  const NetNodes disc = networks::add_param_leaves(g, state.discriminator.spec, "D.", true);
  const NodeId xp = g.input("x_plus", false);
  const NodeId xb = g.input("x_base", false);
  const NodeId xt = g.input("x_t", false);
  const NodeId o = g.input("one_hot", false);
  const NodeId diff = g.sub(g.sum(networks::apply_net(g, disc, {xp, xt}, o)),
                            g.sum(networks::apply_net(g, disc, {xb, xt}, o)));
  g.set_output(g.scale(diff, cfg.r1_gamma / (static_cast<double>(n) * h)));
  networks::bind_params(lg.bindings, disc, state.discriminator.live);
  lg.bindings.emplace("x_plus", std::move(x_plus));
  lg.bindings.emplace("x_base", batch.x_prev);
  lg.bindings.emplace("x_t", batch.x_t);
  lg.bindings.emplace("one_hot", oh);
  g.forward(lg.bindings);
  const double value = eval.value;
  eval = collect(lg, state);
  eval.value = value;
  return eval;
}

Tensor sample(const NetParams& generator, const DiffusionSchedule& schedule, std::size_t n, bool use_ema, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: need at least one sample");
  const std::size_t d = generator.spec.data_dim, latent = generator.spec.latent_dim;
  Tensor x = fill_normal({n, d}, rng);
  for (int t = schedule.steps(); t >= 1; --t) {
    const Tensor z = fill_normal({n, latent}, rng);
    const Tensor noise = fill_normal({n, d}, rng);
    Tensor x0_hat({n, d});
    for (std::size_t start = 0; start < n; start += kSampleChunk) {
      const std::size_t stop = std::min(n, start + kSampleChunk);
      std::vector<std::size_t> rows(stop - start);
      for (std::size_t r = start; r < stop; ++r) rows[r - start] = r;
      const Tensor chunk = networks::gen_forward(generator, take_rows(x, rows), take_rows(z, rows), t, use_ema);
      std::copy(chunk.data().begin(), chunk.data().end(), x0_hat.data().begin() + static_cast<std::ptrdiff_t>(start * d));
    }
    x = diffusion::posterior_sample(schedule, x0_hat, x, t, noise);
  }
  return x;
}

MetricsRow probe(const TrainConfig& cfg, const TrainState& state, std::size_t n, Rng& rng) {
  MetricsRow row;
  row.iter = state.iteration;
  const Tensor samples = sample(state.generator, cfg.schedule(), n, true, rng);
  const auto rule = cfg.outlier_rule();
  row.outlier_fraction = rule ? data::outlier_fraction(samples, *rule) : 0.0;
  const Tensor clean = data::sample_mixture(cfg.dataset.clean_only(), n, rng);
  row.w1_clean = data::marginal_wasserstein1(samples, clean);
  return row;
}

TrainResult train(const TrainConfig& cfg) { return train(cfg, init_state(cfg)); }

TrainResult train(const TrainConfig& cfg, TrainState state) {
  cfg.validate();
  TrainResult result{std::move(state), {}, std::nullopt};
  TrainState& st = result.state;
  const DiffusionSchedule schedule = cfg.schedule();
  const std::string loss_name = describe(cfg.loss);

  auto fail = [&](const char* phase, double loss_d, double loss_g, const char* reason) {
    result.failure = Failure{st.iteration, phase, loss_name, loss_d, loss_g, reason};
  };

  while (st.iteration < cfg.iters) {
    const Batch batch = draw_batch(cfg, schedule, st.rng);

    LossEval d = discriminator_loss(cfg, st, batch);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(d.value)) {
      fail("discriminator", d.value, nan, "non-finite discriminator loss");
      break;
    }
    if (st.iteration % cfg.lazy_reg_every == 0 && cfg.r1_gamma > 0.0) {
      const LossEval r1 = r1_penalty(cfg, st, batch);
      if (!std::isfinite(r1.value)) {
        fail("discriminator", d.value, nan, "non-finite R1 penalty");
        break;
      }
      for (auto& [name, grad] : d.grad_d) {
        const Tensor& extra = r1.grad_d.at(name);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += extra[i];
      }
    }
    if (!all_finite(d.grad_d)) {
      fail("discriminator", d.value, nan, "non-finite discriminator gradient");
      break;
    }
    adam_step(st.discriminator.live, d.grad_d, st.adam_d, cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2);

    const LossEval gl = generator_loss(cfg, st, batch);
    if (!std::isfinite(gl.value)) {
      fail("generator", d.value, gl.value, "non-finite generator loss");
      break;
    }
    if (!all_finite(gl.grad_g)) {
      fail("generator", d.value, gl.value, "non-finite generator gradient");
      break;
    }
    adam_step(st.generator.live, gl.grad_g, st.adam_g, cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2);
    networks::ema_update(st.generator, cfg.ema_decay);
    ++st.iteration;

    if (st.iteration % cfg.probe_every == 0 || st.iteration == cfg.iters) {
      Rng probe_rng = seeded_rng(cfg.seed, 1, static_cast<std::uint64_t>(st.iteration));
      MetricsRow row = probe(cfg, st, static_cast<std::size_t>(cfg.probe_size), probe_rng);
      row.loss_d = d.value;
      row.loss_g = gl.value;
      result.metrics.push_back(row);
    }
  }
  return result;
}

}  // namespace rdgan::trainer
