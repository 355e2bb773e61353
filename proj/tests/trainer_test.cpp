#include "rdgan/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace rdgan::trainer {
namespace {

using rdgan::testing::random_tensor;

TrainConfig small_config(LossKind loss = RdganLoss{}) {
  TrainConfig cfg;
  cfg.loss = loss;
  cfg.hidden_dims = {8, 8};
  cfg.time_embed_dim = 3;
  cfg.batch_size = 6;
  cfg.iters = 5;
  cfg.probe_every = 2;
  cfg.probe_size = 64;
  cfg.seed = 3;
  return cfg;
}

void zero_params(ParamMap& p) {
  for (auto& [name, t] : p)
    for (auto& v : t.data()) v = 0.0;
}

double max_abs(const ParamMap& p) {
  double m = 0.0;
  for (const auto& [name, t] : p)
    for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

TEST(TrainerTest, CostExamples) {
  const Tensor x = Tensor::matrix({{2.0, 0.0}, {1.0, 1.0}});
  const Tensor y = Tensor::matrix({{0.0, 0.0}, {1.0, 1.0}});
  const Tensor c = cost(1e-3, x, y);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_NEAR(c[0], 0.004, 1e-15);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_THROW(cost(1e-3, x, Tensor({2, 1})), std::invalid_argument);
}

TEST(TrainerTest, CostGradientInGraph) {
  std::mt19937_64 rng(1);
  autodiff::Graph g;
  const auto x = g.input("x", false);
  const auto y = g.input("y", true);
  g.sum(g.scale(g.row_sum(g.square(g.sub(x, y))), 1e-3));
  const autodiff::Bindings b{{"x", random_tensor({4, 2}, rng)}, {"y", random_tensor({4, 2}, rng)}};
  EXPECT_LE(autodiff::check_gradient(g, b, 1e-5), 1e-6);
  g.forward(b);
  const Tensor grad = g.backward().at("y");
  for (std::size_t i = 0; i < grad.size(); ++i)
    EXPECT_NEAR(grad[i], -2e-3 * (b.at("x")[i] - b.at("y")[i]), 1e-15);
  const Tensor c = cost(1e-3, b.at("x"), b.at("y"));
  double total = 0.0;
  for (double v : c.data()) total += v;
  EXPECT_NEAR(g.value(g.output()).item(), total, 1e-15);
}

TEST(TrainerTest, RowObjectiveExamples) {
  const RdganLoss softplus;
  EXPECT_NEAR(rdgan_disc_row(softplus, 0.004, 0.5, -0.3), std::log1p(std::exp(0.496)) + std::log1p(std::exp(0.3)),
              1e-15);
  EXPECT_NEAR(rdgan_disc_row(softplus, 0.004, 0.5, -0.3), 1.825944, 1e-6);
  EXPECT_NEAR(rdgan_disc_row(softplus, 0.0, 0.0, 0.0), 2.0 * std::log(2.0), 1e-15);
  RdganLoss chi2{ConjugateKind::chi_square(), ConjugateKind::chi_square(), 1e-3};
  EXPECT_EQ(rdgan_disc_row(chi2, 0.0, 0.0, 0.0), 0.0);
  EXPECT_NEAR(rdgan_gen_row(0.004, 0.5), -0.496, 1e-15);
  EXPECT_EQ(rdgan_gen_row(0.0, 0.0), 0.0);
  EXPECT_NEAR(ddgan_disc_row(0.0, 0.0), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(ddgan_gen_row(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ddgan_disc_row(-1.0, 1.0), 0.62652, 1e-5);
  EXPECT_LT(ddgan_disc_row(-800.0, 800.0), 1e-300);
}

TEST(TrainerTest, UsesUotPerLossKind) {
  EXPECT_TRUE(uses_uot(RdganLoss{}, 4));
  EXPECT_FALSE(uses_uot(DdganLoss{}, 1));
  const PartialLoss p{2, RdganLoss{}};
  EXPECT_TRUE(uses_uot(p, 1));
  EXPECT_TRUE(uses_uot(p, 2));
  EXPECT_FALSE(uses_uot(p, 3));
  EXPECT_FALSE(uses_uot(PartialLoss{0, RdganLoss{}}, 1));
}

TEST(TrainerTest, ValidateRejectsBadFields) {
  auto bad = [](auto mutate) {
    TrainConfig cfg = small_config();
    mutate(cfg);
    return cfg;
  };
  EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 1; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.lr_g = 0.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.lazy_reg_every = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.r1_gamma = -1.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.loss = PartialLoss{5, RdganLoss{}}; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.loss = RdganLoss{ConjugateKind::softplus(), ConjugateKind::softplus(), 0.0}; })
                   .validate(),
               std::invalid_argument);
  EXPECT_NO_THROW(small_config().validate());
}

struct ZeroNets {
  TrainConfig cfg;
  TrainState state;
  Batch batch;
};

ZeroNets zero_nets(LossKind loss) {
  ZeroNets z{small_config(loss), {}, {}};
  z.state = init_state(z.cfg);
  zero_params(z.state.generator.live);
  zero_params(z.state.discriminator.live);
  Rng rng(5);
  z.batch = draw_batch(z.cfg, z.cfg.schedule(), rng);
  return z;
}

// A tiny tau makes c vanish to well below 1e-12 while zero nets give D = 0.
constexpr double kTinyTau = 1e-300;

TEST(TrainerTest, ZeroNetAnchors) {
  {
    auto z = zero_nets(RdganLoss{ConjugateKind::softplus(), ConjugateKind::softplus(), kTinyTau});
    EXPECT_NEAR(rdgan_disc_loss(z.cfg, z.state, z.batch).value, 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(rdgan_gen_loss(z.cfg, z.state, z.batch).value, 0.0, 1e-12);
    const auto [d, g] = ddgan_losses(z.cfg, z.state, z.batch);
    EXPECT_NEAR(d.value, 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(g.value, std::log(2.0), 1e-12);
  }
  {
    auto z = zero_nets(RdganLoss{ConjugateKind::chi_square(), ConjugateKind::chi_square(), kTinyTau});
    EXPECT_NEAR(rdgan_disc_loss(z.cfg, z.state, z.batch).value, 0.0, 1e-12);
  }
}

TEST(TrainerTest, LossesMatchRowFormulas) {
  TrainConfig cfg = small_config();
  const TrainState state = init_state(cfg);
  Rng rng(6);
  const Batch batch = draw_batch(cfg, cfg.schedule(), rng);
  const auto schedule = cfg.schedule();
  const Tensor x0_hat = networks::gen_forward(state.generator, batch.x_t, batch.z, batch.steps);
  const Tensor x_fake = diffusion::posterior_sample(schedule, x0_hat, batch.x_t, batch.steps, batch.posterior_noise);
  const Tensor d_fake = networks::disc_forward(state.discriminator, x_fake, batch.x_t, batch.steps);
  const Tensor d_real = networks::disc_forward(state.discriminator, batch.x_prev, batch.x_t, batch.steps);
  const Tensor c = cost(1e-3, batch.x_t, x0_hat);
  double ld = 0.0, lg = 0.0, dd = 0.0, dg = 0.0;
  const double n = static_cast<double>(batch.steps.size());
  for (std::size_t i = 0; i < batch.steps.size(); ++i) {
    ld += rdgan_disc_row(RdganLoss{}, c[i], d_fake[i], d_real[i]) / n;
    lg += rdgan_gen_row(c[i], d_fake[i]) / n;
    dd += ddgan_disc_row(d_fake[i], d_real[i]) / n;
    dg += ddgan_gen_row(d_fake[i]) / n;
  }
  EXPECT_NEAR(rdgan_disc_loss(cfg, state, batch).value, ld, 1e-12);
  EXPECT_NEAR(rdgan_gen_loss(cfg, state, batch).value, lg, 1e-12);
  const auto [d, g] = ddgan_losses(cfg, state, batch);
  EXPECT_NEAR(d.value, dd, 1e-12);
  EXPECT_NEAR(g.value, dg, 1e-12);
}

TEST(TrainerTest, PartialMixesRowObjectives) {
  TrainConfig cfg = small_config(PartialLoss{2, RdganLoss{}});
  cfg.batch_size = 32;
  const TrainState state = init_state(cfg);
  Rng rng(7);
  const Batch batch = draw_batch(cfg, cfg.schedule(), rng);
  const auto schedule = cfg.schedule();
  const Tensor x0_hat = networks::gen_forward(state.generator, batch.x_t, batch.z, batch.steps);
  const Tensor x_fake = diffusion::posterior_sample(schedule, x0_hat, batch.x_t, batch.steps, batch.posterior_noise);
  const Tensor d_fake = networks::disc_forward(state.discriminator, x_fake, batch.x_t, batch.steps);
  const Tensor d_real = networks::disc_forward(state.discriminator, batch.x_prev, batch.x_t, batch.steps);
  const Tensor c = cost(1e-3, batch.x_t, x0_hat);
  double ld = 0.0;
  bool saw_both[2] = {false, false};
  for (std::size_t i = 0; i < batch.steps.size(); ++i) {
    const bool uot = batch.steps[i] <= 2;
    saw_both[uot] = true;
    ld += uot ? rdgan_disc_row(RdganLoss{}, c[i], d_fake[i], d_real[i]) : ddgan_disc_row(d_fake[i], d_real[i]);
  }
  ASSERT_TRUE(saw_both[0] && saw_both[1]);
  EXPECT_NEAR(discriminator_loss(cfg, state, batch).value, ld / batch.steps.size(), 1e-12);
}

TEST(TrainerTest, GradientIsolation) {
  TrainConfig cfg = small_config();
  const TrainState state = init_state(cfg);
  Rng rng(8);
  const Batch batch = draw_batch(cfg, cfg.schedule(), rng);
  const LossEval d = rdgan_disc_loss(cfg, state, batch);
  const LossEval g = rdgan_gen_loss(cfg, state, batch);
  EXPECT_EQ(max_abs(d.grad_g), 0.0);
  EXPECT_GT(max_abs(d.grad_d), 0.0);
  EXPECT_EQ(max_abs(g.grad_d), 0.0);
  EXPECT_GT(max_abs(g.grad_g), 0.0);
  EXPECT_EQ(d.grad_g.size(), state.generator.live.size());
  EXPECT_EQ(g.grad_d.size(), state.discriminator.live.size());
}

double pipeline_gradient_error(LossKind loss, bool generator, std::uint64_t seed, double step = 1e-5) {
  TrainConfig cfg = small_config(loss);
  const TrainState state = init_state(cfg);
  Rng rng(seed);
  const Batch batch = draw_batch(cfg, cfg.schedule(), rng);
  LossGraph lg = generator ? build_generator_graph(cfg, state, batch) : build_discriminator_graph(cfg, state, batch);
  return autodiff::check_gradient(lg.graph, lg.bindings, step);
}

TEST(TrainerTest, DiscriminatorPipelineGradients) {
  EXPECT_LE(pipeline_gradient_error(RdganLoss{}, false, 9), 1e-4);
  EXPECT_LE(pipeline_gradient_error(DdganLoss{}, false, 10), 1e-4);
  // The exponential conjugate inflates the loss, so rounding in the
  // difference quotient (which grows as 1 / step) dominates at step 1e-5 on
  // near-zero gradient entries; a larger step isolates the truncation error.
  EXPECT_LE(pipeline_gradient_error(RdganLoss{ConjugateKind::chi_square(), ConjugateKind::kl(), 0.5}, false, 11, 1e-4),
            1e-4);
}

TEST(TrainerTest, GeneratorPipelineGradients) {
  EXPECT_LE(pipeline_gradient_error(RdganLoss{ConjugateKind::softplus(), ConjugateKind::softplus(), 0.5}, true, 12),
            1e-4);
  EXPECT_LE(pipeline_gradient_error(DdganLoss{}, true, 13), 1e-4);
  EXPECT_LE(pipeline_gradient_error(PartialLoss{2, RdganLoss{}}, true, 14), 1e-4);
}

TEST(TrainerTest, R1ZeroForZeroDiscriminator) {
  auto z = zero_nets(RdganLoss{});
  const LossEval r1 = r1_penalty(z.cfg, z.state, z.batch);
  EXPECT_EQ(r1.value, 0.0);
}

TEST(TrainerTest, R1NonnegativeAndParameterGradientApproximate) {
  TrainConfig cfg = small_config();
  cfg.r1_gamma = 1.0;
  TrainState state = init_state(cfg);
  Rng rng(15);
  const Batch batch = draw_batch(cfg, cfg.schedule(), rng);
  const LossEval r1 = r1_penalty(cfg, state, batch);
  EXPECT_GT(r1.value, 0.0);
  EXPECT_EQ(max_abs(r1.grad_g), 0.0);

  // Central differences of the penalty value itself; the forward-difference
  // parameter gradient carries an O(step) error, so the bound is loose.
  double worst = 0.0, scale = 0.0;
  for (const std::string name : {"fc0.weight", "fc1.bias", "fc2.weight"}) {
    Tensor& p = state.discriminator.live.at(name);
    for (std::size_t k = 0; k < std::min<std::size_t>(p.size(), 6); ++k) {
      const double x = p[k], h = 1e-5;
      p[k] = x + h;
      const double up = r1_penalty(cfg, state, batch).value;
      p[k] = x - h;
      const double down = r1_penalty(cfg, state, batch).value;
      p[k] = x;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - r1.grad_d.at(name)[k]));
      scale = std::max(scale, std::abs(fd));
    }
  }
  ASSERT_GT(scale, 0.0);
  EXPECT_LE(worst, 0.05 * scale + 1e-6);
}

TEST(TrainerTest, AdamZeroGradientIsIdentity) {
  std::mt19937_64 rng(16);
  ParamMap params{{"w", random_tensor({3, 2}, rng)}, {"b", random_tensor({2}, rng)}};
  const ParamMap before = params;
  ParamMap grads{{"w", Tensor({3, 2})}, {"b", Tensor({2})}};
  AdamState state;
  adam_step(params, grads, state, 0.1, 0.5, 0.9);
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 1);
}

TEST(TrainerTest, AdamFirstStepMovesByLearningRate) {
  ParamMap params{{"w", Tensor({2}, {1.0, -1.0})}};
  ParamMap grads{{"w", Tensor({2}, {3.0, -0.25})}};
  AdamState state;
  adam_step(params, grads, state, 0.01, 0.5, 0.9);
  // Bias-corrected moments give m_hat = g and v_hat = g^2 on the first step.
  EXPECT_NEAR(params.at("w")[0], 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(params.at("w")[1], -1.0 + 0.01 * 0.25 / (0.25 + 1e-8), 1e-15);
}

TEST(TrainerTest, ZeroIterationsKeepsInitialization) {
  TrainConfig cfg = small_config();
  cfg.iters = 0;
  const TrainState init = init_state(cfg);
  const TrainResult r = train(cfg);
  EXPECT_FALSE(r.failure);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.state.generator.live, init.generator.live);
  EXPECT_EQ(r.state.discriminator.live, init.discriminator.live);
  EXPECT_EQ(r.state.iteration, 0);
}

TEST(TrainerTest, TrainingIsDeterministic) {
  const TrainConfig cfg = small_config();
  const TrainResult a = train(cfg), b = train(cfg);
  ASSERT_FALSE(a.failure);
  ASSERT_EQ(a.metrics.size(), 3u);  // iterations 2, 4 and the final 5
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].iter, b.metrics[i].iter);
    EXPECT_EQ(a.metrics[i].loss_d, b.metrics[i].loss_d);
    EXPECT_EQ(a.metrics[i].loss_g, b.metrics[i].loss_g);
    EXPECT_EQ(a.metrics[i].outlier_fraction, b.metrics[i].outlier_fraction);
    EXPECT_EQ(a.metrics[i].w1_clean, b.metrics[i].w1_clean);
  }
  EXPECT_EQ(a.state.generator.live, b.state.generator.live);
  EXPECT_EQ(a.state.generator.ema, b.state.generator.ema);
  EXPECT_EQ(a.state.iteration, 5);

  TrainConfig other = cfg;
  other.seed = 4;
  EXPECT_NE(train(other).state.generator.live, a.state.generator.live);
}

TEST(TrainerTest, NonFiniteLossStopsRun) {
  TrainConfig cfg = small_config(RdganLoss{ConjugateKind::kl(), ConjugateKind::kl(), 1e-3});
  TrainState state = init_state(cfg);
  // A huge final bias drives exp(D - 1) past the double range.
  for (auto& v : state.discriminator.live.at("fc2.bias").data()) v = 1e4;
  const TrainResult r = train(cfg, state);
  ASSERT_TRUE(r.failure);
  EXPECT_EQ(r.failure->iteration, 0);
  EXPECT_EQ(r.failure->phase, "discriminator");
  EXPECT_NE(r.failure->loss.find("kl"), std::string::npos);
  EXPECT_EQ(r.state.discriminator.live, state.discriminator.live);
}

TEST(TrainerTest, SampleWithOneStepIsGeneratorOutput) {
  TrainConfig cfg = small_config();
  cfg.steps = 1;
  const TrainState state = init_state(cfg);
  const auto schedule = cfg.schedule();
  Rng a(17), b(17);
  const Tensor out = sample(state.generator, schedule, 9, false, a);
  // Same draw order as the sampler: x_T, then z and noise for t = 1.
  Tensor x({9, 1}), z({9, cfg.effective_latent_dim()});
  for (Tensor* t : {&x, &z}) {
    std::normal_distribution<double> n;
    for (auto& v : t->data()) v = n(b);
  }
  const Tensor direct = networks::gen_forward(state.generator, x, z, 1);
  ASSERT_EQ(out.shape(), direct.shape());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], direct[i], 1e-12);
}

TEST(TrainerTest, SampleIsSeedDeterministic) {
  const TrainConfig cfg = small_config();
  const TrainState state = init_state(cfg);
  Rng a(18), b(18);
  EXPECT_EQ(sample(state.generator, cfg.schedule(), 20, true, a), sample(state.generator, cfg.schedule(), 20, true, b));
  EXPECT_THROW(sample(state.generator, cfg.schedule(), 0, true, a), std::invalid_argument);
}

// With G(x_t) = x_t every reverse step is affine-Gaussian, so x_0 is Gaussian
// with moments given by composing the per-step coefficients from N(0, 1).
TEST(TrainerTest, IdentityGeneratorMatchesComposedGaussian) {
  TrainConfig cfg = small_config();
  cfg.hidden_dims = {};
  TrainState state = init_state(cfg);
  ParamMap& p = state.generator.live;
  zero_params(p);
  p.at("fc0.weight")[0] = 1.0;  // first input row is x_t
  const auto schedule = cfg.schedule();
  double var = 1.0;
  for (int t = schedule.steps(); t >= 1; --t) {
    const double a = schedule.posterior_coef_x0(t) + schedule.posterior_coef_xt(t);
    var = a * a * var + schedule.posterior_var(t);
  }
  const std::size_t n = 100000;
  Rng rng(19);
  const Tensor out = sample(state.generator, schedule, n, false, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : out.data()) mean += v;
  mean /= n;
  for (double v : out.data()) sq += (v - mean) * (v - mean);
  const double got_var = sq / (n - 1);
  EXPECT_LE(std::abs(mean), 4.0 * std::sqrt(var / n));
  EXPECT_LE(std::abs(got_var - var), 4.0 * var * std::sqrt(2.0 / (n - 1)));
}

TEST(TrainerTest, DrawBatchShapes) {
  TrainConfig cfg = small_config();
  cfg.dataset = data::MixtureSpec::ring_2d();
  Rng rng(20);
  const Batch b = draw_batch(cfg, cfg.schedule(), rng);
  EXPECT_EQ(b.x0.shape(), (Shape{6, 2}));
  EXPECT_EQ(b.x_t.shape(), (Shape{6, 2}));
  EXPECT_EQ(b.z.shape(), (Shape{6, cfg.effective_latent_dim()}));
  EXPECT_EQ(cfg.effective_latent_dim(), 8u);
  for (int t : b.steps) {
    EXPECT_GE(t, 1);
    EXPECT_LE(t, cfg.steps);
  }
}

}  // namespace
}  // namespace rdgan::trainer
