#include "rdgan/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rdgan::diffusion {
namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape " + shape_string(a.shape()) + " differs from " +
                                shape_string(b.shape()));
  }
}

void check_rows(const char* op, const Tensor& x, std::span<const int> steps) {
  if (x.rows() != steps.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(steps.size()) + " steps for " +
                                std::to_string(x.rows()) + " rows");
  }
}

}  // namespace

void DiffusionSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

double DiffusionSchedule::beta(int t) const {
  check_step(t);
  return betas_[t - 1];
}

double DiffusionSchedule::alpha(int t) const {
  check_step(t);
  return alphas_[t - 1];
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check_step(t);
  return alpha_bars_[t - 1];
}

double DiffusionSchedule::posterior_coef_x0(int t) const {
  check_step(t);
  return coef_x0_[t - 1];
}

double DiffusionSchedule::posterior_coef_xt(int t) const {
  check_step(t);
  return coef_xt_[t - 1];
}

double DiffusionSchedule::posterior_var(int t) const {
  check_step(t);
  return posterior_var_[t - 1];
}

DiffusionSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw std::invalid_argument("make_schedule: need at least one step");
  if (!(beta_min > 0.0) || !(beta_max >= beta_min)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max");
  }
  const double n = steps;
  DiffusionSchedule s;
  double abar_prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta = 1.0 - std::exp(-beta_min / n - (beta_max - beta_min) * (2.0 * t - 1.0) / (2.0 * n * n));
    if (!(beta > 0.0 && beta < 1.0)) {
      throw std::invalid_argument("make_schedule: beta_" + std::to_string(t) + " = " + std::to_string(beta) +
                                  " outside (0, 1)");
    }
    const double alpha = 1.0 - beta;
    const double abar = abar_prev * alpha;
    s.betas_.push_back(beta);
    s.alphas_.push_back(alpha);
    s.alpha_bars_.push_back(abar);
    if (t == 1) {
      // abar_0 = 1: the posterior collapses onto x0. Written out so the
      // coefficient is exactly 1 rather than beta / (1 - (1 - beta)).
      s.coef_x0_.push_back(1.0);
      s.coef_xt_.push_back(0.0);
      s.posterior_var_.push_back(0.0);
    } else {
      s.coef_x0_.push_back(std::sqrt(abar_prev) * beta / (1.0 - abar));
      s.coef_xt_.push_back(std::sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar));
      s.posterior_var_.push_back((1.0 - abar_prev) / (1.0 - abar) * beta);
    }
    abar_prev = abar;
  }
  return s;
}

Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& noise) {
  check_same_shape("q_sample", x0, noise);
  if (t == 0) throw std::out_of_range("q_sample: step 0 is not a diffusion step");
  const double abar = s.alpha_bar(t);
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

Tensor q_step(const DiffusionSchedule& s, const Tensor& x_prev, int t, const Tensor& noise) {
  check_same_shape("q_step", x_prev, noise);
  const double beta = s.beta(t);
  const double a = std::sqrt(1.0 - beta), b = std::sqrt(beta);
  Tensor out(x_prev.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * noise[i];
  return out;
}

Tensor posterior_sample(const DiffusionSchedule& s, const Tensor& x0, const Tensor& x_t, int t, const Tensor& noise) {
  check_same_shape("posterior_sample", x0, x_t);
  check_same_shape("posterior_sample", x0, noise);
  const double c0 = s.posterior_coef_x0(t), ct = s.posterior_coef_xt(t), sd = std::sqrt(s.posterior_var(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * x0[i] + ct * x_t[i] + sd * noise[i];
  return out;
}

Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, std::span<const int> steps, const Tensor& noise) {
  check_same_shape("q_sample", x0, noise);
  check_rows("q_sample", x0, steps);
  Tensor out(x0.shape());
  const std::size_t c = x0.cols();
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const double abar = s.alpha_bar(steps[r]);
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    for (std::size_t j = r * c; j < (r + 1) * c; ++j) out[j] = a * x0[j] + b * noise[j];
  }
  return out;
}

Tensor q_step(const DiffusionSchedule& s, const Tensor& x_prev, std::span<const int> steps, const Tensor& noise) {
  check_same_shape("q_step", x_prev, noise);
  check_rows("q_step", x_prev, steps);
  Tensor out(x_prev.shape());
  const std::size_t c = x_prev.cols();
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const double beta = s.beta(steps[r]);
    const double a = std::sqrt(1.0 - beta), b = std::sqrt(beta);
    for (std::size_t j = r * c; j < (r + 1) * c; ++j) out[j] = a * x_prev[j] + b * noise[j];
  }
  return out;
}

Tensor posterior_sample(const DiffusionSchedule& s, const Tensor& x0, const Tensor& x_t, std::span<const int> steps,
                        const Tensor& noise) {
  check_same_shape("posterior_sample", x0, x_t);
  check_same_shape("posterior_sample", x0, noise);
  check_rows("posterior_sample", x0, steps);
  Tensor out(x0.shape());
  const std::size_t c = x0.cols();
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const int t = steps[r];
    const double c0 = s.posterior_coef_x0(t), ct = s.posterior_coef_xt(t), sd = std::sqrt(s.posterior_var(t));
    for (std::size_t j = r * c; j < (r + 1) * c; ++j) out[j] = c0 * x0[j] + ct * x_t[j] + sd * noise[j];
  }
  return out;
}

}  // namespace rdgan::diffusion
