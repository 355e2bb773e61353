#ifndef RDGAN_DIFFUSION_HPP_
#define RDGAN_DIFFUSION_HPP_

#include <span>
#include <vector>

#include "rdgan/tensor.hpp"

namespace rdgan::diffusion {

inline constexpr double kDefaultBetaMin = 0.1;
inline constexpr double kDefaultBetaMax = 20.0;

// Fixed noise schedule for T large diffusion steps, t = 1..T. The accessors
// take t in [1, T]; alpha_bar also accepts t = 0 and returns 1 there.
class DiffusionSchedule {
 public:
  int steps() const { return static_cast<int>(betas_.size()); }

  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;
  // Mean of q(x_{t-1} | x_t, x_0) is coef_x0 * x_0 + coef_xt * x_t.
  double posterior_coef_x0(int t) const;
  double posterior_coef_xt(int t) const;
  double posterior_var(int t) const;

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }

 private:
  friend DiffusionSchedule make_schedule(int steps, double beta_min, double beta_max);
  void check_step(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> coef_x0_;
  std::vector<double> coef_xt_;
  std::vector<double> posterior_var_;
};

// Variance-preserving discretisation:
//   beta_t = 1 - exp(-beta_min / T - (beta_max - beta_min) (2t - 1) / (2 T^2)).
DiffusionSchedule make_schedule(int steps, double beta_min = kDefaultBetaMin, double beta_max = kDefaultBetaMax);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& noise);
// sqrt(1 - beta_t) x_prev + sqrt(beta_t) noise
Tensor q_step(const DiffusionSchedule& s, const Tensor& x_prev, int t, const Tensor& noise);
// Posterior mean plus sqrt(posterior_var_t) noise.
Tensor posterior_sample(const DiffusionSchedule& s, const Tensor& x0, const Tensor& x_t, int t, const Tensor& noise);

// Row-wise forms: row r of the inputs uses step steps[r]. For q_sample a step
// of 0 returns x0 unchanged.
Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, std::span<const int> steps, const Tensor& noise);
Tensor q_step(const DiffusionSchedule& s, const Tensor& x_prev, std::span<const int> steps, const Tensor& noise);
Tensor posterior_sample(const DiffusionSchedule& s, const Tensor& x0, const Tensor& x_t, std::span<const int> steps,
                        const Tensor& noise);

}  // namespace rdgan::diffusion

#endif  // RDGAN_DIFFUSION_HPP_
