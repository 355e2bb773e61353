#include "rdgan/uot_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rdgan::uot {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Ratio clamp for penalties whose derivative blows up at the domain boundary.
constexpr double kRatioEps = 1e-9;

constexpr double kPrimalTol = 1e-12;
constexpr int kPrimalPatience = 200;
constexpr int kPrimalMaxIters = 200000;

constexpr double kSemidualStep = 0.05;
constexpr int kSemidualMaxIters = 50000;
constexpr double kSemidualGradTol = 1e-10;
constexpr double kSemidualBlowup = 1e12;
// The semi-dual is nonsmooth where the c-transform argmin switches, so a fixed
// step can cycle around the maximizer. When the best value has not improved
// for this many iterations, restart from the best point with half the step.
constexpr int kSemidualStall = 200;

void check_shapes(const Measure& mu, const Measure& nu, const Tensor& cost) {
  validate_measure(mu, "mu");
  validate_measure(nu, "nu");
  validate_cost(cost, mu.size(), nu.size());
}

bool is_softplus(const ConjugateKind& k) { return k.family == conjugates::Family::kSoftplus; }
bool is_linear(const ConjugateKind& k) { return k.family == conjugates::Family::kLinear; }

// Psi' at a ratio, with the ratio pulled inside the region where the
// derivative is finite.
double penalty_slope(const ConjugateKind& k, double r) {
  switch (k.family) {
    case conjugates::Family::kSoftplus:
      r = std::clamp(r, kRatioEps, 1.0 - kRatioEps);
      break;
    case conjugates::Family::kKL:
      r = std::max(r, kRatioEps);
      break;
    default:
      break;
  }
  return conjugates::primal_derivative(k, r);
}

// Second derivative of the primal penalty at ratio r, clamped like the slope.
double penalty_curvature(const ConjugateKind& k, double r) {
  switch (k.family) {
    case conjugates::Family::kSoftplus:
      r = std::clamp(r, kRatioEps, 1.0 - kRatioEps);
      return 1.0 / (r * (1.0 - r));
    case conjugates::Family::kKL:
      return 1.0 / std::max(r, kRatioEps);
    case conjugates::Family::kChiSquare:
      return 2.0;
    default:
      return 0.0;
  }
}

// Pulls rows and then columns back under the softplus ratio cap. Shrinking
// columns cannot push a row back over its cap.
void enforce_caps(Tensor& plan, const Measure& mu, const Measure& nu, bool cap_rows,
                  bool cap_cols) {
  const std::size_t n = mu.size(), m = nu.size();
  if (cap_rows) {
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += plan.at(i, j);
      const double cap = (1.0 - kRatioEps) * mu[i];
      if (row > cap) {
        const double f = cap / row;
        for (std::size_t j = 0; j < m; ++j) plan.at(i, j) *= f;
      }
    }
  }
  if (cap_cols) {
    for (std::size_t j = 0; j < m; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < n; ++i) col += plan.at(i, j);
      const double cap = (1.0 - kRatioEps) * nu[j];
      if (col > cap) {
        const double f = cap / col;
        for (std::size_t i = 0; i < n; ++i) plan.at(i, j) *= f;
      }
    }
  }
}

}  // namespace

double total_mass(const Measure& m) { return std::accumulate(m.begin(), m.end(), 0.0); }

void validate_measure(const Measure& m, const char* name) {
  if (m.empty()) throw std::invalid_argument(std::string(name) + ": measure has no atoms");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i]) || m[i] < 0.0) {
      std::ostringstream os;
      os << name << "[" << i << "] = " << m[i] << " is not a nonnegative weight";
      throw std::invalid_argument(os.str());
    }
  }
}

void validate_cost(const Tensor& cost, std::size_t n, std::size_t m) {
  if (cost.rank() != 2 || cost.shape()[0] != n || cost.shape()[1] != m) {
    std::ostringstream os;
    os << "cost has shape " << shape_string(cost.shape()) << ", expected [" << n << ", " << m
       << "]";
    throw std::invalid_argument(os.str());
  }
  for (double c : cost.data()) {
    if (!std::isfinite(c) || c < 0.0)
      throw std::invalid_argument("cost entries must be finite and nonnegative");
  }
}

std::vector<double> row_marginal(const Tensor& plan) {
  std::vector<double> out(plan.rows(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i)
    for (std::size_t j = 0; j < plan.cols(); ++j) out[i] += plan.at(i, j);
  return out;
}

std::vector<double> col_marginal(const Tensor& plan) {
  std::vector<double> out(plan.cols(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i)
    for (std::size_t j = 0; j < plan.cols(); ++j) out[j] += plan.at(i, j);
  return out;
}

std::vector<std::size_t> c_transform_argmin(const std::vector<double>& v, const Tensor& cost) {
  if (cost.rank() != 2 || cost.cols() != v.size())
    throw std::invalid_argument("c_transform: potential length " + std::to_string(v.size()) +
                                " does not match cost " + shape_string(cost.shape()));
  std::vector<std::size_t> idx(cost.rows(), 0);
  for (std::size_t i = 0; i < cost.rows(); ++i) {
    double best = cost.at(i, 0) - v[0];
    for (std::size_t j = 1; j < v.size(); ++j) {
      const double c = cost.at(i, j) - v[j];
      if (c < best) {
        best = c;
        idx[i] = j;
      }
    }
  }
  return idx;
}

std::vector<double> c_transform(const std::vector<double>& v, const Tensor& cost) {
  const auto idx = c_transform_argmin(v, cost);
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = cost.at(i, idx[i]) - v[idx[i]];
  return out;
}

double primal_objective(const Measure& mu, const Measure& nu, const Tensor& cost,
                        const ConjugateKind& psi1, const ConjugateKind& psi2, const Tensor& plan) {
  double value = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) value += cost[k] * plan[k];
  const auto rows = row_marginal(plan);
  const auto cols = col_marginal(plan);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto p = conjugates::primal_eval(psi1, rows[i] / mu[i]);
    if (!p.is_finite()) return kInf;
    value += mu[i] * p.value();
  }
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const auto p = conjugates::primal_eval(psi2, cols[j] / nu[j]);
    if (!p.is_finite()) return kInf;
    value += nu[j] * p.value();
  }
  return value;
}

PrimalResult primal_uot(const Measure& mu, const Measure& nu, const Tensor& cost,
                        const ConjugateKind& psi1, const ConjugateKind& psi2) {
  check_shapes(mu, nu, cost);
  for (double w : mu)
    if (w <= 0.0) throw std::invalid_argument("primal_uot: mu must be strictly positive");
  for (double w : nu)
    if (w <= 0.0) throw std::invalid_argument("primal_uot: nu must be strictly positive");

  if (is_linear(psi1) || is_linear(psi2))
    throw std::invalid_argument(
        "primal_uot: a linear conjugate pins the marginals; use verify_linear_reduction instead");

  const std::size_t n = mu.size(), m = nu.size();
  const bool cap_rows = is_softplus(psi1), cap_cols = is_softplus(psi2);
  const double start_scale = (cap_rows || cap_cols) ? 0.5 : 1.0;

  // Start from the product coupling scaled so no ratio exceeds start_scale.
  const double mass_mu = total_mass(mu), mass_nu = total_mass(nu);
  Tensor plan({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      plan.at(i, j) = start_scale * mu[i] * nu[j] / std::max(mass_mu, mass_nu);
  enforce_caps(plan, mu, nu, cap_rows, cap_cols);

  double value = primal_objective(mu, nu, cost, psi1, psi2, plan);
  if (!std::isfinite(value)) {
    throw std::invalid_argument("primal_uot: objective is +inf at the starting coupling for (" +
                                conjugates::to_string(psi1) + ", " +
                                conjugates::to_string(psi2) + ")");
  }

  Tensor grad({n, m});
  Tensor trial({n, m});
  double step = 1.0;
  int quiet = 0;
  double last_decrease = kInf;
  for (int iter = 1; iter <= kPrimalMaxIters; ++iter) {
    const auto rows = row_marginal(plan);
    const auto cols = col_marginal(plan);
    std::vector<double> slope_r(n), slope_c(m), curv_r(n), curv_c(m);
    for (std::size_t i = 0; i < n; ++i) {
      slope_r[i] = penalty_slope(psi1, rows[i] / mu[i]);
      curv_r[i] = penalty_curvature(psi1, rows[i] / mu[i]) / mu[i];
    }
    for (std::size_t j = 0; j < m; ++j) {
      slope_c[j] = penalty_slope(psi2, cols[j] / nu[j]);
      curv_c[j] = penalty_curvature(psi2, cols[j] / nu[j]) / nu[j];
    }
    // Each entry's step is scaled by the inverse of its diagonal curvature so
    // that atoms pushed towards a barrier (ratios near 0 or 1) do not force a
    // tiny step on every other entry.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        grad.at(i, j) = (cost.at(i, j) + slope_r[i] + slope_c[j]) / (1.0 + curv_r[i] + curv_c[j]);

    // Halve the step until the projected move does not increase the
    // objective; let it grow back afterwards.
    double trial_value = kInf;
    while (true) {
      for (std::size_t k = 0; k < plan.size(); ++k)
        trial[k] = std::max(0.0, plan[k] - step * grad[k]);
      enforce_caps(trial, mu, nu, cap_rows, cap_cols);
      trial_value = primal_objective(mu, nu, cost, psi1, psi2, trial);
      if (trial_value <= value || step < 1e-300) break;
      step *= 0.5;
    }
    const double decrease = trial_value <= value ? value - trial_value : 0.0;
    if (trial_value <= value) {
      std::swap(plan, trial);
      value = trial_value;
    }
    step = std::min(1.0, step * 1.5);
    last_decrease = decrease;

    quiet = decrease < kPrimalTol ? quiet + 1 : 0;
    if (quiet >= kPrimalPatience) return {value, plan, iter};
  }
  std::ostringstream os;
  os << "primal_uot did not converge in " << kPrimalMaxIters
     << " iterations (objective " << value << ", last decrease " << last_decrease << ")";
  throw std::runtime_error(os.str());
}

double semidual_objective(const Measure& mu, const Measure& nu, const Tensor& cost,
                          const ConjugateKind& psi1, const ConjugateKind& psi2,
                          const std::vector<double>& v) {
  const auto vc = c_transform(v, cost);
  double value = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    value -= mu[i] * conjugates::conjugate_eval(psi1, -vc[i]);
  for (std::size_t j = 0; j < nu.size(); ++j)
    value -= nu[j] * conjugates::conjugate_eval(psi2, -v[j]);
  return value;
}

SemidualResult semidual_uot(const Measure& mu, const Measure& nu, const Tensor& cost,
                            const ConjugateKind& psi1, const ConjugateKind& psi2) {
  check_shapes(mu, nu, cost);
  const std::size_t n = mu.size(), m = nu.size();
  std::vector<double> v(m, 0.0);
  std::vector<double> grad(m);

  SemidualResult best{-kInf, v, 0};
  double step = kSemidualStep;
  int stall = 0;
  for (int iter = 0; iter < kSemidualMaxIters; ++iter) {
    const auto idx = c_transform_argmin(v, cost);
    double value = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      value -= nu[j] * conjugates::conjugate_eval(psi2, -v[j]);
      grad[j] = nu[j] * conjugates::conjugate_grad(psi2, -v[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double vc = cost.at(i, idx[i]) - v[idx[i]];
      value -= mu[i] * conjugates::conjugate_eval(psi1, -vc);
      grad[idx[i]] -= mu[i] * conjugates::conjugate_grad(psi1, -vc);
    }
    if (!std::isfinite(value) || std::abs(value) > kSemidualBlowup) {
      std::ostringstream os;
      os << "semidual_uot diverged at iteration " << iter << " (value " << value
         << ") with conjugates (" << conjugates::to_string(psi1) << ", "
         << conjugates::to_string(psi2) << ")";
      throw std::runtime_error(os.str());
    }
    if (value > best.value) {
      best = {value, v, iter};
      stall = 0;
    } else if (++stall >= kSemidualStall) {
      step *= 0.5;
      v = best.potential;
      stall = 0;
      continue;
    }

    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    if (std::sqrt(norm2) < kSemidualGradTol) break;
    for (std::size_t j = 0; j < m; ++j) v[j] += step * grad[j];
  }
  return best;
}

Assignment exact_ot_uniform(const Tensor& cost) {
  if (cost.rank() != 2 || cost.rows() != cost.cols())
    throw std::invalid_argument("exact_ot_uniform: cost must be square, got " +
                                shape_string(cost.shape()));
  const std::size_t n = cost.rows();
  if (n == 0 || n > kMaxBruteForceSize)
    throw std::invalid_argument("exact_ot_uniform: n = " + std::to_string(n) +
                                " outside [1, " + std::to_string(kMaxBruteForceSize) + "]");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best{kInf, perm};
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost.at(i, perm[i]);
    c /= static_cast<double>(n);
    if (c < best.cost) best = {c, perm};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

// Euclidean projection onto {X >= 0, rows(X) = r, cols(X) = c} by Dykstra's
// alternating scheme. The affine constraint set needs no correction term.
Tensor project_transport_polytope(const Tensor& y, const std::vector<double>& r,
                                  const std::vector<double>& c) {
  const std::size_t n = r.size(), m = c.size();
  Tensor x = y;
  Tensor q({n, m});
  Tensor z({n, m});
  for (int iter = 0; iter < 100000; ++iter) {
    const auto rows = row_marginal(x);
    const auto cols = col_marginal(x);
    double total_dev = 0.0;
    std::vector<double> dr(n), dc(m);
    for (std::size_t i = 0; i < n; ++i) total_dev += (dr[i] = rows[i] - r[i]);
    for (std::size_t j = 0; j < m; ++j) dc[j] = cols[j] - c[j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        z.at(i, j) = x.at(i, j) - dr[i] / m - dc[j] / n + total_dev / (n * m);

    double change = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double w = z[k] + q[k];
      const double next = std::max(0.0, w);
      q[k] = w - next;
      change = std::max(change, std::abs(next - x[k]));
      x[k] = next;
    }
    if (change < 1e-16) break;
  }
  return x;
}

}  // namespace

LinearReductionReport verify_linear_reduction(double a, double b, const Measure& mu,
                                              const Measure& nu, const Tensor& cost) {
  if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw std::invalid_argument("verify_linear_reduction: need a > 0 and finite b");
  check_shapes(mu, nu, cost);
  const std::size_t n = mu.size();
  if (nu.size() != n)
    throw std::invalid_argument("verify_linear_reduction: mu and nu must have the same size");
  for (const Measure* w : {&mu, &nu})
    for (double x : *w)
      if (std::abs(x - 1.0 / n) > 1e-12)
        throw std::invalid_argument("verify_linear_reduction: measures must be uniform 1/n");

  LinearReductionReport rep;
  rep.a = a;
  rep.b = b;
  rep.ot_cost = exact_ot_uniform(cost).cost;

  std::vector<double> r(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = a * mu[i];
    c[i] = a * nu[i];
  }
  Tensor plan({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) plan.at(i, j) = a * mu[i] * nu[j];

  const double cmax = *std::max_element(cost.data().begin(), cost.data().end());
  if (cmax > 0.0) {
    const double step = a / (n * cmax);
    Tensor moved({n, n});
    for (int iter = 0; iter < 20000; ++iter) {
      for (std::size_t k = 0; k < plan.size(); ++k) moved[k] = plan[k] - step * cost[k];
      Tensor next = project_transport_polytope(moved, r, c);
      double change = 0.0;
      for (std::size_t k = 0; k < plan.size(); ++k)
        change = std::max(change, std::abs(next[k] - plan[k]));
      plan = std::move(next);
      if (change < 1e-14) break;
    }
  }

  for (std::size_t k = 0; k < plan.size(); ++k) rep.transport += cost[k] * plan[k];
  const auto rows = row_marginal(plan);
  const auto cols = col_marginal(plan);
  for (std::size_t i = 0; i < n; ++i) {
    rep.marginal_error = std::max(rep.marginal_error, std::abs(rows[i] - r[i]));
    rep.marginal_error = std::max(rep.marginal_error, std::abs(cols[i] - c[i]));
  }
  rep.transport_error = std::abs(rep.transport - a * rep.ot_cost);
  rep.uot_value = rep.transport - b * (total_mass(mu) + total_mass(nu));
  rep.plan = std::move(plan);

  std::ostringstream os;
  if (rep.transport_error > kTransportTolerance)
    os << "transport " << rep.transport << " differs from a*OT " << a * rep.ot_cost << "; ";
  if (rep.marginal_error > kMarginalTolerance)
    os << "marginal error " << rep.marginal_error << " exceeds " << kMarginalTolerance << "; ";
  rep.detail = os.str();
  rep.passed = rep.detail.empty();
  return rep;
}

}  // namespace rdgan::uot
