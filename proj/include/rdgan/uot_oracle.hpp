#ifndef RDGAN_UOT_ORACLE_HPP_
#define RDGAN_UOT_ORACLE_HPP_

// Small discrete transport solvers used to check the unbalanced-transport
// machinery numerically. All of them are deterministic and meant for a handful
// of atoms per side.
//
// The unbalanced primal is
//
//   min_{pi >= 0}  sum_ij C_ij pi_ij + sum_i mu_i Psi1(r_i) + sum_j nu_j Psi2(s_j)
//
// with r = row_sums(pi) / mu and s = col_sums(pi) / nu, and its semi-dual is
//
//   sup_v  sum_i mu_i (-Psi1*(-v^c_i)) + sum_j nu_j (-Psi2*(-v_j)),
//   v^c_i = min_j C_ij - v_j.

#include <cstddef>
#include <string>
#include <vector>

#include "rdgan/conjugates.hpp"
#include "rdgan/tensor.hpp"

namespace rdgan::uot {

using conjugates::ConjugateKind;

// Nonnegative atom weights.
using Measure = std::vector<double>;

double total_mass(const Measure& m);

// Throws std::invalid_argument on a negative or non-finite weight.
void validate_measure(const Measure& m, const char* name);
// Throws unless cost is a finite, nonnegative [n, m] matrix.
void validate_cost(const Tensor& cost, std::size_t n, std::size_t m);

// Row and column sums of an [n, m] coupling.
std::vector<double> row_marginal(const Tensor& plan);
std::vector<double> col_marginal(const Tensor& plan);

// v^c_i = min_j C_ij - v_j, by enumeration over j.
std::vector<double> c_transform(const std::vector<double>& v, const Tensor& cost);
// Index of the minimizing j for each row; ties go to the lowest j.
std::vector<std::size_t> c_transform_argmin(const std::vector<double>& v, const Tensor& cost);

struct PrimalResult {
  double value = 0.0;
  Tensor plan;
  int iterations = 0;
};

// Projected gradient descent on the coupling. Throws std::invalid_argument
// when the objective is +inf at the starting coupling (always the case for a
// linear conjugate) and std::runtime_error when it fails to converge.
PrimalResult primal_uot(const Measure& mu, const Measure& nu, const Tensor& cost,
                        const ConjugateKind& psi1, const ConjugateKind& psi2);

// Objective of the unbalanced primal at a given coupling; +inf outside the
// domain of either penalty.
double primal_objective(const Measure& mu, const Measure& nu, const Tensor& cost,
                        const ConjugateKind& psi1, const ConjugateKind& psi2, const Tensor& plan);

struct SemidualResult {
  double value = 0.0;
  std::vector<double> potential;
  int iterations = 0;
};

double semidual_objective(const Measure& mu, const Measure& nu, const Tensor& cost,
                          const ConjugateKind& psi1, const ConjugateKind& psi2,
                          const std::vector<double>& v);

// Gradient ascent on v from v = 0. Returns the best value seen. Throws
// std::runtime_error naming the conjugate if the objective blows up.
SemidualResult semidual_uot(const Measure& mu, const Measure& nu, const Tensor& cost,
                            const ConjugateKind& psi1, const ConjugateKind& psi2);

struct Assignment {
  double cost = 0.0;
  std::vector<std::size_t> permutation;
};

inline constexpr std::size_t kMaxBruteForceSize = 7;

// Exact OT between two uniform measures of n atoms (n <= 7) by enumerating
// permutations in lexicographic order; the first minimizer wins.
Assignment exact_ot_uniform(const Tensor& cost);

struct LinearReductionReport {
  double a = 0.0;
  double b = 0.0;
  double transport = 0.0;      // sum C_ij pi_ij of the solved coupling
  double ot_cost = 0.0;        // brute-force OT between mu and nu
  double transport_error = 0.0;  // |transport - a * ot_cost|
  double marginal_error = 0.0;   // max deviation of the marginals from a mu, a nu
  double uot_value = 0.0;      // transport - b (|mu| + |nu|)
  Tensor plan;
  bool passed = false;
  std::string detail;
};

inline constexpr double kTransportTolerance = 1e-4;
inline constexpr double kMarginalTolerance = 1e-6;

// With Psi1* = Psi2* = a x + b the penalties are finite only when the marginals
// equal a mu and a nu exactly, so the problem is a scaled OT problem. Solves
// it by projected gradient on the transportation polytope and compares with
// the brute-force assignment. mu and nu must be uniform of equal size n <= 7.
LinearReductionReport verify_linear_reduction(double a, double b, const Measure& mu,
                                              const Measure& nu, const Tensor& cost);

}  // namespace rdgan::uot

#endif  // RDGAN_UOT_ORACLE_HPP_
