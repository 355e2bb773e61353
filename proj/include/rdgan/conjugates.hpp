#ifndef RDGAN_CONJUGATES_HPP_
#define RDGAN_CONJUGATES_HPP_

// Marginal-penalty functions for unbalanced transport, each described by its
// convex conjugate Psi*. Four families are supported:
//
//   softplus   Psi*(x) = ln(1 + e^x)          Psi(r) = r ln r + (1-r) ln(1-r) on [0,1]
//   chi2       Psi*(x) = x^2/4 + x (x >= -2)  Psi(r) = (r-1)^2 on r >= 0
//                      = -1       (x <  -2)
//   kl         Psi*(x) = e^(x-1)              Psi(r) = r ln r on r >= 0
//   linear     Psi*(x) = a x + b, a > 0       Psi(r) = -b at r = a, +inf elsewhere
//
// Every Psi* here is non-decreasing and differentiable. Only softplus has a
// bounded derivative (its Lipschitz constant is 1).

#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rdgan::conjugates {

enum class Family { kSoftplus, kChiSquare, kKL, kLinear };

struct ConjugateKind {
  Family family = Family::kSoftplus;
  // Slope and offset; used by kLinear only.
  double a = 1.0;
  double b = 0.0;

  static ConjugateKind softplus() { return {Family::kSoftplus}; }
  static ConjugateKind chi_square() { return {Family::kChiSquare}; }
  static ConjugateKind kl() { return {Family::kKL}; }
  // Throws std::invalid_argument unless a > 0.
  static ConjugateKind linear(double a, double b);

  friend bool operator==(const ConjugateKind&, const ConjugateKind&) = default;
};

// "softplus", "chi2", "kl", "linear" (a=1, b=0) or "linear:<a>:<b>".
ConjugateKind parse_kind(std::string_view text);
std::string to_string(const ConjugateKind& kind);

// A real number or +infinity; primal functions are +inf outside their domain.
class ExtendedValue {
 public:
  static ExtendedValue finite(double v) { return ExtendedValue(v); }
  static ExtendedValue infinity() { return ExtendedValue(std::numeric_limits<double>::infinity()); }

  bool is_finite() const { return value_ != std::numeric_limits<double>::infinity(); }
  // +inf when not finite.
  double value() const { return value_; }

 private:
  explicit ExtendedValue(double v) : value_(v) {}
  double value_;
};

double conjugate_eval(const ConjugateKind& kind, double x);
double conjugate_grad(const ConjugateKind& kind, double x);
ExtendedValue primal_eval(const ConjugateKind& kind, double x);

// Derivative of the primal Psi at an interior point of its domain. For the
// linear family the primal has no interior and this throws.
double primal_derivative(const ConjugateKind& kind, double x);

// max |Psi*(x) - Psi*(y)| / |x - y| over the given pairs.
double lipschitz_probe(const ConjugateKind& kind, const std::vector<std::pair<double, double>>& pairs);

struct GridFunction {
  std::vector<double> points;
  std::vector<double> values;
};

// Discrete Legendre transform of Psi* twice over a sorted grid: f**(y) = max_x
// (x y - f*(x)) and f***(z) = max_y (y z - f**(y)), both maxima over grid
// points. Returns f*** on the inner half of the grid. The grid must cover
// [-20, 20] with spacing at most 0.01.
GridFunction numeric_biconjugate(const ConjugateKind& kind, const std::vector<double>& grid);

// Uniform grid lo, lo + step, ..., hi (inclusive when hi is reached within
// rounding).
std::vector<double> uniform_grid(double lo, double hi, double step);

}  // namespace rdgan::conjugates

#endif  // RDGAN_CONJUGATES_HPP_
