#include "rdgan/conjugates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace rdgan::conjugates {

namespace {

constexpr double kSoftplusCutover = 30.0;
constexpr double kChiJunction = -2.0;

}  // namespace

ConjugateKind ConjugateKind::linear(double a, double b) {
  if (!(a > 0.0)) throw std::invalid_argument("linear conjugate requires a > 0");
  return {Family::kLinear, a, b};
}

ConjugateKind parse_kind(std::string_view text) {
  if (text == "softplus") return ConjugateKind::softplus();
  if (text == "chi2" || text == "chi_square") return ConjugateKind::chi_square();
  if (text == "kl") return ConjugateKind::kl();
  if (text == "linear") return ConjugateKind::linear(1.0, 0.0);
  if (text.starts_with("linear:")) {
    const std::string rest(text.substr(7));
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("expected linear:<a>:<b>, got '" + std::string(text) + "'");
    char* end = nullptr;
    const std::string a_text = rest.substr(0, colon), b_text = rest.substr(colon + 1);
    const double a = std::strtod(a_text.c_str(), &end);
    if (a_text.empty() || *end != '\0') throw std::invalid_argument("bad slope in '" + std::string(text) + "'");
    const double b = std::strtod(b_text.c_str(), &end);
    if (b_text.empty() || *end != '\0') throw std::invalid_argument("bad offset in '" + std::string(text) + "'");
    return ConjugateKind::linear(a, b);
  }
  throw std::invalid_argument("unknown conjugate '" + std::string(text) + "' (expected softplus, chi2, kl, linear)");
}

std::string to_string(const ConjugateKind& kind) {
  switch (kind.family) {
    case Family::kSoftplus: return "softplus";
    case Family::kChiSquare: return "chi2";
    case Family::kKL: return "kl";
    case Family::kLinear: {
      std::ostringstream os;
      os.precision(17);
      os << "linear:" << kind.a << ':' << kind.b;
      return os.str();
    }
  }
  return "unknown";
}

double conjugate_eval(const ConjugateKind& kind, double x) {
  switch (kind.family) {
    case Family::kSoftplus:
      return x > kSoftplusCutover ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Family::kChiSquare:
      return x >= kChiJunction ? 0.25 * x * x + x : -1.0;
    case Family::kKL:
      return std::exp(x - 1.0);
    case Family::kLinear:
      return kind.a * x + kind.b;
  }
  return 0.0;
}

double conjugate_grad(const ConjugateKind& kind, double x) {
  switch (kind.family) {
    case Family::kSoftplus:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      return std::exp(x) / (1.0 + std::exp(x));
    case Family::kChiSquare:
      return x >= kChiJunction ? 0.5 * x + 1.0 : 0.0;
    case Family::kKL:
      return std::exp(x - 1.0);
    case Family::kLinear:
      return kind.a;
  }
  return 0.0;
}

ExtendedValue primal_eval(const ConjugateKind& kind, double x) {
  switch (kind.family) {
    case Family::kSoftplus:
      if (x < 0.0 || x > 1.0) return ExtendedValue::infinity();
      if (x == 0.0 || x == 1.0) return ExtendedValue::finite(0.0);
      return ExtendedValue::finite(x * std::log(x) + (1.0 - x) * std::log1p(-x));
    case Family::kChiSquare:
      if (x < 0.0) return ExtendedValue::infinity();
      return ExtendedValue::finite((x - 1.0) * (x - 1.0));
    case Family::kKL:
      if (x < 0.0) return ExtendedValue::infinity();
      if (x == 0.0) return ExtendedValue::finite(0.0);
      return ExtendedValue::finite(x * std::log(x));
    case Family::kLinear:
      return x == kind.a ? ExtendedValue::finite(-kind.b) : ExtendedValue::infinity();
  }
  return ExtendedValue::infinity();
}

double primal_derivative(const ConjugateKind& kind, double x) {
  switch (kind.family) {
    case Family::kSoftplus: return std::log(x) - std::log1p(-x);
    case Family::kChiSquare: return 2.0 * (x - 1.0);
    case Family::kKL: return std::log(x) + 1.0;
    case Family::kLinear: break;
  }
  throw std::invalid_argument("primal_derivative: the linear family's primal is a point indicator");
}

double lipschitz_probe(const ConjugateKind& kind, const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("lipschitz_probe: no pairs");
  double worst = 0.0;
  for (const auto& [x, y] : pairs) {
    if (x == y) throw std::invalid_argument("lipschitz_probe: pair with equal coordinates");
    worst = std::max(worst, std::abs(conjugate_eval(kind, x) - conjugate_eval(kind, y)) / std::abs(x - y));
  }
  return worst;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("uniform_grid: need step > 0 and hi >= lo");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) grid[i] = lo + static_cast<double>(i) * step;
  return grid;
}

GridFunction numeric_biconjugate(const ConjugateKind& kind, const std::vector<double>& grid) {
  constexpr double kMaxSpacing = 0.01 + 1e-9;
  if (grid.size() < 2 || grid.front() > -20.0 || grid.back() < 20.0) {
    throw std::invalid_argument("numeric_biconjugate: grid must span at least [-20, 20]");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("numeric_biconjugate: grid is not strictly increasing");
    if (grid[i] - grid[i - 1] > kMaxSpacing) throw std::invalid_argument("numeric_biconjugate: grid spacing exceeds 0.01");
  }
  const std::size_t n = grid.size();
  std::vector<double> conj(n);
  for (std::size_t i = 0; i < n; ++i) conj[i] = conjugate_eval(kind, grid[i]);

  auto legendre = [&](const std::vector<double>& f, double y) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, grid[i] * y - f[i]);
    return best;
  };

  std::vector<double> bi(n);
  for (std::size_t j = 0; j < n; ++j) bi[j] = legendre(conj, grid[j]);

  const double center = 0.5 * (grid.front() + grid.back());
  const double half_width = 0.25 * (grid.back() - grid.front());
  GridFunction out;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(grid[k] - center) > half_width) continue;
    out.points.push_back(grid[k]);
    out.values.push_back(legendre(bi, grid[k]));
  }
  return out;
}

}  // namespace rdgan::conjugates
