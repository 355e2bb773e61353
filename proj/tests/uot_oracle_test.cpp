#include "rdgan/uot_oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace rdgan::uot {
namespace {

const ConjugateKind kSoftplus = ConjugateKind::softplus();
const ConjugateKind kChi2 = ConjugateKind::chi_square();

Measure random_measure(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Measure m(n);
  for (auto& w : m) w = u(rng);
  const double total = std::accumulate(m.begin(), m.end(), 0.0);
  for (auto& w : m) w /= total;
  return m;
}

Tensor random_cost(std::size_t n, std::size_t m, std::mt19937_64& rng, double hi = 2.0) {
  std::uniform_real_distribution<double> u(0.0, hi);
  Tensor c({n, m});
  for (auto& v : c.data()) v = u(rng);
  return c;
}

Measure uniform(std::size_t n) { return Measure(n, 1.0 / static_cast<double>(n)); }

TEST(UotOracleTest, CTransformExamples) {
  const Tensor c = Tensor::matrix({{0, 1}, {1, 0}});
  EXPECT_EQ(c_transform({0.0, 0.0}, c), (std::vector<double>{0.0, 0.0}));
  const auto shifted = c_transform({0.75, 0.75}, c);
  EXPECT_EQ(shifted, (std::vector<double>{-0.75, -0.75}));
  EXPECT_EQ(c_transform_argmin({0.0, 0.0}, Tensor({2, 2}, 1.0)), (std::vector<std::size_t>{0, 0}));
}

TEST(UotOracleTest, CTransformMatchesIndependentEnumeration) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor c = random_cost(5, 5, rng);
    std::vector<double> v(5);
    for (auto& x : v) x = g(rng);
    const auto got = c_transform(v, c);
    for (std::size_t i = 0; i < 5; ++i) {
      double best = c.at(i, 0) - v[0];
      for (std::size_t j = 1; j < 5; ++j) best = std::min(best, c.at(i, j) - v[j]);
      EXPECT_EQ(got[i], best);
    }
  }
}

TEST(UotOracleTest, InputValidation) {
  EXPECT_THROW(validate_measure({0.5, -0.1}, "mu"), std::invalid_argument);
  EXPECT_THROW(validate_cost(Tensor::matrix({{0, -1}}), 1, 2), std::invalid_argument);
  EXPECT_THROW(validate_cost(Tensor({2, 2}), 2, 3), std::invalid_argument);
  EXPECT_THROW(primal_uot({0.5, 0.0}, {0.5, 0.5}, Tensor({2, 2}), kSoftplus, kSoftplus), std::invalid_argument);
  EXPECT_THROW(primal_uot(uniform(2), uniform(2), Tensor({2, 2}), ConjugateKind::linear(1, 0),
                          ConjugateKind::linear(1, 0)),
               std::invalid_argument);
}

TEST(UotOracleTest, PrimalZeroCostSoftplusAnchor) {
  const Measure mu{0.2, 0.3, 0.5};
  const PrimalResult r = primal_uot(mu, mu, Tensor({3, 3}), kSoftplus, kSoftplus);
  EXPECT_NEAR(r.value, -2.0 * std::log(2.0), 1e-6);
  const auto rows = row_marginal(r.plan), cols = col_marginal(r.plan);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(rows[i], mu[i] / 2, 1e-4);
    EXPECT_NEAR(cols[i], mu[i] / 2, 1e-4);
  }
}

TEST(UotOracleTest, PrimalZeroCostChiSquareAnchor) {
  const Measure mu{0.25, 0.75};
  const Tensor diag = Tensor::matrix({{0.25, 0}, {0, 0.75}});
  EXPECT_EQ(primal_objective(mu, mu, Tensor({2, 2}), kChi2, kChi2, diag), 0.0);
  const PrimalResult r = primal_uot(mu, mu, Tensor({2, 2}), kChi2, kChi2);
  EXPECT_NEAR(r.value, 0.0, 1e-9);
}

TEST(UotOracleTest, PrimalObjectiveIsInfiniteOutsideDomain) {
  const Measure mu{0.5, 0.5};
  // Row ratio 1.2 > 1 is outside the softplus primal's domain.
  const Tensor plan = Tensor::matrix({{0.6, 0}, {0, 0.1}});
  EXPECT_TRUE(std::isinf(primal_objective(mu, mu, Tensor({2, 2}), kSoftplus, kSoftplus, plan)));
}

TEST(UotOracleTest, SemidualZeroCostSoftplusAnchor) {
  const Measure mu{0.1, 0.4, 0.5};
  EXPECT_NEAR(semidual_objective(mu, mu, Tensor({3, 3}), kSoftplus, kSoftplus, {0, 0, 0}), -2.0 * std::log(2.0),
              1e-15);
  const SemidualResult r = semidual_uot(mu, mu, Tensor({3, 3}), kSoftplus, kSoftplus);
  EXPECT_NEAR(r.value, -2.0 * std::log(2.0), 1e-9);
}

TEST(UotOracleTest, RandomFourByFourSoftplusAgreement) {
  std::mt19937_64 rng(2);
  const Measure mu = random_measure(4, rng), nu = random_measure(4, rng);
  const Tensor c = random_cost(4, 4, rng);
  const double p = primal_uot(mu, nu, c, kSoftplus, kSoftplus).value;
  const double s = semidual_uot(mu, nu, c, kSoftplus, kSoftplus).value;
  EXPECT_LE(std::abs(p - s), 1e-3 * (1 + std::abs(p)));
}

TEST(UotOracleTest, RandomThreeByThreeChiSquareAgreement) {
  std::mt19937_64 rng(3);
  const Measure mu = random_measure(3, rng), nu = random_measure(3, rng);
  const Tensor c = random_cost(3, 3, rng);
  const double p = primal_uot(mu, nu, c, kChi2, kChi2).value;
  const double s = semidual_uot(mu, nu, c, kChi2, kChi2).value;
  EXPECT_LE(std::abs(p - s), 1e-3 * (1 + std::abs(p)));
}

// Fifty seeded instances of mixed sizes for both conjugate pairs.
TEST(UotOracleTest, PrimalSemidualAgreementAndWeakDuality) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = size(rng), m = size(rng);
    const Measure mu = random_measure(n, rng), nu = random_measure(m, rng);
    const Tensor c = random_cost(n, m, rng);
    for (const auto& kind : {kSoftplus, kChi2}) {
      const double p = primal_uot(mu, nu, c, kind, kind).value;
      const double s = semidual_uot(mu, nu, c, kind, kind).value;
      EXPECT_LE(std::abs(p - s), 1e-3 * (1 + std::abs(p))) << to_string(kind) << " trial " << trial;
      EXPECT_LE(s, p + 1e-3) << to_string(kind) << " trial " << trial;
    }
  }
}

TEST(UotOracleTest, KlPairAgreementOnSmallInstance) {
  std::mt19937_64 rng(8);
  const Measure mu = random_measure(3, rng), nu = random_measure(4, rng);
  const Tensor c = random_cost(3, 4, rng);
  const ConjugateKind kl = ConjugateKind::kl();
  const double p = primal_uot(mu, nu, c, kl, kl).value;
  const double s = semidual_uot(mu, nu, c, kl, kl).value;
  EXPECT_LE(std::abs(p - s), 1e-3 * (1 + std::abs(p)));
}

TEST(UotOracleTest, ExactOtExamples) {
  const Assignment id = exact_ot_uniform(Tensor::matrix({{0, 1}, {1, 0}}));
  EXPECT_EQ(id.cost, 0.0);
  EXPECT_EQ(id.permutation, (std::vector<std::size_t>{0, 1}));
  const Assignment flat = exact_ot_uniform(Tensor({4, 4}, 2.5));
  EXPECT_DOUBLE_EQ(flat.cost, 2.5);
  EXPECT_EQ(flat.permutation, (std::vector<std::size_t>{0, 1, 2, 3}));
  const Assignment swap = exact_ot_uniform(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(swap.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_THROW(exact_ot_uniform(Tensor({8, 8})), std::invalid_argument);
  EXPECT_THROW(exact_ot_uniform(Tensor({2, 3})), std::invalid_argument);
}

TEST(UotOracleTest, ExactOtBeatsRandomPermutations) {
  std::mt19937_64 rng(5);
  const Tensor c = random_cost(5, 5, rng);
  const Assignment best = exact_ot_uniform(c);
  std::vector<std::size_t> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < 100; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) total += c.at(i, perm[i]);
    EXPECT_LE(best.cost, total / 5.0 + 1e-15);
  }
}

TEST(UotOracleTest, LinearReductionExamples) {
  std::mt19937_64 rng(6);
  const Tensor c4 = random_cost(4, 4, rng);
  const LinearReductionReport one = verify_linear_reduction(1.0, 0.0, uniform(4), uniform(4), c4);
  EXPECT_TRUE(one.passed) << one.detail;
  EXPECT_NEAR(one.transport, exact_ot_uniform(c4).cost, 1e-4);
  const LinearReductionReport two = verify_linear_reduction(2.0, 0.3, uniform(4), uniform(4), c4);
  EXPECT_TRUE(two.passed) << two.detail;
  EXPECT_NEAR(two.transport, 2.0 * exact_ot_uniform(c4).cost, 1e-4);
  EXPECT_NEAR(two.uot_value, two.transport - 0.3 * 2.0, 1e-12);
  const LinearReductionReport zero = verify_linear_reduction(0.5, 0.0, uniform(3), uniform(3), Tensor({3, 3}));
  EXPECT_TRUE(zero.passed) << zero.detail;
  EXPECT_NEAR(zero.transport, 0.0, 1e-12);
  for (double r : row_marginal(zero.plan)) EXPECT_NEAR(r, 0.5 / 3, 1e-6);
  for (double s : col_marginal(zero.plan)) EXPECT_NEAR(s, 0.5 / 3, 1e-6);
}

TEST(UotOracleTest, LinearReductionSeededInstances) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  for (double a : {0.5, 1.0, 2.0}) {
    for (int k = 0; k < 10; ++k) {
      const std::size_t n = size(rng);
      const LinearReductionReport r = verify_linear_reduction(a, 0.0, uniform(n), uniform(n), random_cost(n, n, rng));
      EXPECT_TRUE(r.passed) << "a=" << a << " n=" << n << ": " << r.detail;
      EXPECT_LE(r.transport_error, kTransportTolerance);
      EXPECT_LE(r.marginal_error, kMarginalTolerance);
    }
  }
}

TEST(UotOracleTest, LinearReductionRejectsNonUniform) {
  EXPECT_THROW(verify_linear_reduction(1.0, 0.0, {0.3, 0.7}, uniform(2), Tensor({2, 2})), std::invalid_argument);
  EXPECT_THROW(verify_linear_reduction(0.0, 0.0, uniform(2), uniform(2), Tensor({2, 2})), std::invalid_argument);
}

// Inliers from N(0, 0.3^2 I) in 2D plus one far atom at (3, 3); squared
// distance cost. The softplus pair lets the solver shed the outlier's mass.
TEST(UotOracleTest, SoftplusDiscardsOutlierMass) {
  for (std::uint64_t seed : {11, 12, 13}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    const std::size_t n = 6, m = 6;
    std::vector<std::array<double, 2>> xs(n), ys(m);
    for (std::size_t i = 0; i + 1 < n; ++i) xs[i] = {g(rng), g(rng)};
    xs[n - 1] = {3.0, 3.0};
    for (auto& y : ys) y = {g(rng), g(rng)};
    Tensor c({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        c.at(i, j) = std::pow(xs[i][0] - ys[j][0], 2) + std::pow(xs[i][1] - ys[j][1], 2);
    std::vector<double> all(c.data().begin(), c.data().end());
    std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
    const double median = all[all.size() / 2];
    for (std::size_t j = 0; j < m; ++j) ASSERT_GT(c.at(n - 1, j), 10 * median);

    const Measure mu = uniform(n), nu = uniform(m);
    const PrimalResult r = primal_uot(mu, nu, c, kSoftplus, kSoftplus);
    const auto rows = row_marginal(r.plan);
    EXPECT_LE(rows[n - 1], 0.25 * mu[n - 1]) << "seed " << seed;
    for (std::size_t i = 0; i + 1 < n; ++i) EXPECT_GE(rows[i], 0.40 * mu[i]) << "seed " << seed << " row " << i;
  }
}

}  // namespace
}  // namespace rdgan::uot
