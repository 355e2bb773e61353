#ifndef RDGAN_DATA_METRICS_HPP_
#define RDGAN_DATA_METRICS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "rdgan/tensor.hpp"

namespace rdgan::data {

using Rng = std::mt19937_64;

struct Component {
  std::vector<double> mean;
  double std = 1.0;
  double weight = 1.0;
  bool clean = true;
};

struct MixtureSpec {
  std::size_t dim = 1;
  std::vector<Component> components;

  // Throws std::invalid_argument when dims disagree, a std is not positive,
  // weights do not sum to 1 (within 1e-9) or no component is clean.
  void validate() const;
  bool has_outliers() const;
  // The clean components alone, weights renormalised.
  MixtureSpec clean_only() const;
  std::vector<std::vector<double>> clean_means() const;
  double max_clean_std() const;

  // 0.95 N(1, 0.1^2) clean + 0.05 N(-1, 0.05^2) outliers, std read as standard
  // deviation.
  static MixtureSpec toy_1d();
  // Eight clean modes on a radius-2 circle (std 0.05, 0.95 of the mass) and
  // one outlier cluster at (5, 5) with std 0.05 and weight 0.05.
  static MixtureSpec ring_2d();
};

struct NearestComponent {
  MixtureSpec spec;
};
struct Threshold1D {
  double boundary = 0.0;
};
using OutlierRule = std::variant<NearestComponent, Threshold1D>;

Tensor sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng);

// Share of samples the rule labels as outliers. NearestComponent labels a
// sample by its closest component mean (ties go to the lower index);
// Threshold1D labels x < boundary.
double outlier_fraction(const Tensor& samples, const OutlierRule& rule);

// W1 between two 1D empirical distributions: the mean absolute difference of
// the sorted samples. When the counts differ, the larger set is subsampled
// without replacement to the smaller count using `rng`.
double wasserstein1_1d(std::span<const double> a, std::span<const double> b, Rng& rng);
double wasserstein1_1d(std::span<const double> a, std::span<const double> b);

// Mean over coordinates of the 1D W1 between marginals; equals
// wasserstein1_1d for single-column samples.
double marginal_wasserstein1(const Tensor& a, const Tensor& b);

// Number of modes with at least max(10, 0.001 n) samples inside `radius`.
std::size_t mode_coverage(const Tensor& samples, const std::vector<std::vector<double>>& modes, double radius);

// Densities counts / (n * bin_width); samples outside [lo, hi) land in the
// first or last bin.
std::vector<double> histogram(std::span<const double> samples, std::size_t bins, double lo, double hi);

// Column j of a sample matrix.
std::vector<double> column(const Tensor& samples, std::size_t j);

}  // namespace rdgan::data

#endif  // RDGAN_DATA_METRICS_HPP_
