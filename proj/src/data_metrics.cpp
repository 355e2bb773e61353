#include "rdgan/data_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rdgan::data {

void MixtureSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("mixture: dim must be at least 1");
  if (components.empty()) throw std::invalid_argument("mixture: no components");
  double total = 0.0;
  bool any_clean = false;
  for (std::size_t k = 0; k < components.size(); ++k) {
    const Component& c = components[k];
    const std::string where = "mixture component " + std::to_string(k);
    if (c.mean.size() != dim) throw std::invalid_argument(where + ": mean has wrong dimension");
    if (!(c.std > 0.0)) throw std::invalid_argument(where + ": std must be positive");
    if (!(c.weight >= 0.0)) throw std::invalid_argument(where + ": weight must be non-negative");
    total += c.weight;
    any_clean = any_clean || c.clean;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture: weights must sum to 1");
  if (!any_clean) throw std::invalid_argument("mixture: at least one component must be clean");
}

bool MixtureSpec::has_outliers() const {
  return std::any_of(components.begin(), components.end(), [](const Component& c) { return !c.clean; });
}

MixtureSpec MixtureSpec::clean_only() const {
  MixtureSpec out{dim, {}};
  double total = 0.0;
  for (const Component& c : components) {
    if (c.clean) {
      out.components.push_back(c);
      total += c.weight;
    }
  }
  if (out.components.empty() || !(total > 0.0)) throw std::invalid_argument("mixture: no clean mass");
  for (Component& c : out.components) c.weight /= total;
  return out;
}

std::vector<std::vector<double>> MixtureSpec::clean_means() const {
  std::vector<std::vector<double>> means;
  for (const Component& c : components) {
    if (c.clean) means.push_back(c.mean);
  }
  return means;
}

double MixtureSpec::max_clean_std() const {
  double s = 0.0;
  for (const Component& c : components) {
    if (c.clean) s = std::max(s, c.std);
  }
  return s;
}

MixtureSpec MixtureSpec::toy_1d() {
  return MixtureSpec{1, {{{1.0}, 0.1, 0.95, true}, {{-1.0}, 0.05, 0.05, false}}};
}

MixtureSpec MixtureSpec::ring_2d() {
  MixtureSpec spec{2, {}};
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    spec.components.push_back({{2.0 * std::cos(angle), 2.0 * std::sin(angle)}, 0.05, 0.95 / 8.0, true});
  }
  spec.components.push_back({{5.0, 5.0}, 0.05, 0.05, false});
  return spec;
}

Tensor sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  std::vector<double> weights;
  for (const Component& c : spec.components) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out({n, spec.dim});
  for (std::size_t r = 0; r < n; ++r) {
    const Component& c = spec.components[pick(rng)];
    for (std::size_t j = 0; j < spec.dim; ++j) out[r * spec.dim + j] = c.mean[j] + c.std * normal(rng);
  }
  return out;
}

double outlier_fraction(const Tensor& samples, const OutlierRule& rule) {
  const std::size_t n = samples.rows();
  if (samples.size() == 0 || n == 0) throw std::invalid_argument("outlier_fraction: no samples");
  const std::size_t d = samples.cols();
  std::size_t outliers = 0;
  if (const auto* threshold = std::get_if<Threshold1D>(&rule)) {
    if (d != 1) throw std::invalid_argument("outlier_fraction: Threshold1D needs one column");
    for (std::size_t r = 0; r < n; ++r) outliers += samples[r] < threshold->boundary ? 1 : 0;
  } else {
    const MixtureSpec& spec = std::get<NearestComponent>(rule).spec;
    if (!spec.has_outliers()) throw std::invalid_argument("outlier_fraction: rule has no outlier component");
    if (spec.dim != d) throw std::invalid_argument("outlier_fraction: sample dimension differs from the mixture");
    for (std::size_t r = 0; r < n; ++r) {
      double best = std::numeric_limits<double>::infinity();
      bool clean = true;
      for (const Component& c : spec.components) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = samples[r * d + j] - c.mean[j];
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          clean = c.clean;
        }
      }
      outliers += clean ? 0 : 1;
    }
  }
  return static_cast<double>(outliers) / static_cast<double>(n);
}

double wasserstein1_1d(std::span<const double> a, std::span<const double> b, Rng& rng) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample set");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  auto subsample = [&rng](std::vector<double>& v, std::size_t k) {
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(k);
  };
  if (x.size() > y.size()) subsample(x, y.size());
  if (y.size() > x.size()) subsample(y, x.size());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double wasserstein1_1d(std::span<const double> a, std::span<const double> b) {
  Rng rng(0);
  return wasserstein1_1d(a, b, rng);
}

std::vector<double> column(const Tensor& samples, std::size_t j) {
  const std::size_t d = samples.cols();
  if (j >= d) throw std::out_of_range("column index out of range");
  std::vector<double> out(samples.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = samples[r * d + j];
  return out;
}

double marginal_wasserstein1(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("marginal_wasserstein1: dimensions differ");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) acc += wasserstein1_1d(column(a, j), column(b, j));
  return acc / static_cast<double>(a.cols());
}

std::size_t mode_coverage(const Tensor& samples, const std::vector<std::vector<double>>& modes, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("mode_coverage: radius must be positive");
  const std::size_t n = samples.rows(), d = samples.cols();
  const double needed = std::max(10.0, 0.001 * static_cast<double>(n));
  std::size_t covered = 0;
  for (const auto& mode : modes) {
    if (mode.size() != d) throw std::invalid_argument("mode_coverage: mode dimension differs from samples");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = samples[r * d + j] - mode[j];
        dist += diff * diff;
      }
      hits += dist <= radius * radius ? 1 : 0;
    }
    covered += static_cast<double>(hits) >= needed ? 1 : 0;
  }
  return covered;
}

std::vector<double> histogram(std::span<const double> samples, std::size_t bins, double lo, double hi) {
  if (bins < 2) throw std::invalid_argument("histogram: need at least two bins");
  if (!(lo < hi)) throw std::invalid_argument("histogram: need lo < hi");
  if (samples.empty()) throw std::invalid_argument("histogram: no samples");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> counts(bins, 0.0);
  for (double x : samples) {
    const double pos = std::floor((x - lo) / width);
    std::size_t k = 0;
    if (pos >= static_cast<double>(bins)) {
      k = bins - 1;
    } else if (pos > 0.0) {
      k = static_cast<std::size_t>(pos);
    }
    counts[k] += 1.0;
  }
  const double norm = static_cast<double>(samples.size()) * width;
  for (double& c : counts) c /= norm;
  return counts;
}

}  // namespace rdgan::data
