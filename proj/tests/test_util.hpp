#ifndef RDGAN_TESTS_TEST_UTIL_HPP_
#define RDGAN_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <random>
#include <string>

#include "rdgan/autodiff.hpp"
#include "rdgan/tensor.hpp"

namespace rdgan::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Pushes every entry at least `gap` away from zero, keeping its sign.
inline Tensor nudge_from_zero(Tensor t, double gap) {
  for (auto& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

// Central-difference derivative of a scalar graph output with respect to one
// element of one binding. Uses only forward().
inline double fd_partial(autodiff::Graph& g, autodiff::Bindings b, const std::string& leaf, std::size_t k,
                         double h) {
  const double x = b.at(leaf)[k];
  b.at(leaf)[k] = x + h;
  const double up = g.forward(b).item();
  b.at(leaf)[k] = x - h;
  const double down = g.forward(b).item();
  return (up - down) / (2.0 * h);
}

}  // namespace rdgan::testing

#endif  // RDGAN_TESTS_TEST_UTIL_HPP_
