#pragma once

#include <cmath>
#include <random>

#include "efwi/discretization.hpp"
#include "efwi/model.hpp"

namespace testing {

using namespace efwi;

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

template <class A, class B>
double rel_err(const A& a, const B& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline RealVector random_real(std::mt19937_64& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealVector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline ComplexVector random_complex(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  ComplexVector v(n);
  for (Index i = 0; i < n; ++i) v[i] = Complex(g(rng), g(rng));
  return v;
}

/// Random smooth-ish physical model around (3000, 1750, 2000).
inline ElasticModel random_velocity_model(std::mt19937_64& rng, const GridGeometry& g) {
  const Index n = g.size();
  return ElasticModel::from_velocities(g, random_real(rng, n, 2700.0, 3300.0),
                                       random_real(rng, n, 1500.0, 1900.0),
                                       random_real(rng, n, 1800.0, 2200.0));
}

inline BoundarySpec test_boundary(int width = 4) {
  BoundarySpec bc;
  bc.pml_width = width;
  bc.pml_max_damping = suggested_pml_damping(3300.0, width * 30.0);
  return bc;
}

}  // namespace testing
