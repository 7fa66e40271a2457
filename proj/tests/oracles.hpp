// Independent test oracles. These deliberately avoid the implementation
// paths they are used to check: the bracket oracle only calls fields(), the
// transport oracle enumerates permutations, and the Heisenberg formulas come
// from the planar-projection and isoperimetric arguments.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "srotlab/frames.hpp"

namespace oracles {

using srotlab::ControlFrame;
using srotlab::Mat;
using srotlab::Vec;

// [f_i, f_j](x) from field evaluations only (directional central
// differences); independent of ControlFrame::jacobians.
inline Vec bracket_fd(const ControlFrame& frame, int i, int j, const Vec& x,
                      double h = 1e-6) {
  const Vec fi = frame.field(i, x);
  const Vec fj = frame.field(j, x);
  const Vec dj_along_i =
      (frame.field(j, x + h * fi) - frame.field(j, x - h * fi)) / (2.0 * h);
  const Vec di_along_j =
      (frame.field(i, x + h * fj) - frame.field(i, x - h * fj)) / (2.0 * h);
  return dj_along_i - di_along_j;
}

// exact optimum of an equal-weight transport instance by enumerating all
// n! assignments; n <= 8.
inline double permutation_min_cost(const Mat& C) {
  const int n = static_cast<int>(C.rows());
  std::vector<int> sigma(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int a = 0; a < n; ++a) cost += C(a, sigma[static_cast<std::size_t>(a)]);
    best = std::min(best, cost);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return best / n;
}

// d_SR(0, (a, b, ab/2)) = sqrt(a^2 + b^2) for the Heisenberg frame: the
// planar projection is a lower bound and the constant-control line attains
// it.
inline double heisenberg_line_distance(double a, double b) {
  return std::sqrt(a * a + b * b);
}

// d_SR(0, (0, 0, z)) = 2 sqrt(pi z): the third coordinate is the signed area
// swept by the planar projection, and circles minimize perimeter at fixed
// area.
inline double heisenberg_vertical_distance(double z) {
  return 2.0 * std::sqrt(M_PI * std::abs(z));
}

inline Vec random_point(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> unif(-scale, scale);
  Vec x(n);
  for (int k = 0; k < n; ++k) x(k) = unif(rng);
  return x;
}

inline Vec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(n);
  do {
    for (int k = 0; k < n; ++k) v(k) = gauss(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

}  // namespace oracles
