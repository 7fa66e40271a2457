#include "srotlab/regularity.hpp"

#include <cmath>
#include <random>

#include "srotlab/errors.hpp"

namespace srotlab {

namespace {

double pair_d2(const FramePtr& frame, const Vec& x, const Vec& y,
               const DistanceOptions& opts) {
  if ((x - y).norm() == 0.0) return 0.0;
  const DistanceResult res = distance(frame, x, y, opts);
  if (!res.converged) {
    throw NoConvergenceError("regularity probe: distance solve failed");
  }
  return res.value * res.value;
}

}  // namespace

ProbeResult semiconcavity_probe(const FramePtr& frame, const PairRegion& region,
                                int samples, const SemiconcavityOptions& opts) {
  const int n = frame->ambient_dim();
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  auto jitter = [&](const Vec& center) {
    Vec z = center;
    for (int k = 0; k < n; ++k) z(k) += region.box_halfwidth * unif(rng);
    return z;
  };
  auto in_band = [&](const Vec& x, const Vec& y) {
    const DistanceResult res = distance(frame, x, y, opts.solver);
    return res.converged && res.value >= region.d_min && res.value <= region.d_max;
  };

  ProbeResult out;
  out.scale = region.box_halfwidth;
  const int max_attempts = samples * opts.max_attempts_factor;
  while (out.samples < samples && out.attempts < max_attempts) {
    ++out.attempts;
    // two pair-space points A = (xA,yA), B = (xB,yB)
    const Vec xA = jitter(region.x_center);
    const Vec yA = jitter(region.y_center);
    const Vec xB = jitter(region.x_center);
    const Vec yB = jitter(region.y_center);
    if (!in_band(xA, yA) || !in_band(xB, yB)) continue;

    bool segment_ok = true;
    const double uA = pair_d2(frame, xA, yA, opts.solver);
    const double uB = pair_d2(frame, xB, yB, opts.solver);
    const double sep2 =
        (xA - xB).squaredNorm() + (yA - yB).squaredNorm();
    if (sep2 < 1e-16) continue;
    double worst = -1e300;
    for (double mu : opts.mu_grid) {
      if (mu <= 0.0 || mu >= 1.0) continue;  // endpoint quotients cancel to 0
      const Vec xm = mu * xB + (1.0 - mu) * xA;
      const Vec ym = mu * yB + (1.0 - mu) * yA;
      if (!in_band(xm, ym)) {
        segment_ok = false;
        break;
      }
      const double um = pair_d2(frame, xm, ym, opts.solver);
      const double quotient =
          (mu * uB + (1.0 - mu) * uA - um) / (mu * (1.0 - mu) * sep2);
      worst = std::max(worst, quotient);
    }
    if (!segment_ok) continue;
    ++out.samples;
    out.estimate = std::max(out.estimate, worst);
  }
  return out;
}

ProbeResult lipschitz_probe(const FramePtr& frame, const Vec& box_low,
                            const Vec& box_high, int samples,
                            const LipschitzOptions& opts) {
  const int n = frame->ambient_dim();
  if (box_low.size() != n || box_high.size() != n) {
    throw WrongDimensionError("lipschitz_probe: box dimension mismatch");
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  auto draw_point = [&]() {
    Vec z(n);
    for (int k = 0; k < n; ++k) {
      z(k) = box_low(k) + (box_high(k) - box_low(k)) * unif(rng);
    }
    return z;
  };

  ProbeResult out;
  out.scale = opts.scale;
  while (out.samples < samples) {
    ++out.attempts;
    const Vec x = draw_point();
    // every third pair crosses the diagonal: y is a small perturbation of x
    const bool near_diagonal = (out.attempts % 3 == 0);
    Vec y = near_diagonal ? x : draw_point();
    if (near_diagonal) {
      for (int k = 0; k < n; ++k) y(k) += opts.scale * sym(rng);
    }
    Vec xp = x, yp = y;
    for (int k = 0; k < n; ++k) {
      xp(k) += opts.scale * sym(rng);
      yp(k) += opts.scale * sym(rng);
    }
    const double sep =
        std::sqrt((x - xp).squaredNorm() + (y - yp).squaredNorm());
    if (sep < 1e-14) continue;
    const double ua = pair_d2(frame, x, y, opts.solver);
    const double ub = pair_d2(frame, xp, yp, opts.solver);
    ++out.samples;
    out.estimate = std::max(out.estimate, std::abs(ua - ub) / sep);
  }
  return out;
}

}  // namespace srotlab
