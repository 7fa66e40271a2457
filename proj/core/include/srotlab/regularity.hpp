#pragma once

#include <cstdint>

#include "srotlab/metric.hpp"

namespace srotlab {

/// Sampling region for the pair-space probes: pairs (x, y) jittered around a
/// base pair inside a chart box, filtered to d_min <= d_SR(x,y) <= d_max.
struct PairRegion {
  Vec x_center;
  Vec y_center;
  double box_halfwidth = 0.5;
  double d_min = 0.3;   // diagonal band excluded: d_SR^2 need not be Lipschitz there
  double d_max = 1e30;
};

struct ProbeResult {
  double estimate = 0.0;   // empirical constant (max over samples)
  int samples = 0;         // accepted samples
  int attempts = 0;
  double scale = 0.0;      // perturbation scale (Lipschitz probe)
};

struct SemiconcavityOptions {
  std::vector<double> mu_grid = {0.25, 0.5, 0.75};
  std::uint64_t seed = 1;
  int max_attempts_factor = 50;
  DistanceOptions solver;
};

/// Empirical semiconcavity constant of d_SR^2 on pair space: the max over
/// sampled segments of [mu u(B) + (1-mu) u(A) - u(mu B + (1-mu) A)] /
/// [mu (1-mu) |A-B|^2]. Samples are drawn from a deterministic sequence, so
/// the estimate is exactly non-decreasing in the sample count.
ProbeResult semiconcavity_probe(const FramePtr& frame, const PairRegion& region,
                                int samples,
                                const SemiconcavityOptions& opts = {});

struct LipschitzOptions {
  double scale = 1e-2;  // chart perturbation scale
  std::uint64_t seed = 2;
  DistanceOptions solver;
};

/// Empirical Lipschitz constant of d_SR^2 on pair space over a chart box
/// (diagonal-crossing pairs included): max |u(a) - u(b)| / |a - b| for
/// perturbed pair arguments.
ProbeResult lipschitz_probe(const FramePtr& frame, const Vec& box_low,
                            const Vec& box_high, int samples,
                            const LipschitzOptions& opts = {});

}  // namespace srotlab
