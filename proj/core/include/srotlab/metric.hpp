#pragma once

#include <optional>
#include <vector>

#include "srotlab/geodesics.hpp"

namespace srotlab {

enum class DistanceMethod { Shooting, Direct, Hybrid };

struct DistanceOptions {
  // integration
  int shoot_steps = 200;   // resolution inside Gauss-Newton iterations
  int verify_steps = 1000; // resolution of the final endpoint check

  // Gauss-Newton / Levenberg
  double endpoint_tol = 1e-8;
  int max_iters = 100;

  // multi-start covector sweep: sign-lattice directions in (R^n)* (26 when
  // n = 3), each scaled by radial_scales * max(|y - x|, radius_floor)
  std::vector<double> radial_scales = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  double radius_floor = 1.0;

  // deduplication of converged covectors on midpoint states
  double sep_tol = 1e-3;
  // energy window (relative) within which converged roots count as minimizers
  double multiplicity_rel_tol = 1e-4;

  // When true, the full covector sweep is skipped as soon as a cheap start
  // (warm covector or linearized guess) converges. Fast for generic pairs;
  // multiplicity detection needs the full sweep, so probes must keep this
  // off.
  bool lazy_sweep = false;

  bool allow_direct_fallback = true;

  // direct fallback over piecewise-constant controls
  int direct_segments = 20;
  int direct_steps_per_segment = 10;
  double rho_start = 1e2;
  double rho_end = 1e6;
  int direct_max_iters = 250;
};

struct DistanceResult {
  double value = 0.0;                // d_SR estimate, >= 0
  std::vector<Vec> covectors;        // deduplicated minimizing p0, best first
  DistanceMethod method = DistanceMethod::Shooting;
  double endpoint_error = 0.0;       // |exp_x(p_best) - y| at verify_steps
  int multiplicity = 0;              // distinct minimizing geodesics found
  bool converged = false;            // endpoint_error <= endpoint_tol
  double energy = 0.0;               // 2H(x, p_best) (or control energy, direct)
  int gn_starts = 0;                 // shooting starts attempted
};

/// d_SR(x, y) by multi-start covector shooting with a direct-control
/// fallback. Never throws on failure to converge: the result carries the
/// best candidate with converged = false.
DistanceResult distance(const FramePtr& frame, const Vec& x, const Vec& y,
                        const DistanceOptions& opts = {});

/// Same as distance() but tries `warm_starts` covectors (plus a linearized
/// initial guess) before the full sweep. Used for cost-matrix rows where the
/// neighboring entry's covector is an excellent initial guess.
DistanceResult distance_warm(const FramePtr& frame, const Vec& x, const Vec& y,
                             const std::vector<Vec>& warm_starts,
                             const DistanceOptions& opts = {});

/// Outcome of a single Gauss-Newton run from one initial covector; the
/// building block cost-matrix assembly chains along rows.
struct SingleShootResult {
  bool converged = false;
  Vec p0;                 // refined initial covector
  Vec p_end;              // covector at t = 1 (time-reversal gives y -> x)
  double energy = 0.0;    // 2H(x, p0)
  double endpoint_error = 0.0;
};

SingleShootResult shoot_single(const FramePtr& frame, const Vec& x, const Vec& y,
                               const Vec& p_init, const DistanceOptions& opts);

/// Minimum-norm covector matching the linearized endpoint map; the standard
/// cheap initial guess for near-horizontal displacements.
Vec shooting_initial_guess(const FramePtr& frame, const Vec& x, const Vec& y);

struct MultiGeodesicReport {
  double value = 0.0;
  int multiplicity = 0;
  std::vector<Vec> covectors;   // representatives of each minimizing cluster
  std::vector<Vec> midpoints;   // their midpoint states
  bool converged = false;
};

/// Clusters converged minimizing covectors by midpoint separation;
/// multiplicity >= 2 marks (x, y) as a cut-locus-proxy pair.
MultiGeodesicReport multi_geodesic_probe(const FramePtr& frame, const Vec& x,
                                         const Vec& y,
                                         const DistanceOptions& opts = {});

/// H(y, grad f(y)) - 1/2 where grad f is the central-difference gradient of
/// z -> d_SR(x, z) with step h. Throws CutLocusError when y == x or the
/// probe reports multiple minimizers at y.
double eikonal_residual(const FramePtr& frame, const Vec& x, const Vec& y,
                        double h, const DistanceOptions& opts = {});

}  // namespace srotlab
