#pragma once

#include <cstdint>
#include <vector>

#include "srotlab/metric.hpp"

namespace srotlab {

/// Weighted point cloud representing an empirical probability measure.
struct DiscreteMeasure {
  Mat points;   // size x n, one atom per row
  Vec weights;  // nonnegative, sums to 1

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  /// Throws on negative weights, non-finite atoms, or |sum w - 1| > 1e-12.
  void validate() const;

  static DiscreteMeasure equal_weights(Mat pts);
};

struct PlanEntry {
  int a;
  int b;
  double w;
};

/// Sparse coupling between two measures; row sums match the source weights
/// and column sums the target weights.
struct TransportPlan {
  std::vector<PlanEntry> entries;
  double cost = 0.0;
  int n_source = 0;
  int n_target = 0;

  Vec row_sums() const;
  Vec col_sums() const;
};

/// Kantorovich potentials from the optimal basis, normalized so min phi = 0.
struct DualPotentials {
  Vec phi;   // on source atoms
  Vec phic;  // on target atoms
  double gap = 0.0;  // primal cost - dual value
};

struct CostMatrixOptions {
  DistanceOptions solver = assembly_solver_defaults();
  int threads = 0;
  bool symmetric = false;  // X and Y are the same cloud: mirror the triangle
  int straight_refresh = 32;  // re-seed the straight-branch track every k entries
  int straight_stride = 1;    // run the straight track every k-th entry

  static DistanceOptions assembly_solver_defaults() {
    DistanceOptions d;
    d.shoot_steps = 80;
    d.verify_steps = 240;
    d.max_iters = 30;
    return d;
  }
};

/// Dense matrix of squared sub-Riemannian distances C_ab = d(x_a, y_b)^2
/// together with the minimizing initial covector of each entry. Assembly
/// chains warm starts along rows (two tracks: the continued branch and the
/// straight branch) and falls back to the full multi-start sweep per entry.
/// Throws NoConvergenceError naming the first entry that failed.
struct CostMatrixResult {
  Mat C;
  std::vector<Vec> covectors;      // size ns*nt, index a*nt + b
  std::vector<std::uint8_t> flags; // 1 = converged
  int n_source = 0;
  int n_target = 0;

  const Vec& covector(int a, int b) const {
    return covectors[static_cast<std::size_t>(a) * n_target + b];
  }
};

CostMatrixResult cost_matrix(const FramePtr& frame, const Mat& X, const Mat& Y,
                             const CostMatrixOptions& opts = {});

struct LpResult {
  TransportPlan plan;
  DualPotentials duals;
  int pivots = 0;
};

/// Exact optimum of the discrete Kantorovich problem by a transportation
/// (network) simplex on the dense bipartite graph. Marginals must balance;
/// duals come from the optimal basis.
LpResult solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const Mat& C);

/// c-transform on the discrete support. source_to_target = true maps values
/// phi on X to phi^c(y_b) = min_a { C(a,b) - phi(a) }; false maps values on Y
/// back to X.
Vec c_transform(const Vec& values, const Mat& C, bool source_to_target);

struct SuperdiffReport {
  double max_violation = 0.0;        // max over support of C_ab - phi_a - phic_b
  std::vector<PlanEntry> violating;  // support pairs with violation > tol
};

/// Verifies phi(x_a) + phic(y_b) >= C_ab - tol on every support pair of the
/// plan (equality is complementary slackness of the exact LP).
SuperdiffReport superdifferential_check(const TransportPlan& plan,
                                        const DualPotentials& duals,
                                        const Mat& C, double tol = 1e-9);

/// W_2(mu, nu) = sqrt of the optimal Kantorovich cost.
double wasserstein(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   const Mat& C);

struct SinkhornOptions {
  double epsilon = 1e-3;       // final regularization, relative to max |C|
  int scaling_stages = 8;      // epsilon-scaling ladder
  int max_iters = 2000;        // per stage
  double tol = 1e-10;          // marginal violation target (L1)
};

/// Entropic approximation with epsilon-scaling and rounding to the feasible
/// polytope. Behind a flag for large instances; never used by acceptance
/// checks, which require the exact LP.
LpResult solve_sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const Mat& C, const SinkhornOptions& opts = {});

}  // namespace srotlab
