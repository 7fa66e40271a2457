#pragma once

#include <functional>
#include <optional>

#include "srotlab/kantorovich.hpp"

namespace srotlab {

enum class AtomLabel { Moving, Static };

struct MapAtom {
  int index = -1;
  Vec source;
  Vec destination;
  Vec covector;       // minimizing p with exp_source(p) = destination; 0 if static
  Vec dphi_regressed; // filled by attach_regressed_gradients
  AtomLabel label = AtomLabel::Static;
  double pair_distance = 0.0;     // d_SR(x, T(x))
  double support_slackness = 0.0; // phi(a) + phic(b) - C_ab on the matched pair
};

/// Discrete reconstruction of the optimal map: per-source destination,
/// minimizing covector and moving/static label.
struct TransportMapEstimate {
  FramePtr frame;
  std::vector<MapAtom> atoms;
  std::vector<int> excluded_rows;  // sources with several plan destinations
  Vec weights;                     // source weights (excluded rows keep theirs)
};

struct BuildMapOptions {
  double static_tol = 1e-6;    // d(x, T(x)) below this marks the atom static
  double multi_dest_tol = 1e-9;
  double max_excluded_fraction = 0.05;
  DistanceOptions solver;      // used only when covectors are not supplied
};

/// Builds the map estimate from an exact-LP plan. Covectors come from the
/// cost-matrix result when given (they are solver-exact on the support);
/// otherwise each moving pair is re-solved. Rows with several destinations
/// above multi_dest_tol are excluded and reported; more than
/// max_excluded_fraction of them aborts with MultiDestinationRowError.
TransportMapEstimate build_map(const TransportPlan& plan,
                               const DualPotentials& duals,
                               const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu, const FramePtr& frame,
                               const CostMatrixResult* cm,
                               const BuildMapOptions& opts = {});

struct GradientEstimate {
  Vec gradient;
  double fit_residual = 0.0;
};

/// Weighted least-squares affine fit of phi over the k nearest source atoms;
/// returns the fitted gradient per atom. k >= n+1 required; affinely
/// dependent neighborhoods raise DegenerateNeighborhoodError.
std::vector<GradientEstimate> regress_dphi(const Vec& phi, const Mat& sources,
                                           int k);

/// Runs regress_dphi on the map sources and stores the result in each atom's
/// dphi_regressed field.
void attach_regressed_gradients(TransportMapEstimate& map_estimate, const Vec& phi,
                                int k);

struct InterpolationResult {
  std::vector<double> ts;
  std::vector<Mat> clouds;          // per t: one atom per row
  Vec weights;
  std::vector<double> min_spacing;  // per t: min pairwise chart distance
};

/// Displacement interpolation: the time-t point of the stored minimizing
/// extremal per moving atom (the exponential with covector scaled by t),
/// static atoms fixed.
InterpolationResult interpolate(const TransportMapEstimate& map_estimate,
                                const std::vector<double>& t_list,
                                int steps = kDefaultFlowSteps);

struct GeodesicCheckEntry {
  double t;
  double w_left;    // W2(mu, mu_t)
  double w_right;   // W2(mu_t, nu)
  double rel_error; // |w_left - t W2(mu,nu)| / W2(mu,nu)
};

struct GeodesicCheckReport {
  double w_total = 0.0;
  std::vector<GeodesicCheckEntry> entries;
};

/// Re-solves W2(mu, mu_t) and W2(mu_t, nu) with fresh LPs and reports the
/// deviation from the constant-speed law. Sequential by design.
GeodesicCheckReport geodesic_check(const DiscreteMeasure& mu,
                                   const InterpolationResult& interp,
                                   const DiscreteMeasure& nu,
                                   const FramePtr& frame,
                                   const CostMatrixOptions& copts = {});

struct SplitCheckEntry {
  int atom;
  double lhs;       // d^2(x,T_t x)/t + d^2(T_t x, Tx)/(1-t)
  double rhs;       // d^2(x, Tx)
  double rel_error;
};

/// Per-atom geodesic split identity at an interior time t.
std::vector<SplitCheckEntry> interpolation_split_check(
    const TransportMapEstimate& map_estimate, double t,
    const DistanceOptions& opts = {});

struct AbsContinuityReport {
  double t = 0.0;
  double injectivity_margin = 0.0;  // min |T_t a - T_t b| / |a - b|, moving pairs
  double max_cluster_mass = 0.0;    // largest mass within r_cluster of an atom
  double r_cluster = 0.0;
};

AbsContinuityReport abs_continuity_probe(const TransportMapEstimate& map_estimate,
                                         const InterpolationResult& interp,
                                         int t_index, double r_cluster = 1e-3);

/// Regular chart grid on which a measure was sampled; needed by the
/// finite-difference Jacobian residual.
struct GridSpec {
  Vec origin;
  std::vector<int> dims;  // points per axis
  double spacing = 0.0;

  int total() const;
  int flat_index(const std::vector<int>& idx) const;
};

using DensityFn = std::function<double(const Vec&)>;

struct JacobianResidualReport {
  int evaluated = 0;       // interior atoms with full neighbor stencils
  int skipped = 0;
  double median_residual = 0.0;   // |det dT - f/(g o T)|
  double mean_residual = 0.0;
  double max_residual = 0.0;
  double min_abs_det = 0.0;
  bool all_nondegenerate = false; // |det| bounded away from zero everywhere
  int static_atoms = 0;
  double max_static_density_residual = 0.0;  // |f - g| on static atoms
};

/// Central-difference Jacobian of the reconstructed map over the sampling
/// grid, compared with the density ratio. Throws GridTooCoarseError when no
/// interior atom has a full stencil.
JacobianResidualReport jacobian_residual(const TransportMapEstimate& map_estimate,
                                         const GridSpec& grid, const DensityFn& f,
                                         const DensityFn& g,
                                         double det_tol = 1e-6);

}  // namespace srotlab
