#include "srotlab/displacement.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "srotlab/errors.hpp"

namespace srotlab {

TransportMapEstimate build_map(const TransportPlan& plan,
                               const DualPotentials& duals,
                               const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu, const FramePtr& frame,
                               const CostMatrixResult* cm,
                               const BuildMapOptions& opts) {
  const int ns = mu.size();
  const int n = frame->ambient_dim();

  // group plan entries by source row
  std::vector<std::vector<const PlanEntry*>> rows(static_cast<std::size_t>(ns));
  for (const auto& e : plan.entries) {
    rows[static_cast<std::size_t>(e.a)].push_back(&e);
  }

  TransportMapEstimate out;
  out.frame = frame;
  out.weights = mu.weights;
  out.atoms.reserve(static_cast<std::size_t>(ns));

  for (int a = 0; a < ns; ++a) {
    const auto& row = rows[static_cast<std::size_t>(a)];
    if (row.empty()) {
      if (mu.weights(a) > 0.0) {
        throw NumericalFailureError("build_map: positive-mass source without plan row");
      }
      continue;
    }
    // dominant destination; any secondary mass above tolerance excludes the row
    const PlanEntry* main = row.front();
    double secondary = 0.0;
    for (const PlanEntry* e : row) {
      if (e->w > main->w) main = e;
    }
    for (const PlanEntry* e : row) {
      if (e != main) secondary += e->w;
    }
    if (secondary > opts.multi_dest_tol) {
      out.excluded_rows.push_back(a);
      continue;
    }

    MapAtom atom;
    atom.index = a;
    atom.source = mu.points.row(a);
    atom.destination = nu.points.row(main->b);
    const double d2 = (cm != nullptr) ? cm->C(a, main->b)
                                      : distance(frame, atom.source,
                                                 atom.destination, opts.solver)
                                            .energy;
    atom.pair_distance = std::sqrt(std::max(d2, 0.0));
    atom.support_slackness = duals.phi(a) + duals.phic(main->b) - d2;

    if (atom.pair_distance <= opts.static_tol) {
      atom.label = AtomLabel::Static;
      atom.covector = Vec::Zero(n);
    } else {
      atom.label = AtomLabel::Moving;
      if (cm != nullptr && cm->covector(a, main->b).size() == n) {
        atom.covector = cm->covector(a, main->b);
      } else {
        const DistanceResult res =
            distance(frame, atom.source, atom.destination, opts.solver);
        if (!res.converged || res.covectors.empty()) {
          throw NoConvergenceError("build_map: no covector for moving pair");
        }
        atom.covector = res.covectors.front();
      }
    }
    out.atoms.push_back(std::move(atom));
  }

  const double excluded_fraction =
      static_cast<double>(out.excluded_rows.size()) / std::max(ns, 1);
  if (excluded_fraction > opts.max_excluded_fraction) {
    throw MultiDestinationRowError(
        "build_map: " + std::to_string(out.excluded_rows.size()) +
        " multi-destination rows exceed the excluded-row budget");
  }
  return out;
}

std::vector<GradientEstimate> regress_dphi(const Vec& phi, const Mat& sources,
                                           int k) {
  const int ns = static_cast<int>(sources.rows());
  const int n = static_cast<int>(sources.cols());
  if (phi.size() != ns) {
    throw WrongDimensionError("regress_dphi: phi/source count mismatch");
  }
  if (k < n + 1) {
    throw DegenerateNeighborhoodError("regress_dphi: k >= n+1 required");
  }
  if (k > ns) {
    throw DegenerateNeighborhoodError("regress_dphi: k exceeds atom count");
  }

  std::vector<GradientEstimate> out(static_cast<std::size_t>(ns));
  std::vector<int> order(static_cast<std::size_t>(ns));
  for (int a = 0; a < ns; ++a) {
    const Vec xa = sources.row(a);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int i, int j) {
                        return (sources.row(i) - xa.transpose()).squaredNorm() <
                               (sources.row(j) - xa.transpose()).squaredNorm();
                      });
    const double r_k =
        (sources.row(order[static_cast<std::size_t>(k - 1)]) - xa.transpose())
            .norm();
    const double bw = std::max(r_k, 1e-12);

    // weighted affine fit phi(z) ~ c + g.(z - xa)
    Mat A(k, n + 1);
    Vec b(k), w(k);
    for (int j = 0; j < k; ++j) {
      const int idx = order[static_cast<std::size_t>(j)];
      const Vec z = sources.row(idx);
      const double dist = (z - xa).norm();
      const double weight = std::exp(-0.5 * (dist / bw) * (dist / bw));
      A(j, 0) = weight;
      A.row(j).tail(n) = weight * (z - xa).transpose();
      b(j) = weight * phi(idx);
      w(j) = weight;
    }
    const Eigen::ColPivHouseholderQR<Mat> qr(A);
    if (qr.rank() < n + 1) {
      throw DegenerateNeighborhoodError(
          "regress_dphi: affinely dependent neighborhood at atom " +
          std::to_string(a));
    }
    const Vec coef = qr.solve(b);
    out[static_cast<std::size_t>(a)].gradient = coef.tail(n);
    out[static_cast<std::size_t>(a)].fit_residual = (A * coef - b).norm();
  }
  return out;
}

void attach_regressed_gradients(TransportMapEstimate& map_estimate, const Vec& phi,
                                int k) {
  const int na = static_cast<int>(map_estimate.atoms.size());
  Mat sources(na, map_estimate.frame->ambient_dim());
  Vec phi_local(na);
  for (int i = 0; i < na; ++i) {
    sources.row(i) = map_estimate.atoms[static_cast<std::size_t>(i)].source;
    phi_local(i) = phi(map_estimate.atoms[static_cast<std::size_t>(i)].index);
  }
  const auto grads = regress_dphi(phi_local, sources, k);
  for (int i = 0; i < na; ++i) {
    map_estimate.atoms[static_cast<std::size_t>(i)].dphi_regressed =
        grads[static_cast<std::size_t>(i)].gradient;
  }
}

InterpolationResult interpolate(const TransportMapEstimate& map_estimate,
                                const std::vector<double>& t_list, int steps) {
  const int na = static_cast<int>(map_estimate.atoms.size());
  const int n = map_estimate.frame->ambient_dim();

  InterpolationResult out;
  out.ts = t_list;
  out.weights.resize(na);
  for (int i = 0; i < na; ++i) {
    out.weights(i) = map_estimate.weights(
        map_estimate.atoms[static_cast<std::size_t>(i)].index);
  }

  for (double t : t_list) {
    if (t < 0.0 || t > 1.0) {
      throw ConfigError("interpolate: t values must lie in [0,1]");
    }
    Mat cloud(na, n);
    for (int i = 0; i < na; ++i) {
      const MapAtom& atom = map_estimate.atoms[static_cast<std::size_t>(i)];
      if (atom.label == AtomLabel::Static || t == 0.0) {
        cloud.row(i) = atom.source;
      } else {
        // time-t point of the minimizing extremal = exponential of the
        // t-scaled covector
        cloud.row(i) =
            exp_map(map_estimate.frame, atom.source, (t * atom.covector).eval(),
                    steps);
      }
    }
    double min_sp = std::numeric_limits<double>::infinity();
    for (int i = 0; i < na; ++i) {
      for (int j = i + 1; j < na; ++j) {
        min_sp = std::min(min_sp, (cloud.row(i) - cloud.row(j)).norm());
      }
    }
    out.min_spacing.push_back(na > 1 ? min_sp : 0.0);
    out.clouds.push_back(std::move(cloud));
  }
  return out;
}

GeodesicCheckReport geodesic_check(const DiscreteMeasure& mu,
                                   const InterpolationResult& interp,
                                   const DiscreteMeasure& nu,
                                   const FramePtr& frame,
                                   const CostMatrixOptions& copts) {
  GeodesicCheckReport rep;
  const CostMatrixResult base = cost_matrix(frame, mu.points, nu.points, copts);
  rep.w_total = wasserstein(mu, nu, base.C);

  for (std::size_t k = 0; k < interp.ts.size(); ++k) {
    DiscreteMeasure mid;
    mid.points = interp.clouds[k];
    mid.weights = interp.weights;
    const CostMatrixResult left = cost_matrix(frame, mu.points, mid.points, copts);
    const CostMatrixResult right = cost_matrix(frame, mid.points, nu.points, copts);
    GeodesicCheckEntry entry;
    entry.t = interp.ts[k];
    entry.w_left = wasserstein(mu, mid, left.C);
    entry.w_right = wasserstein(mid, nu, right.C);
    entry.rel_error = std::abs(entry.w_left - entry.t * rep.w_total) /
                      std::max(rep.w_total, 1e-15);
    rep.entries.push_back(entry);
  }
  return rep;
}

std::vector<SplitCheckEntry> interpolation_split_check(
    const TransportMapEstimate& map_estimate, double t,
    const DistanceOptions& opts) {
  if (t <= 0.0 || t >= 1.0) {
    throw ConfigError("interpolation_split_check: t in (0,1) required");
  }
  std::vector<SplitCheckEntry> out;
  const FramePtr& frame = map_estimate.frame;
  for (const MapAtom& atom : map_estimate.atoms) {
    if (atom.label == AtomLabel::Static) continue;
    const Vec mid = exp_map(frame, atom.source, (t * atom.covector).eval());
    const DistanceResult d_left =
        distance_warm(frame, atom.source, mid, {(t * atom.covector).eval()}, opts);
    // covector along the original extremal at time t is p1 of the t-scaled
    // flow divided by t; the remaining leg over unit time starts at (1-t) p(t)
    const Vec p_mid =
        shoot_endpoint(*frame, atom.source, (t * atom.covector).eval(),
                       opts.verify_steps)
            .p1 /
        t;
    const DistanceResult d_right = distance_warm(
        frame, mid, atom.destination, {((1.0 - t) * p_mid).eval()}, opts);
    if (!d_left.converged || !d_right.converged) {
      throw NoConvergenceError("interpolation_split_check: leg distance failed");
    }
    SplitCheckEntry e;
    e.atom = atom.index;
    e.lhs = d_left.value * d_left.value / t +
            d_right.value * d_right.value / (1.0 - t);
    e.rhs = atom.pair_distance * atom.pair_distance;
    e.rel_error = std::abs(e.lhs - e.rhs) / std::max(e.rhs, 1e-15);
    out.push_back(e);
  }
  return out;
}

AbsContinuityReport abs_continuity_probe(const TransportMapEstimate& map_estimate,
                                         const InterpolationResult& interp,
                                         int t_index, double r_cluster) {
  const double t = interp.ts.at(static_cast<std::size_t>(t_index));
  if (t <= 0.0 || t >= 1.0) {
    throw ConfigError("abs_continuity_probe: interior t required");
  }
  const Mat& cloud = interp.clouds.at(static_cast<std::size_t>(t_index));
  const int na = static_cast<int>(cloud.rows());

  AbsContinuityReport rep;
  rep.t = t;
  rep.r_cluster = r_cluster;
  rep.injectivity_margin = std::numeric_limits<double>::infinity();

  bool any_pair = false;
  for (int i = 0; i < na; ++i) {
    const MapAtom& ai = map_estimate.atoms[static_cast<std::size_t>(i)];
    double mass = 0.0;
    for (int j = 0; j < na; ++j) {
      if ((cloud.row(i) - cloud.row(j)).norm() <= r_cluster) {
        mass += interp.weights(j);
      }
    }
    rep.max_cluster_mass = std::max(rep.max_cluster_mass, mass);
    for (int j = i + 1; j < na; ++j) {
      const MapAtom& aj = map_estimate.atoms[static_cast<std::size_t>(j)];
      if (ai.label != AtomLabel::Moving || aj.label != AtomLabel::Moving) {
        continue;
      }
      const double denom = (ai.source - aj.source).norm();
      if (denom <= 0.0) continue;
      any_pair = true;
      rep.injectivity_margin = std::min(
          rep.injectivity_margin, (cloud.row(i) - cloud.row(j)).norm() / denom);
    }
  }
  if (!any_pair) {
    // identity transport: ratio is exactly 1 for every pair
    rep.injectivity_margin = 1.0;
  }
  return rep;
}

int GridSpec::total() const {
  int t = 1;
  for (int d : dims) t *= d;
  return t;
}

int GridSpec::flat_index(const std::vector<int>& idx) const {
  int f = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    f = f * dims[k] + idx[k];
  }
  return f;
}

JacobianResidualReport jacobian_residual(const TransportMapEstimate& map_estimate,
                                         const GridSpec& grid, const DensityFn& f,
                                         const DensityFn& g, double det_tol) {
  const int n = static_cast<int>(grid.dims.size());
  if (map_estimate.frame->ambient_dim() != n) {
    throw WrongDimensionError("jacobian_residual: grid/frame dimension mismatch");
  }
  const double h = grid.spacing;
  if (h <= 0.0) throw GridTooCoarseError("jacobian_residual: nonpositive spacing");

  // destination lookup by grid flat index; excluded rows leave gaps
  const int total = grid.total();
  std::vector<const MapAtom*> by_index(static_cast<std::size_t>(total), nullptr);
  for (const MapAtom& atom : map_estimate.atoms) {
    if (atom.index >= 0 && atom.index < total) {
      by_index[static_cast<std::size_t>(atom.index)] = &atom;
    }
  }

  JacobianResidualReport rep;
  rep.min_abs_det = std::numeric_limits<double>::infinity();
  std::vector<double> residuals;

  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  Mat dT(n, n);
  for (int flat = 0; flat < total; ++flat) {
    // decode multi-index
    int rem = flat;
    for (int k = n - 1; k >= 0; --k) {
      idx[static_cast<std::size_t>(k)] = rem % grid.dims[static_cast<std::size_t>(k)];
      rem /= grid.dims[static_cast<std::size_t>(k)];
    }
    const MapAtom* atom = by_index[static_cast<std::size_t>(flat)];
    if (atom == nullptr) continue;

    if (atom->label == AtomLabel::Static) {
      ++rep.static_atoms;
      rep.max_static_density_residual =
          std::max(rep.max_static_density_residual,
                   std::abs(f(atom->source) - g(atom->source)));
    }

    bool interior = true;
    for (int k = 0; k < n && interior; ++k) {
      interior = idx[static_cast<std::size_t>(k)] > 0 &&
                 idx[static_cast<std::size_t>(k)] + 1 <
                     grid.dims[static_cast<std::size_t>(k)];
    }
    if (!interior) {
      ++rep.skipped;
      continue;
    }

    bool full_stencil = true;
    for (int k = 0; k < n && full_stencil; ++k) {
      auto shifted = idx;
      shifted[static_cast<std::size_t>(k)] += 1;
      const MapAtom* plus = by_index[static_cast<std::size_t>(grid.flat_index(shifted))];
      shifted[static_cast<std::size_t>(k)] -= 2;
      const MapAtom* minus = by_index[static_cast<std::size_t>(grid.flat_index(shifted))];
      if (plus == nullptr || minus == nullptr) {
        full_stencil = false;
        break;
      }
      dT.col(k) = (plus->destination - minus->destination) / (2.0 * h);
    }
    if (!full_stencil) {
      ++rep.skipped;
      continue;
    }

    const double det = dT.determinant();
    const double gT = g(atom->destination);
    if (gT <= 0.0) {
      throw NumericalFailureError("jacobian_residual: target density vanishes at T(x)");
    }
    const double residual = std::abs(det - f(atom->source) / gT);
    residuals.push_back(residual);
    rep.min_abs_det = std::min(rep.min_abs_det, std::abs(det));
    rep.max_residual = std::max(rep.max_residual, residual);
    rep.mean_residual += residual;
    ++rep.evaluated;
  }

  if (rep.evaluated == 0) {
    throw GridTooCoarseError("jacobian_residual: no interior atom has a full stencil");
  }
  rep.mean_residual /= rep.evaluated;
  std::nth_element(residuals.begin(), residuals.begin() + residuals.size() / 2,
                   residuals.end());
  rep.median_residual = residuals[residuals.size() / 2];
  rep.all_nondegenerate = rep.min_abs_det > det_tol;
  return rep;
}

}  // namespace srotlab
