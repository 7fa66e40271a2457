#include "srotlab/kantorovich.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "srotlab/errors.hpp"
#include "srotlab/parallel.hpp"

namespace srotlab {

void DiscreteMeasure::validate() const {
  if (points.rows() != weights.size()) {
    throw WrongDimensionError("measure: atom/weight count mismatch");
  }
  if (!points.allFinite()) throw NonFiniteError("measure: non-finite atom");
  if ((weights.array() < 0.0).any()) {
    throw ConfigError("measure: negative weight");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw ConfigError("measure: weights must sum to 1 (1e-12)");
  }
}

DiscreteMeasure DiscreteMeasure::equal_weights(Mat pts) {
  DiscreteMeasure m;
  const int k = static_cast<int>(pts.rows());
  m.points = std::move(pts);
  m.weights = Vec::Constant(k, 1.0 / k);
  return m;
}

Vec TransportPlan::row_sums() const {
  Vec r = Vec::Zero(n_source);
  for (const auto& e : entries) r(e.a) += e.w;
  return r;
}

Vec TransportPlan::col_sums() const {
  Vec c = Vec::Zero(n_target);
  for (const auto& e : entries) c(e.b) += e.w;
  return c;
}

// ---------------------------------------------------------------------------
// cost matrix assembly
// ---------------------------------------------------------------------------

CostMatrixResult cost_matrix(const FramePtr& frame, const Mat& X, const Mat& Y,
                             const CostMatrixOptions& opts) {
  const int ns = static_cast<int>(X.rows());
  const int nt = static_cast<int>(Y.rows());
  const int n = frame->ambient_dim();
  if (X.cols() != n || Y.cols() != n) {
    throw WrongDimensionError("cost_matrix: point dimension mismatch");
  }

  CostMatrixResult out;
  out.C.setZero(ns, nt);
  out.covectors.assign(static_cast<std::size_t>(ns) * nt, Vec());
  out.flags.assign(static_cast<std::size_t>(ns) * nt, 0);
  out.n_source = ns;
  out.n_target = nt;

  std::vector<int> failed_row(static_cast<std::size_t>(ns), -1);

  auto process_row = [&](std::int64_t ai) {
    const int a = static_cast<int>(ai);
    const Vec xa = X.row(a);
    Vec track_cont;      // continued branch
    Vec track_straight;  // straight (low-winding) branch
    const int b_begin = opts.symmetric ? a : 0;
    for (int b = b_begin; b < nt; ++b) {
      const Vec yb = Y.row(b);
      const std::size_t idx = static_cast<std::size_t>(a) * nt + b;
      if ((xa - yb).norm() == 0.0) {
        out.C(a, b) = 0.0;
        out.covectors[idx] = Vec::Zero(n);
        out.flags[idx] = 1;
        continue;
      }

      SingleShootResult best;
      auto consider = [&](const SingleShootResult& r) {
        if (!r.converged) return;
        if (!best.converged || r.energy < best.energy) best = r;
      };

      if (track_cont.size() == n) {
        consider(shoot_single(frame, xa, yb, track_cont, opts.solver));
      }
      const bool refresh =
          track_straight.size() != n || (b % std::max(opts.straight_refresh, 1)) == 0;
      const bool straight_due =
          refresh || (b % std::max(opts.straight_stride, 1)) == 0 || !best.converged;
      if (straight_due && !refresh) {
        const SingleShootResult r =
            shoot_single(frame, xa, yb, track_straight, opts.solver);
        consider(r);
        if (r.converged) track_straight = r.p0;
      }
      if (refresh || !best.converged) {
        const SingleShootResult r = shoot_single(
            frame, xa, yb, shooting_initial_guess(frame, xa, yb), opts.solver);
        consider(r);
        if (r.converged) track_straight = r.p0;
      }
      if (!best.converged) {
        // full multi-start sweep for this entry
        DistanceOptions sweep = opts.solver;
        sweep.max_iters = 60;
        const DistanceResult res = distance(frame, xa, yb, sweep);
        if (res.converged && !res.covectors.empty()) {
          best.converged = true;
          best.p0 = res.covectors.front();
          best.energy = res.energy;
          best.endpoint_error = res.endpoint_error;
          best.p_end =
              shoot_endpoint(*frame, xa, best.p0, opts.solver.shoot_steps).p1;
        }
      }
      if (!best.converged) {
        failed_row[static_cast<std::size_t>(a)] = b;
        return;  // abort this row; caller reports the entry
      }
      track_cont = best.p0;
      out.C(a, b) = best.energy;  // energy = 2H = d^2 for minimizing roots
      out.covectors[idx] = best.p0;
      out.flags[idx] = 1;
      if (opts.symmetric && b != a) {
        const std::size_t mirrored = static_cast<std::size_t>(b) * nt + a;
        out.C(b, a) = best.energy;
        out.covectors[mirrored] = -best.p_end;  // time-reversed geodesic
        out.flags[mirrored] = 1;
      }
    }
  };

  parallel_for(ns, process_row, opts.threads);

  for (int a = 0; a < ns; ++a) {
    if (failed_row[static_cast<std::size_t>(a)] >= 0) {
      throw NoConvergenceError("cost_matrix: entry (" + std::to_string(a) + ", " +
                               std::to_string(failed_row[static_cast<std::size_t>(a)]) +
                               ") did not converge");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// transportation simplex
// ---------------------------------------------------------------------------

namespace {

struct BasicArc {
  int a;  // source index
  int b;  // target index
  double flow;
};

class TransportSimplex {
 public:
  TransportSimplex(const Vec& mu, const Vec& nu, const Mat& C)
      : mu_(mu), nu_(nu), C_(C), ns_(static_cast<int>(mu.size())),
        nt_(static_cast<int>(nu.size())), u_(ns_), v_(nt_) {
    enter_eps_ = 1e-11 * (1.0 + C_.cwiseAbs().maxCoeff());
  }

  void solve() {
    northwest_init();
    const std::int64_t total = static_cast<std::int64_t>(ns_) * nt_;
    const std::int64_t block = std::min<std::int64_t>(total, 8192);
    std::int64_t cursor = 0;
    int degenerate_streak = 0;
    bool bland = false;
    // generous cap; hitting it means the pivot rules failed
    const std::int64_t pivot_cap = 1000 + 200 * static_cast<std::int64_t>(ns_ + nt_);

    for (;; ++pivots_) {
      if (pivots_ > pivot_cap) {
        throw NumericalFailureError("transport simplex: pivot cap exceeded");
      }
      compute_duals();
      // price: scan blocks from the rotating cursor
      int enter_a = -1, enter_b = -1;
      double best_rc = -enter_eps_;
      std::int64_t scanned = 0;
      while (scanned < total) {
        const std::int64_t stop = std::min<std::int64_t>(block, total - scanned);
        bool found = false;
        for (std::int64_t k = 0; k < stop; ++k) {
          const std::int64_t f = (cursor + k) % total;
          const int a = static_cast<int>(f / nt_);
          const int b = static_cast<int>(f % nt_);
          const double rc = C_(a, b) - u_(a) - v_(b);
          if (rc < best_rc) {
            best_rc = rc;
            enter_a = a;
            enter_b = b;
            found = true;
            if (bland) break;
          }
        }
        cursor = (cursor + stop) % total;
        scanned += stop;
        if (found) break;
      }
      if (enter_a < 0) break;  // optimal

      const double theta = pivot(enter_a, enter_b);
      if (theta <= 1e-15) {
        if (++degenerate_streak > 500) bland = true;
      } else {
        degenerate_streak = 0;
      }
    }
    compute_duals();
  }

  const std::vector<BasicArc>& basis() const { return basis_; }
  const Vec& duals_u() const { return u_; }
  const Vec& duals_v() const { return v_; }
  int pivots() const { return static_cast<int>(pivots_); }

 private:
  int node_of_source(int a) const { return a; }
  int node_of_target(int b) const { return ns_ + b; }

  void northwest_init() {
    basis_.clear();
    basis_.reserve(static_cast<std::size_t>(ns_ + nt_ - 1));
    Vec r = mu_, c = nu_;
    int a = 0, b = 0;
    for (int step = 0; step < ns_ + nt_ - 1; ++step) {
      const double t = std::min(r(a), c(b));
      basis_.push_back({a, b, t});
      r(a) -= t;
      c(b) -= t;
      if (step == ns_ + nt_ - 2) break;
      if (a < ns_ - 1 && (r(a) <= c(b) || b == nt_ - 1)) {
        ++a;
      } else {
        ++b;
      }
    }
  }

  void rebuild_adjacency() {
    adj_.assign(static_cast<std::size_t>(ns_ + nt_), {});
    for (int e = 0; e < static_cast<int>(basis_.size()); ++e) {
      adj_[static_cast<std::size_t>(node_of_source(basis_[e].a))].push_back(e);
      adj_[static_cast<std::size_t>(node_of_target(basis_[e].b))].push_back(e);
    }
  }

  void compute_duals() {
    rebuild_adjacency();
    u_.setConstant(std::numeric_limits<double>::quiet_NaN());
    v_.setConstant(std::numeric_limits<double>::quiet_NaN());
    u_(0) = 0.0;
    std::queue<int> q;
    q.push(0);
    std::vector<char> seen(static_cast<std::size_t>(ns_ + nt_), 0);
    seen[0] = 1;
    while (!q.empty()) {
      const int node = q.front();
      q.pop();
      for (int e : adj_[static_cast<std::size_t>(node)]) {
        const BasicArc& arc = basis_[static_cast<std::size_t>(e)];
        const int sn = node_of_source(arc.a);
        const int tn = node_of_target(arc.b);
        const int other = (node == sn) ? tn : sn;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        if (node == sn) {
          v_(arc.b) = C_(arc.a, arc.b) - u_(arc.a);
        } else {
          u_(arc.a) = C_(arc.a, arc.b) - v_(arc.b);
        }
        q.push(other);
      }
    }
    if (u_.hasNaN() || v_.hasNaN()) {
      throw NumericalFailureError("transport simplex: basis tree disconnected");
    }
  }

  // Adds arc (ea, eb), finds the unique tree cycle, shifts flow, removes the
  // leaving arc. Returns the shifted amount.
  double pivot(int ea, int eb) {
    // BFS path between the endpoints of the entering arc
    const int start = node_of_source(ea);
    const int goal = node_of_target(eb);
    std::vector<int> via_arc(static_cast<std::size_t>(ns_ + nt_), -1);
    std::vector<int> via_node(static_cast<std::size_t>(ns_ + nt_), -1);
    std::vector<char> seen(static_cast<std::size_t>(ns_ + nt_), 0);
    std::queue<int> q;
    q.push(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!q.empty()) {
      const int node = q.front();
      q.pop();
      if (node == goal) break;
      for (int e : adj_[static_cast<std::size_t>(node)]) {
        const BasicArc& arc = basis_[static_cast<std::size_t>(e)];
        const int sn = node_of_source(arc.a);
        const int tn = node_of_target(arc.b);
        const int other = (node == sn) ? tn : sn;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        via_arc[static_cast<std::size_t>(other)] = e;
        via_node[static_cast<std::size_t>(other)] = node;
        q.push(other);
      }
    }
    if (!seen[static_cast<std::size_t>(goal)]) {
      throw NumericalFailureError("transport simplex: cycle not found");
    }

    // walk back from goal to start; arcs at odd positions from the entering
    // arc lose flow
    std::vector<int> path;  // arc ids, goal-side first
    for (int node = goal; node != start;
         node = via_node[static_cast<std::size_t>(node)]) {
      path.push_back(via_arc[static_cast<std::size_t>(node)]);
    }
    std::reverse(path.begin(), path.end());  // start -> goal order

    double theta = std::numeric_limits<double>::infinity();
    int leave_pos = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {  // minus arcs
      const double f = basis_[static_cast<std::size_t>(path[k])].flow;
      if (f < theta) {
        theta = f;
        leave_pos = static_cast<int>(k);
      }
    }
    if (leave_pos < 0) {
      throw NumericalFailureError("transport simplex: unbounded pivot");
    }

    for (std::size_t k = 0; k < path.size(); ++k) {
      BasicArc& arc = basis_[static_cast<std::size_t>(path[k])];
      arc.flow += (k % 2 == 0) ? -theta : theta;
    }
    const int leave_arc = path[static_cast<std::size_t>(leave_pos)];
    basis_[static_cast<std::size_t>(leave_arc)] = {ea, eb, theta};
    return theta;
  }

  Vec mu_, nu_;
  const Mat& C_;
  int ns_, nt_;
  Vec u_, v_;
  std::vector<BasicArc> basis_;
  std::vector<std::vector<int>> adj_;
  double enter_eps_ = 0.0;
  std::int64_t pivots_ = 0;
};

}  // namespace

LpResult solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const Mat& C) {
  mu.validate();
  nu.validate();
  const int ns = mu.size();
  const int nt = nu.size();
  if (C.rows() != ns || C.cols() != nt) {
    throw WrongDimensionError("solve_kantorovich: cost shape mismatch");
  }
  if (!C.allFinite()) throw NonFiniteError("solve_kantorovich: non-finite cost");
  if (std::abs(mu.weights.sum() - nu.weights.sum()) > 1e-9) {
    // cannot occur for validated probability measures
    throw InfeasibleError("solve_kantorovich: unbalanced marginals");
  }

  TransportSimplex simplex(mu.weights, nu.weights, C);
  simplex.solve();

  LpResult out;
  out.pivots = simplex.pivots();
  out.plan.n_source = ns;
  out.plan.n_target = nt;
  double cost = 0.0;
  for (const auto& arc : simplex.basis()) {
    if (arc.flow > 0.0) {
      out.plan.entries.push_back({arc.a, arc.b, arc.flow});
      cost += arc.flow * C(arc.a, arc.b);
    }
  }
  out.plan.cost = cost;

  // duals normalized so min phi = 0
  Vec phi = simplex.duals_u();
  Vec phic = simplex.duals_v();
  const double shift = phi.minCoeff();
  phi.array() -= shift;
  phic.array() += shift;
  out.duals.phi = std::move(phi);
  out.duals.phic = std::move(phic);
  out.duals.gap =
      cost - (out.duals.phi.dot(mu.weights) + out.duals.phic.dot(nu.weights));
  return out;
}

Vec c_transform(const Vec& values, const Mat& C, bool source_to_target) {
  if (source_to_target) {
    if (values.size() != C.rows()) {
      throw WrongDimensionError("c_transform: value count mismatch");
    }
    Vec out(C.cols());
    for (int b = 0; b < C.cols(); ++b) {
      out(b) = (C.col(b) - values).minCoeff();
    }
    return out;
  }
  if (values.size() != C.cols()) {
    throw WrongDimensionError("c_transform: value count mismatch");
  }
  Vec out(C.rows());
  for (int a = 0; a < C.rows(); ++a) {
    out(a) = (C.row(a).transpose() - values).minCoeff();
  }
  return out;
}

SuperdiffReport superdifferential_check(const TransportPlan& plan,
                                        const DualPotentials& duals,
                                        const Mat& C, double tol) {
  SuperdiffReport rep;
  for (const auto& e : plan.entries) {
    const double violation = C(e.a, e.b) - duals.phi(e.a) - duals.phic(e.b);
    rep.max_violation = std::max(rep.max_violation, violation);
    if (violation > tol) rep.violating.push_back(e);
  }
  return rep;
}

double wasserstein(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   const Mat& C) {
  const LpResult lp = solve_kantorovich(mu, nu, C);
  return std::sqrt(std::max(lp.plan.cost, 0.0));
}

// ---------------------------------------------------------------------------
// entropic mode (flagged; not used by acceptance paths)
// ---------------------------------------------------------------------------

LpResult solve_sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const Mat& C, const SinkhornOptions& opts) {
  mu.validate();
  nu.validate();
  const int ns = mu.size();
  const int nt = nu.size();
  const double c_scale = std::max(C.cwiseAbs().maxCoeff(), 1e-12);

  Vec f = Vec::Zero(ns), g = Vec::Zero(nt);
  const Vec log_mu = mu.weights.array().max(1e-300).log();
  const Vec log_nu = nu.weights.array().max(1e-300).log();

  for (int stage = 0; stage < opts.scaling_stages; ++stage) {
    const double frac = (opts.scaling_stages == 1)
                            ? 1.0
                            : static_cast<double>(stage) / (opts.scaling_stages - 1);
    const double eps = c_scale * std::pow(opts.epsilon, frac) *
                       std::pow(0.25, 1.0 - frac);
    for (int it = 0; it < opts.max_iters; ++it) {
      // f-update: f_a = -eps log sum_b nu_b exp((g_b - C_ab)/eps)
      for (int a = 0; a < ns; ++a) {
        const Vec z = (g - C.row(a).transpose()) / eps + log_nu;
        const double zmax = z.maxCoeff();
        f(a) = -eps * (zmax + std::log((z.array() - zmax).exp().sum()));
      }
      double violation = 0.0;
      for (int b = 0; b < nt; ++b) {
        const Vec z = (f - C.col(b)) / eps + log_mu;
        const double zmax = z.maxCoeff();
        const double g_new = -eps * (zmax + std::log((z.array() - zmax).exp().sum()));
        violation = std::max(violation, std::abs(g_new - g(b)));
        g(b) = g_new;
      }
      if (violation < opts.tol * eps) break;
    }
  }

  // dense entropic plan, then round to the marginal polytope
  const double eps = c_scale * opts.epsilon;
  Mat P(ns, nt);
  for (int a = 0; a < ns; ++a) {
    for (int b = 0; b < nt; ++b) {
      P(a, b) = std::exp((f(a) + g(b) - C(a, b)) / eps) * mu.weights(a) *
                nu.weights(b);
    }
  }
  // scale rows down to mu, then columns down to nu, then fix the residual
  for (int a = 0; a < ns; ++a) {
    const double rs = P.row(a).sum();
    if (rs > mu.weights(a) && rs > 0.0) P.row(a) *= mu.weights(a) / rs;
  }
  for (int b = 0; b < nt; ++b) {
    const double cs = P.col(b).sum();
    if (cs > nu.weights(b) && cs > 0.0) P.col(b) *= nu.weights(b) / cs;
  }
  const Vec r_err = mu.weights - P.rowwise().sum();
  const Vec c_err = nu.weights - P.colwise().sum().transpose();
  const double r_tot = r_err.sum();
  if (r_tot > 1e-300) P += (r_err / r_tot) * c_err.transpose();

  LpResult out;
  out.plan.n_source = ns;
  out.plan.n_target = nt;
  double cost = 0.0;
  for (int a = 0; a < ns; ++a) {
    for (int b = 0; b < nt; ++b) {
      if (P(a, b) > 1e-15) {
        out.plan.entries.push_back({a, b, P(a, b)});
        cost += P(a, b) * C(a, b);
      }
    }
  }
  out.plan.cost = cost;
  Vec phi = f;
  Vec phic = g;
  const double shift = phi.minCoeff();
  phi.array() -= shift;
  phic.array() += shift;
  out.duals.phi = std::move(phi);
  out.duals.phic = std::move(phic);
  out.duals.gap = cost - (out.duals.phi.dot(mu.weights) +
                          out.duals.phic.dot(nu.weights));
  out.pivots = 0;
  return out;
}

}  // namespace srotlab
