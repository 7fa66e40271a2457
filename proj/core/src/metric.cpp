#include "srotlab/metric.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <deque>

#include "srotlab/errors.hpp"

namespace srotlab {

namespace {

struct Candidate {
  Vec p;
  double energy;          // 2H(x, p)
  double endpoint_error;  // at shoot_steps
  Vec midpoint;
};

struct GaussNewtonOutcome {
  bool converged = false;
  Candidate cand;
};

// Levenberg-damped Gauss-Newton on p -> exp_x(p) - y. The endpoint Jacobian
// comes from the variational equation (one augmented integration per
// iterate).
GaussNewtonOutcome gauss_newton(const ControlFrame& frame, const Vec& x,
                                const Vec& y, Vec p,
                                const DistanceOptions& opts,
                                Vec* p_end = nullptr) {
  GaussNewtonOutcome out;

  ShootState st;
  try {
    st = shoot_endpoint(frame, x, p, opts.shoot_steps);
  } catch (const NonFiniteError&) {
    return out;
  }
  Vec r = st.x1 - y;
  double err = r.norm();
  double lambda = 1e-3;

  for (int iter = 0; iter < opts.max_iters && err > opts.endpoint_tol; ++iter) {
    const Mat JtJ = st.sens.transpose() * st.sens;
    const Vec Jtr = st.sens.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Mat A = JtJ;
      A.diagonal().array() += lambda * (1.0 + JtJ.diagonal().maxCoeff());
      const Vec dp = A.ldlt().solve(-Jtr);
      if (!dp.allFinite()) break;
      const Vec p_try = p + dp;
      ShootState st_try;
      try {
        st_try = shoot_endpoint(frame, x, p_try, opts.shoot_steps);
      } catch (const NonFiniteError&) {
        lambda *= 10.0;
        continue;
      }
      const Vec r_try = st_try.x1 - y;
      const double err_try = r_try.norm();
      if (err_try < err) {
        p = p_try;
        st = std::move(st_try);
        r = r_try;
        err = err_try;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }

  out.cand.p = p;
  out.cand.energy = 2.0 * hamiltonian(frame, x, p);
  out.cand.endpoint_error = err;
  out.cand.midpoint = st.midpoint;
  out.converged = err <= opts.endpoint_tol;
  if (p_end != nullptr) *p_end = st.p1;
  return out;
}

// Sign-lattice directions {-1,0,1}^n \ {0}, normalized.
std::vector<Vec> lattice_directions(int n) {
  std::vector<Vec> dirs;
  const int total = static_cast<int>(std::pow(3.0, n));
  for (int code = 0; code < total; ++code) {
    Vec d(n);
    int c = code;
    for (int k = 0; k < n; ++k) {
      d(k) = static_cast<double>(c % 3 - 1);
      c /= 3;
    }
    if (d.norm() == 0.0) continue;
    dirs.push_back(d / d.norm());
  }
  return dirs;
}

// Minimum-norm covector whose linearized endpoint x + (sum f_i f_i^T) p
// matches y; good first guess for near-horizontal displacements.
Vec linearized_guess(const ControlFrame& frame, const Vec& x, const Vec& y) {
  Mat F(frame.ambient_dim(), frame.rank());
  frame.fields(x, F);
  const Mat G = F * F.transpose();
  return G.completeOrthogonalDecomposition().solve(y - x);
}

void insert_candidate(std::vector<Candidate>& cands, Candidate c, double sep_tol) {
  for (auto& existing : cands) {
    if ((existing.midpoint - c.midpoint).norm() <= sep_tol) {
      if (c.energy < existing.energy) existing = std::move(c);
      return;
    }
  }
  cands.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Direct fallback: energy minimization over piecewise-constant controls with
// a quadratic endpoint penalty and rho-continuation. Gradients come from the
// adjoint system of the control ODE; the inner solver is L-BFGS with
// backtracking.
// ---------------------------------------------------------------------------

// Forward RK4 under piecewise-constant controls; records all sub-step states.
Vec direct_forward(const ControlFrame& frame, const Vec& x0, const Mat& U,
                   int steps_per_segment, Mat& traj) {
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  const int segments = static_cast<int>(U.rows());
  const int total = segments * steps_per_segment;
  const double h = 1.0 / total;
  traj.resize(total + 1, n);
  Vec x = x0;
  traj.row(0) = x;
  Mat F(n, m);
  Vec k1(n), k2(n), k3(n), k4(n), xt(n);
  auto rhs = [&](const Vec& xv, const Vec& u, Vec& dx) {
    frame.fields(xv, F);
    dx.noalias() = F * u;
  };
  for (int s = 0; s < total; ++s) {
    const Vec u = U.row(s / steps_per_segment);
    rhs(x, u, k1);
    xt = x + 0.5 * h * k1;
    rhs(xt, u, k2);
    xt = x + 0.5 * h * k2;
    rhs(xt, u, k3);
    xt = x + h * k3;
    rhs(xt, u, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    traj.row(s + 1) = x;
  }
  return x;
}

// Objective sum_k |u_k|^2 dt + rho |x(1) - y|^2 and its gradient via the
// backward adjoint lam' = -A_u(t)^T lam, lam(1) = 2 rho (x(1) - y),
// dJ/du_i on segment = int (2 u_i + lam . f_i(x)) dt.
double direct_objective(const ControlFrame& frame, const Vec& x0, const Vec& y,
                        const Mat& U, int steps_per_segment, double rho,
                        Mat* grad) {
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  const int segments = static_cast<int>(U.rows());
  const int total = segments * steps_per_segment;
  const double h = 1.0 / total;

  Mat traj;
  const Vec x1 = direct_forward(frame, x0, U, steps_per_segment, traj);
  const Vec r = x1 - y;
  double obj = rho * r.squaredNorm();
  for (int s = 0; s < segments; ++s) {
    obj += U.row(s).squaredNorm() * (1.0 / segments);
  }
  if (grad == nullptr) return obj;

  grad->setZero(segments, m);
  // backward sweep (trapezoid in time, midpoint linearization per step)
  Vec lam = 2.0 * rho * r;
  Mat F(n, m);
  std::vector<Mat> J;
  for (int s = total - 1; s >= 0; --s) {
    const int seg = s / steps_per_segment;
    const Vec u = U.row(seg);
    const Vec xmid = 0.5 * (traj.row(s) + traj.row(s + 1));
    frame.fields(xmid, F);
    frame.jacobians(xmid, J);
    // integrand of the control gradient at the midpoint
    grad->row(seg) += h * (2.0 * u + F.transpose() * lam).transpose();
    // adjoint step: lam(s) = lam(s+1) + h A^T lam  (A = sum u_i J_i)
    Vec acc = Vec::Zero(n);
    for (int i = 0; i < m; ++i) {
      acc.noalias() += u(i) * (J[static_cast<std::size_t>(i)].transpose() * lam);
    }
    lam += h * acc;
  }
  return obj;
}

struct DirectOutcome {
  bool usable = false;
  double energy = 0.0;
  double endpoint_error = 0.0;
  Mat controls;
};

DirectOutcome direct_fallback(const ControlFrame& frame, const Vec& x,
                              const Vec& y, const DistanceOptions& opts) {
  const int m = frame.rank();
  const int K = opts.direct_segments;
  Mat U = Mat::Zero(K, m);
  // warm start: constant control aiming along the linearized direction
  const Vec p_lin = linearized_guess(frame, x, y);
  Mat F(frame.ambient_dim(), m);
  frame.fields(x, F);
  U.rowwise() = (F.transpose() * p_lin).transpose();

  const int n_rho = 5;
  DirectOutcome out;
  for (int stage = 0; stage < n_rho; ++stage) {
    const double rho = opts.rho_start *
                       std::pow(opts.rho_end / opts.rho_start,
                                static_cast<double>(stage) / (n_rho - 1));
    // L-BFGS with memory 8
    const int dim = K * m;
    std::deque<Vec> s_hist, y_hist;
    Mat grad(K, m), grad_new(K, m);
    double f = direct_objective(frame, x, y, U, opts.direct_steps_per_segment,
                                rho, &grad);
    for (int iter = 0; iter < opts.direct_max_iters; ++iter) {
      Eigen::Map<const Vec> g(grad.data(), dim);
      if (g.norm() < 1e-10) break;
      // two-loop recursion
      Vec q = g;
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        const double rho_i = 1.0 / y_hist[i].dot(s_hist[i]);
        alpha[i] = rho_i * s_hist[i].dot(q);
        q -= alpha[i] * y_hist[i];
      }
      if (!s_hist.empty()) {
        const double gamma = s_hist.back().dot(y_hist.back()) /
                             y_hist.back().squaredNorm();
        q *= gamma;
      }
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double rho_i = 1.0 / y_hist[i].dot(s_hist[i]);
        const double beta = rho_i * y_hist[i].dot(q);
        q += (alpha[i] - beta) * s_hist[i];
      }
      Vec d = -q;
      if (d.dot(g) > 0) d = -g;  // safeguard

      double step = 1.0;
      Mat U_new = U;
      double f_new = f;
      bool ok = false;
      for (int ls = 0; ls < 30; ++ls) {
        Eigen::Map<Vec>(U_new.data(), dim) =
            Eigen::Map<const Vec>(U.data(), dim) + step * d;
        f_new = direct_objective(frame, x, y, U_new,
                                 opts.direct_steps_per_segment, rho, nullptr);
        if (f_new < f - 1e-4 * step * g.dot(-d) || f_new < f) {
          ok = true;
          break;
        }
        step *= 0.5;
      }
      if (!ok) break;
      direct_objective(frame, x, y, U_new, opts.direct_steps_per_segment, rho,
                       &grad_new);
      Vec s_vec = Eigen::Map<const Vec>(U_new.data(), dim) -
                  Eigen::Map<const Vec>(U.data(), dim);
      Vec y_vec = Eigen::Map<const Vec>(grad_new.data(), dim) -
                  Eigen::Map<const Vec>(grad.data(), dim);
      if (s_vec.dot(y_vec) > 1e-14) {
        s_hist.push_back(std::move(s_vec));
        y_hist.push_back(std::move(y_vec));
        if (s_hist.size() > 8) {
          s_hist.pop_front();
          y_hist.pop_front();
        }
      }
      U = std::move(U_new);
      grad = grad_new;
      if (std::abs(f - f_new) < 1e-14 * (1.0 + std::abs(f))) {
        f = f_new;
        break;
      }
      f = f_new;
    }
  }

  Mat traj;
  const Vec x1 = direct_forward(frame, x, U, opts.direct_steps_per_segment, traj);
  out.endpoint_error = (x1 - y).norm();
  double energy = 0.0;
  for (int s = 0; s < K; ++s) energy += U.row(s).squaredNorm() / K;
  out.energy = energy;
  out.controls = std::move(U);
  out.usable = out.endpoint_error < 1e-2;
  return out;
}

DistanceResult run_distance(const FramePtr& frame, const Vec& x, const Vec& y,
                            const std::vector<Vec>& warm_starts,
                            bool warm_only_if_converged,
                            const DistanceOptions& opts) {
  const int n = frame->ambient_dim();
  if (x.size() != n || y.size() != n) {
    throw WrongDimensionError("distance: point dimension mismatch");
  }
  require_finite(x, "x");
  require_finite(y, "y");

  DistanceResult res;

  // The diagonal is excluded from every regularity statement; short-circuit.
  if ((x - y).norm() == 0.0) {
    res.value = 0.0;
    res.covectors = {Vec::Zero(n)};
    res.method = DistanceMethod::Shooting;
    res.endpoint_error = 0.0;
    res.multiplicity = 1;
    res.converged = true;
    res.energy = 0.0;
    return res;
  }

  std::vector<Candidate> converged;
  std::vector<Candidate> failed;

  auto try_start = [&](const Vec& p0) {
    ++res.gn_starts;
    GaussNewtonOutcome gn = gauss_newton(*frame, x, y, p0, opts);
    if (gn.cand.p.size() == 0) return false;
    if (gn.converged) {
      insert_candidate(converged, std::move(gn.cand), opts.sep_tol);
      return true;
    }
    failed.push_back(std::move(gn.cand));
    return false;
  };

  // cheap initializations: caller-provided warm covectors, then the
  // linearized minimum-norm guess
  const bool lazy = warm_only_if_converged || opts.lazy_sweep;
  bool warm_hit = false;
  for (const Vec& w : warm_starts) {
    if (w.size() == n && w.allFinite()) warm_hit |= try_start(w);
  }
  if (!(warm_hit && lazy)) {
    warm_hit |= try_start(linearized_guess(*frame, x, y));
  }

  // full sweep unless a cheap start already converged and the caller asked
  // for the abbreviated path
  if (!(warm_hit && lazy)) {
    const double r_base = std::max((y - x).norm(), opts.radius_floor);
    const auto dirs = lattice_directions(n);
    for (double scale : opts.radial_scales) {
      for (const auto& d : dirs) {
        try_start(scale * r_base * d);
      }
    }
  }

  if (!converged.empty()) {
    std::sort(converged.begin(), converged.end(),
              [](const Candidate& a, const Candidate& b) {
                return a.energy < b.energy;
              });
    // polish the best root at the verification resolution so the reported
    // endpoint error is honest at verify_steps
    if (opts.verify_steps != opts.shoot_steps) {
      DistanceOptions fine = opts;
      fine.shoot_steps = opts.verify_steps;
      fine.max_iters = 10;
      GaussNewtonOutcome polished =
          gauss_newton(*frame, x, y, converged.front().p, fine);
      if (polished.cand.endpoint_error <= converged.front().endpoint_error ||
          polished.converged) {
        converged.front().p = polished.cand.p;
        converged.front().energy = polished.cand.energy;
        converged.front().endpoint_error = polished.cand.endpoint_error;
      }
    }
    const double e_min = converged.front().energy;
    int mult = 0;
    for (const auto& c : converged) {
      if (c.energy <= e_min * (1.0 + opts.multiplicity_rel_tol)) ++mult;
      res.covectors.push_back(c.p);
    }
    res.multiplicity = mult;
    res.energy = e_min;
    res.value = std::sqrt(std::max(e_min, 0.0));
    res.method = DistanceMethod::Shooting;
    res.endpoint_error = converged.front().endpoint_error;
    res.converged = res.endpoint_error <= opts.endpoint_tol;
    if (res.converged) return res;
  }

  // direct fallback
  if (opts.allow_direct_fallback) {
    DirectOutcome direct = direct_fallback(*frame, x, y, opts);
    if (direct.usable &&
        (converged.empty() || direct.energy < res.energy ||
         !res.converged)) {
      const bool had_shooting = !converged.empty();
      res.method = had_shooting ? DistanceMethod::Hybrid : DistanceMethod::Direct;
      if (!had_shooting || direct.energy < res.energy) {
        res.value = std::sqrt(std::max(direct.energy, 0.0));
        res.energy = direct.energy;
        res.endpoint_error = direct.endpoint_error;
        res.multiplicity = std::max(res.multiplicity, 1);
        res.converged = direct.endpoint_error <= 1e-5;
      }
      if (res.converged || had_shooting) return res;
    }
  }

  // nothing met tolerance: report the best effort, flagged
  if (converged.empty()) {
    if (!failed.empty()) {
      auto best = std::min_element(failed.begin(), failed.end(),
                                   [](const Candidate& a, const Candidate& b) {
                                     return a.endpoint_error < b.endpoint_error;
                                   });
      res.value = std::sqrt(std::max(best->energy, 0.0));
      res.energy = best->energy;
      res.endpoint_error = best->endpoint_error;
      res.covectors = {best->p};
      res.multiplicity = 0;
    }
    res.converged = false;
  }
  return res;
}

}  // namespace

DistanceResult distance(const FramePtr& frame, const Vec& x, const Vec& y,
                        const DistanceOptions& opts) {
  return run_distance(frame, x, y, {}, /*warm_only_if_converged=*/false, opts);
}

SingleShootResult shoot_single(const FramePtr& frame, const Vec& x, const Vec& y,
                               const Vec& p_init, const DistanceOptions& opts) {
  SingleShootResult out;
  Vec p_end;
  GaussNewtonOutcome gn = gauss_newton(*frame, x, y, p_init, opts, &p_end);
  if (gn.cand.p.size() == 0) return out;
  out.converged = gn.converged;
  out.p0 = std::move(gn.cand.p);
  out.p_end = std::move(p_end);
  out.energy = gn.cand.energy;
  out.endpoint_error = gn.cand.endpoint_error;
  return out;
}

Vec shooting_initial_guess(const FramePtr& frame, const Vec& x, const Vec& y) {
  return linearized_guess(*frame, x, y);
}

DistanceResult distance_warm(const FramePtr& frame, const Vec& x, const Vec& y,
                             const std::vector<Vec>& warm_starts,
                             const DistanceOptions& opts) {
  return run_distance(frame, x, y, warm_starts, /*warm_only_if_converged=*/true,
                      opts);
}

MultiGeodesicReport multi_geodesic_probe(const FramePtr& frame, const Vec& x,
                                         const Vec& y,
                                         const DistanceOptions& opts) {
  MultiGeodesicReport rep;
  if ((x - y).norm() == 0.0) {
    rep.value = 0.0;
    rep.multiplicity = 1;
    rep.covectors = {Vec::Zero(frame->ambient_dim())};
    rep.midpoints = {x};
    rep.converged = true;
    return rep;
  }
  DistanceOptions sweep = opts;
  sweep.allow_direct_fallback = false;
  DistanceResult res = distance(frame, x, y, sweep);
  rep.value = res.value;
  rep.converged = res.converged;
  if (!res.converged) {
    throw NoConvergenceError("multi_geodesic_probe: shooting did not converge");
  }
  const double e_min = res.energy;
  for (std::size_t i = 0; i < res.covectors.size(); ++i) {
    const double e = 2.0 * hamiltonian(*frame, x, res.covectors[i]);
    if (e > e_min * (1.0 + opts.multiplicity_rel_tol)) continue;
    rep.covectors.push_back(res.covectors[i]);
    rep.midpoints.push_back(
        shoot_endpoint(*frame, x, res.covectors[i], opts.shoot_steps).midpoint);
  }
  rep.multiplicity = static_cast<int>(rep.covectors.size());
  return rep;
}

double eikonal_residual(const FramePtr& frame, const Vec& x, const Vec& y,
                        double h, const DistanceOptions& opts) {
  if ((x - y).norm() == 0.0) {
    throw CutLocusError("eikonal_residual: y must differ from x");
  }
  MultiGeodesicReport probe = multi_geodesic_probe(frame, x, y, opts);
  if (probe.multiplicity >= 2) {
    throw CutLocusError("eikonal_residual: multiple minimizers at target");
  }
  const int n = frame->ambient_dim();
  Vec grad(n);
  Vec yp = y, ym = y;
  for (int k = 0; k < n; ++k) {
    yp(k) = y(k) + h;
    ym(k) = y(k) - h;
    // warm-start the perturbed solves from the base covector
    const DistanceResult dp = distance_warm(frame, x, yp, probe.covectors, opts);
    const DistanceResult dm = distance_warm(frame, x, ym, probe.covectors, opts);
    if (!dp.converged || !dm.converged) {
      throw NoConvergenceError("eikonal_residual: perturbed distance failed");
    }
    grad(k) = (dp.value - dm.value) / (2.0 * h);
    yp(k) = y(k);
    ym(k) = y(k);
  }
  return hamiltonian(*frame, y, grad) - 0.5;
}

}  // namespace srotlab
