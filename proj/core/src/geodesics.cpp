#include "srotlab/geodesics.hpp"

#include <cmath>

#include "srotlab/errors.hpp"

namespace srotlab {

namespace {

// Workspace for the Hamiltonian right-hand side; reused across RK4 stages to
// avoid per-step allocation in the hot loop.
struct FlowScratch {
  Mat F;                // n x m fields
  std::vector<Mat> J;   // m jacobians
  Vec u;                // m controls
  Vec jtp;              // n
  Mat H;                // n x n hessian form

  explicit FlowScratch(int n, int m)
      : F(n, m), J(static_cast<std::size_t>(m), Mat::Zero(n, n)), u(m), jtp(n),
        H(n, n) {}
};

// z = (x, p): dz = (dH/dp, -dH/dx) with
//   dH/dp = sum u_i f_i,  (dH/dx)_k = sum_i u_i (J_i^T p)_k,  u_i = p.f_i.
void hamiltonian_rhs(const ControlFrame& frame, const Vec& x, const Vec& p,
                     Vec& dx, Vec& dp, FlowScratch& s) {
  frame.fields(x, s.F);
  frame.jacobians(x, s.J);
  s.u.noalias() = s.F.transpose() * p;
  dx.noalias() = s.F * s.u;
  dp.setZero();
  for (int i = 0; i < frame.rank(); ++i) {
    s.jtp.noalias() = s.J[static_cast<std::size_t>(i)].transpose() * p;
    dp.noalias() -= s.u(i) * s.jtp;
  }
}

// Variational blocks of the Hamiltonian vector field at (x, p):
//   A11 = d xdot / dx = sum_i [ f_i (J_i^T p)^T + u_i J_i ]
//   A12 = d xdot / dp = F F^T
//   A21 = d pdot / dx = -sum_i [ (J_i^T p)(J_i^T p)^T + u_i Hess_i(p) ]
//   A22 = d pdot / dp = -A11^T
void variational_blocks(const ControlFrame& frame, const Vec& x, const Vec& p,
                        Mat& A11, Mat& A12, Mat& A21, FlowScratch& s) {
  frame.fields(x, s.F);
  frame.jacobians(x, s.J);
  s.u.noalias() = s.F.transpose() * p;
  A11.setZero();
  A21.setZero();
  for (int i = 0; i < frame.rank(); ++i) {
    const Mat& Ji = s.J[static_cast<std::size_t>(i)];
    s.jtp.noalias() = Ji.transpose() * p;
    A11.noalias() += s.F.col(i) * s.jtp.transpose();
    A11.noalias() += s.u(i) * Ji;
    A21.noalias() -= s.jtp * s.jtp.transpose();
    frame.hessian_form(i, x, p, s.H);
    A21.noalias() -= s.u(i) * s.H;
  }
  A12.noalias() = s.F * s.F.transpose();
}

}  // namespace

double hamiltonian(const ControlFrame& frame, const Vec& x, const Vec& p) {
  Mat F(frame.ambient_dim(), frame.rank());
  frame.fields(x, F);
  return 0.5 * (F.transpose() * p).squaredNorm();
}

double NormalExtremal::hamiltonian_at(int k) const {
  return hamiltonian(*frame, xs.row(k), ps.row(k));
}

double NormalExtremal::energy_drift(double floor) const {
  const double h0 = hamiltonian_at(0);
  double drift = 0.0;
  for (int k = 1; k < nodes(); ++k) {
    drift = std::max(drift, std::abs(hamiltonian_at(k) - h0));
  }
  return drift / std::max(h0, floor);
}

double HorizontalPath::max_control_norm() const {
  double mx = 0.0;
  for (int k = 0; k < us.rows(); ++k) mx = std::max(mx, us.row(k).norm());
  return mx;
}

NormalExtremal flow_extremal(const FramePtr& frame, const Vec& x0, const Vec& p0,
                             int steps) {
  if (steps < 1) throw IndexOutOfRangeError("flow_extremal: steps >= 1 required");
  const int n = frame->ambient_dim();
  const int m = frame->rank();
  if (x0.size() != n || p0.size() != n) {
    throw WrongDimensionError("flow_extremal: x0/p0 dimension mismatch");
  }
  require_finite(x0, "x0");
  require_finite(p0, "p0");

  NormalExtremal out;
  out.frame = frame;
  out.ts = Vec::LinSpaced(steps + 1, 0.0, 1.0);
  out.xs.resize(steps + 1, n);
  out.ps.resize(steps + 1, n);
  out.us.resize(steps + 1, m);

  FlowScratch s(n, m);
  const double h = 1.0 / steps;
  Vec x = x0, p = p0;
  Vec k1x(n), k1p(n), k2x(n), k2p(n), k3x(n), k3p(n), k4x(n), k4p(n);
  Vec xt(n), pt(n);

  auto record = [&](int k) {
    out.xs.row(k) = x;
    out.ps.row(k) = p;
    frame->fields(x, s.F);
    out.us.row(k) = (s.F.transpose() * p).transpose();
  };
  record(0);

  for (int k = 0; k < steps; ++k) {
    hamiltonian_rhs(*frame, x, p, k1x, k1p, s);
    xt = x + 0.5 * h * k1x;
    pt = p + 0.5 * h * k1p;
    hamiltonian_rhs(*frame, xt, pt, k2x, k2p, s);
    xt = x + 0.5 * h * k2x;
    pt = p + 0.5 * h * k2p;
    hamiltonian_rhs(*frame, xt, pt, k3x, k3p, s);
    xt = x + h * k3x;
    pt = p + h * k3p;
    hamiltonian_rhs(*frame, xt, pt, k4x, k4p, s);
    x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    p += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    if (!x.allFinite() || !p.allFinite()) {
      throw NonFiniteError("flow_extremal: trajectory blow-up");
    }
    record(k + 1);
  }
  return out;
}

Vec exp_map(const FramePtr& frame, const Vec& x0, const Vec& p0, int steps) {
  return shoot_endpoint(*frame, x0, p0, steps).x1;
}

ShootState shoot_endpoint(const ControlFrame& frame, const Vec& x0, const Vec& p0,
                          int steps) {
  const int n = frame.ambient_dim();
  require_finite(x0, "x0");
  require_finite(p0, "p0");

  FlowScratch s(n, frame.rank());
  const double h = 1.0 / steps;
  Vec x = x0, p = p0;
  // M = d(x,p)/dp0, M(0) = [0; I]
  Mat Mx = Mat::Zero(n, n);
  Mat Mp = Mat::Identity(n, n);

  Mat A11(n, n), A12(n, n), A21(n, n);
  Vec kx(n), kp(n), xt(n), pt(n);
  Mat kMx(n, n), kMp(n, n), Mxt(n, n), Mpt(n, n);
  Vec ax(n), ap(n);
  Mat aMx(n, n), aMp(n, n);

  ShootState out;
  out.midpoint = x0;

  auto stage = [&](const Vec& xs_, const Vec& ps_, const Mat& Mxs, const Mat& Mps) {
    hamiltonian_rhs(frame, xs_, ps_, kx, kp, s);
    variational_blocks(frame, xs_, ps_, A11, A12, A21, s);
    kMx.noalias() = A11 * Mxs;
    kMx.noalias() += A12 * Mps;
    kMp.noalias() = A21 * Mxs;
    kMp.noalias() -= A11.transpose() * Mps;
  };

  for (int k = 0; k < steps; ++k) {
    stage(x, p, Mx, Mp);
    ax = kx; ap = kp; aMx = kMx; aMp = kMp;
    xt = x + 0.5 * h * kx; pt = p + 0.5 * h * kp;
    Mxt = Mx + 0.5 * h * kMx; Mpt = Mp + 0.5 * h * kMp;

    stage(xt, pt, Mxt, Mpt);
    ax += 2.0 * kx; ap += 2.0 * kp; aMx += 2.0 * kMx; aMp += 2.0 * kMp;
    xt = x + 0.5 * h * kx; pt = p + 0.5 * h * kp;
    Mxt = Mx + 0.5 * h * kMx; Mpt = Mp + 0.5 * h * kMp;

    stage(xt, pt, Mxt, Mpt);
    ax += 2.0 * kx; ap += 2.0 * kp; aMx += 2.0 * kMx; aMp += 2.0 * kMp;
    xt = x + h * kx; pt = p + h * kp;
    Mxt = Mx + h * kMx; Mpt = Mp + h * kMp;

    stage(xt, pt, Mxt, Mpt);
    ax += kx; ap += kp; aMx += kMx; aMp += kMp;

    x += (h / 6.0) * ax;
    p += (h / 6.0) * ap;
    Mx += (h / 6.0) * aMx;
    Mp += (h / 6.0) * aMp;
    if (!x.allFinite() || !p.allFinite()) {
      throw NonFiniteError("shoot_endpoint: trajectory blow-up");
    }
    if (2 * (k + 1) == steps) out.midpoint = x;
  }
  out.x1 = std::move(x);
  out.p1 = std::move(p);
  out.sens = std::move(Mx);
  return out;
}

HorizontalPath integrate_controls(const FramePtr& frame, const Vec& x0,
                                  const Vec& ts, const Mat& us) {
  const int n = frame->ambient_dim();
  const int m = frame->rank();
  const int nodes = static_cast<int>(ts.size());
  if (nodes < 2 || us.rows() != nodes || us.cols() != m || x0.size() != n) {
    throw WrongDimensionError("integrate_controls: bad grid/control shapes");
  }
  require_finite(x0, "x0");

  HorizontalPath out;
  out.frame = frame;
  out.ts = ts;
  out.us = us;
  out.xs.resize(nodes, n);
  out.xs.row(0) = x0;

  Mat F(n, m);
  Vec x = x0, k1(n), k2(n), k3(n), k4(n), xt(n), umid(m);
  auto rhs = [&](const Vec& xv, const Vec& uv, Vec& dx) {
    frame->fields(xv, F);
    dx.noalias() = F * uv;
  };
  for (int k = 0; k + 1 < nodes; ++k) {
    const double h = ts(k + 1) - ts(k);
    const Vec u0 = us.row(k);
    const Vec u1 = us.row(k + 1);
    umid = 0.5 * (u0 + u1);
    rhs(x, u0, k1);
    xt = x + 0.5 * h * k1;
    rhs(xt, umid, k2);
    xt = x + 0.5 * h * k2;
    rhs(xt, umid, k3);
    xt = x + h * k3;
    rhs(xt, u1, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw NonFiniteError("integrate_controls: blow-up");
    out.xs.row(k + 1) = x;
  }
  return out;
}

HorizontalPath constant_control_path(const FramePtr& frame, const Vec& x0,
                                     const Vec& u, int steps) {
  Mat us(steps + 1, u.size());
  us.rowwise() = u.transpose();
  return integrate_controls(frame, x0, Vec::LinSpaced(steps + 1, 0.0, 1.0), us);
}

HorizontalPath to_horizontal_path(const NormalExtremal& extremal) {
  HorizontalPath out;
  out.frame = extremal.frame;
  out.ts = extremal.ts;
  out.us = extremal.us;
  out.xs = extremal.xs;
  return out;
}

LengthEnergy length_energy(const Vec& ts, const Mat& us) {
  double length = 0.0, energy = 0.0;
  for (int k = 0; k + 1 < ts.size(); ++k) {
    const double h = ts(k + 1) - ts(k);
    const double n0 = us.row(k).norm();
    const double n1 = us.row(k + 1).norm();
    length += 0.5 * h * (n0 + n1);
    energy += 0.5 * h * (n0 * n0 + n1 * n1);
  }
  return {length, energy};
}

LengthEnergy length_energy(const NormalExtremal& extremal) {
  return length_energy(extremal.ts, extremal.us);
}

LengthEnergy length_energy(const HorizontalPath& path) {
  return length_energy(path.ts, path.us);
}

}  // namespace srotlab
