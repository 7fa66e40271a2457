#pragma once

#include "srotlab/frames.hpp"

namespace srotlab {

inline constexpr int kDefaultFlowSteps = 1000;

/// Discretized normal extremal: the Hamiltonian trajectory (x(t), p(t)) on a
/// uniform grid over [0,1] together with the recovered controls
/// u_i(t_k) = p(t_k) . f_i(x(t_k)).
struct NormalExtremal {
  FramePtr frame;
  Vec ts;   // N+1 nodes
  Mat xs;   // (N+1) x n
  Mat ps;   // (N+1) x n
  Mat us;   // (N+1) x m

  int nodes() const { return static_cast<int>(ts.size()); }
  Vec endpoint() const { return xs.row(xs.rows() - 1); }
  double hamiltonian_at(int k) const;
  /// max_k |H_k - H_0| / max(H_0, floor)
  double energy_drift(double floor = 1e-12) const;
};

/// Control-parametrized horizontal path: samples of u on a uniform grid and
/// the trajectory of xdot = sum_i u_i f_i(x) integrated from x0 (controls are
/// interpolated linearly between nodes).
struct HorizontalPath {
  FramePtr frame;
  Vec ts;   // N+1 nodes
  Mat us;   // (N+1) x m
  Mat xs;   // (N+1) x n

  int nodes() const { return static_cast<int>(ts.size()); }
  Vec endpoint() const { return xs.row(xs.rows() - 1); }
  double max_control_norm() const;
};

/// H(x,p) = 1/2 sum_i (p . f_i(x))^2.
double hamiltonian(const ControlFrame& frame, const Vec& x, const Vec& p);

/// Fixed-step RK4 integration of xdot = dH/dp, pdot = -dH/dx on [0,1].
/// Throws NonFiniteError on trajectory blow-up.
NormalExtremal flow_extremal(const FramePtr& frame, const Vec& x0, const Vec& p0,
                             int steps = kDefaultFlowSteps);

/// Endpoint of the normal extremal from (x0, p0); the sub-Riemannian
/// exponential map in chart coordinates.
Vec exp_map(const FramePtr& frame, const Vec& x0, const Vec& p0,
            int steps = kDefaultFlowSteps);

/// Endpoint state plus the endpoint sensitivity S = d x(1) / d p0, obtained
/// by integrating the variational equation alongside the flow. One pass;
/// used by the shooting solver.
struct ShootState {
  Vec x1;
  Vec p1;
  Mat sens;      // n x n
  Vec midpoint;  // x(1/2), used for deduplicating geodesics
};
ShootState shoot_endpoint(const ControlFrame& frame, const Vec& x0, const Vec& p0,
                          int steps);

/// Integrates xdot = sum u_i f_i(x) from x0 for control samples us on the
/// uniform grid ts (linear interpolation between nodes).
HorizontalPath integrate_controls(const FramePtr& frame, const Vec& x0,
                                  const Vec& ts, const Mat& us);

/// Path with constant control u on [0,1].
HorizontalPath constant_control_path(const FramePtr& frame, const Vec& x0,
                                     const Vec& u, int steps = 200);

/// Projection of a normal extremal to its horizontal path.
HorizontalPath to_horizontal_path(const NormalExtremal& extremal);

struct LengthEnergy {
  double length;
  double energy;
};

/// (int |u| dt, int |u|^2 dt) by the composite trapezoid rule on the grid.
LengthEnergy length_energy(const Vec& ts, const Mat& us);
LengthEnergy length_energy(const NormalExtremal& extremal);
LengthEnergy length_energy(const HorizontalPath& path);

}  // namespace srotlab
