#pragma once

#include <optional>

#include "srotlab/geodesics.hpp"

namespace srotlab {

/// Evidence that a horizontal path is singular: a nonvanishing adjoint arc
/// p(t) annihilating the frame along the trajectory.
struct AbnormalCertificate {
  Mat adjoint;          // (N+1) x n covectors, |p(0)| = 1
  double residual;      // max_{k,i} |p(t_k).f_i(x(t_k))| / |p(t_k)|
  double goh_residual;  // max_{k,i<j} |p(t_k).[f_i,f_j](x(t_k))| / |p(t_k)|
};

struct SingularOptions {
  double rank_tol = 1e-7;     // singular values below rank_tol * sigma_max are zero
  int constraint_nodes = 33;  // coarse sub-grid for the null-vector extraction
};

/// Numerical rank of the controllability Gramian
/// G = int B(t) B(t)^T dt,  B(t) = dPhi(1) dPhi(t)^{-1} [f_1..f_m](x(t)),
/// assembled by integrating the variational equation of the control flow
/// along the path. rank < n certifies the path singular.
int endpoint_rank(const ControlFrame& frame, const HorizontalPath& path,
                  double tol = 1e-7);

/// Seeks p(0) != 0 annihilating the frame along the path; returns nullopt
/// when endpoint_rank = n (regular path). The initial covector comes from the
/// smallest singular vector of the stacked constraint matrix over a coarse
/// sub-grid, refined by adjoint integration over the full grid.
std::optional<AbnormalCertificate> abnormal_certificate(
    const ControlFrame& frame, const HorizontalPath& path,
    const SingularOptions& opts = {});

/// Goh condition: the abnormal lift also annihilates [Delta, Delta] along
/// the path. For constant paths the certificate is ignored and the
/// pointwise existence criterion (rank of fields plus brackets < n) is used.
bool goh_test(const ControlFrame& frame, const HorizontalPath& path,
              const AbnormalCertificate& certificate, double tol = 1e-6);

/// Rank-2 / dim-3 classifier: a nontrivial horizontal path is singular iff
/// it stays inside the singular set of the distribution. Requires n = 3,
/// m = 2 (throws WrongDimensionError otherwise).
bool dim3_singular_classifier(const ControlFrame& frame,
                              const HorizontalPath& path, double tol = 1e-8);

/// Adjoint transport: integrates pdot = -sum u_i p . df_i along the path
/// from p0; shares the integrator with abnormal_certificate so tests can
/// re-run the transport from a stored p(0).
Mat adjoint_transport(const ControlFrame& frame, const HorizontalPath& path,
                      const Vec& p0);

}  // namespace srotlab
