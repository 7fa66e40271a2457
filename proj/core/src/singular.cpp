#include "srotlab/singular.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>

#include "srotlab/errors.hpp"

namespace srotlab {

namespace {

// A(t) = sum_i u_i(t) J_i(x(t)) with x, u interpolated linearly between the
// stored path nodes.
struct PathLinearization {
  const ControlFrame& frame;
  const HorizontalPath& path;
  mutable std::vector<Mat> J;

  void eval(int interval, double theta, Mat& A) const {
    const Vec x = (1.0 - theta) * path.xs.row(interval) +
                  theta * path.xs.row(interval + 1);
    const Vec u = (1.0 - theta) * path.us.row(interval) +
                  theta * path.us.row(interval + 1);
    frame.jacobians(x, J);
    A.setZero();
    for (int i = 0; i < frame.rank(); ++i) {
      A.noalias() += u(i) * J[static_cast<std::size_t>(i)];
    }
  }
};

// One RK4 step of Mdot = sign * A(t)^{T?} M over grid interval k.
// transpose = false integrates the state variational equation, true the
// adjoint generator -A^T (sign folded in by the caller).
void rk4_matrix_step(const PathLinearization& lin, int k, double h, Mat& M,
                     bool adjoint) {
  const int n = static_cast<int>(M.rows());
  Mat A0(n, n), Am(n, n), A1(n, n);
  lin.eval(k, 0.0, A0);
  lin.eval(k, 0.5, Am);
  lin.eval(k, 1.0, A1);
  auto apply = [&](const Mat& A, const Mat& X) -> Mat {
    if (adjoint) return -A.transpose() * X;
    return A * X;
  };
  const Mat k1 = apply(A0, M);
  const Mat k2 = apply(Am, M + 0.5 * h * k1);
  const Mat k3 = apply(Am, M + 0.5 * h * k2);
  const Mat k4 = apply(A1, M + h * k3);
  M += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

int endpoint_rank(const ControlFrame& frame, const HorizontalPath& path,
                  double tol) {
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  const int nodes = path.nodes();
  if (!path.xs.allFinite()) throw NonFiniteError("endpoint_rank: path not finite");

  PathLinearization lin{frame, path, {}};

  // fundamental solution M(t) of the control flow at every node
  std::vector<Mat> Ms(static_cast<std::size_t>(nodes));
  Mat M = Mat::Identity(n, n);
  Ms[0] = M;
  for (int k = 0; k + 1 < nodes; ++k) {
    rk4_matrix_step(lin, k, path.ts(k + 1) - path.ts(k), M, /*adjoint=*/false);
    if (!M.allFinite()) throw NonFiniteError("endpoint_rank: variational blow-up");
    Ms[static_cast<std::size_t>(k + 1)] = M;
  }
  const Mat& M1 = Ms.back();

  // Gramian of B(t) = M(1) M(t)^{-1} F(x(t)) by the trapezoid rule
  Mat G = Mat::Zero(n, n);
  Mat F(n, m);
  Mat B_prev;
  for (int k = 0; k < nodes; ++k) {
    frame.fields(path.xs.row(k), F);
    const Mat B = M1 * Ms[static_cast<std::size_t>(k)].partialPivLu().solve(F);
    if (k > 0) {
      const double h = path.ts(k) - path.ts(k - 1);
      G.noalias() += 0.5 * h * (B_prev * B_prev.transpose() + B * B.transpose());
    }
    B_prev = B;
  }

  Eigen::JacobiSVD<Mat> svd(G);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol * sv(0)) ++rank;
  }
  return rank;
}

Mat adjoint_transport(const ControlFrame& frame, const HorizontalPath& path,
                      const Vec& p0) {
  const int n = frame.ambient_dim();
  const int nodes = path.nodes();
  PathLinearization lin{frame, path, {}};
  Mat out(nodes, n);
  Mat p = p0;  // n x 1
  out.row(0) = p0;
  for (int k = 0; k + 1 < nodes; ++k) {
    rk4_matrix_step(lin, k, path.ts(k + 1) - path.ts(k), p, /*adjoint=*/true);
    out.row(k + 1) = p.col(0);
  }
  return out;
}

std::optional<AbnormalCertificate> abnormal_certificate(
    const ControlFrame& frame, const HorizontalPath& path,
    const SingularOptions& opts) {
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  const int nodes = path.nodes();

  if (endpoint_rank(frame, path, opts.rank_tol) >= n) return std::nullopt;

  PathLinearization lin{frame, path, {}};

  // adjoint fundamental solution W(t): p(t) = W(t) p(0)
  std::vector<Mat> Ws(static_cast<std::size_t>(nodes));
  Mat W = Mat::Identity(n, n);
  Ws[0] = W;
  for (int k = 0; k + 1 < nodes; ++k) {
    rk4_matrix_step(lin, k, path.ts(k + 1) - path.ts(k), W, /*adjoint=*/true);
    Ws[static_cast<std::size_t>(k + 1)] = W;
  }

  // stacked annihilation constraints F(x(t_k))^T W(t_k) p0 = 0 over a coarse
  // sub-grid; p0 = smallest right singular vector
  const int n_sub = std::min(opts.constraint_nodes, nodes);
  Mat K(n_sub * m, n);
  Mat F(n, m);
  for (int s = 0; s < n_sub; ++s) {
    const int k = (n_sub == 1) ? 0 : (s * (nodes - 1)) / (n_sub - 1);
    frame.fields(path.xs.row(k), F);
    K.middleRows(s * m, m) = F.transpose() * Ws[static_cast<std::size_t>(k)];
  }
  Eigen::JacobiSVD<Mat> svd(K, Eigen::ComputeFullV);
  const Vec p0 = svd.matrixV().col(n - 1);

  AbnormalCertificate cert;
  cert.adjoint.resize(nodes, n);
  cert.residual = 0.0;
  cert.goh_residual = 0.0;
  for (int k = 0; k < nodes; ++k) {
    const Vec pk = Ws[static_cast<std::size_t>(k)] * p0;
    cert.adjoint.row(k) = pk;
    const double pn = pk.norm();
    frame.fields(path.xs.row(k), F);
    cert.residual = std::max(cert.residual,
                             (F.transpose() * pk).cwiseAbs().maxCoeff() / pn);
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        const double v =
            std::abs(lie_bracket(frame, i, j, path.xs.row(k)).dot(pk)) / pn;
        cert.goh_residual = std::max(cert.goh_residual, v);
      }
    }
  }
  return cert;
}

bool goh_test(const ControlFrame& frame, const HorizontalPath& path,
              const AbnormalCertificate& certificate, double tol) {
  if (path.max_control_norm() < 1e-12) {
    // constant path: a Goh lift exists iff some p != 0 annihilates the fields
    // and all first brackets at the base point
    return martinet_set_membership(frame, path.xs.row(0));
  }
  return certificate.goh_residual < tol;
}

bool dim3_singular_classifier(const ControlFrame& frame,
                              const HorizontalPath& path, double tol) {
  if (frame.ambient_dim() != 3 || frame.rank() != 2) {
    throw WrongDimensionError(
        "dim3_singular_classifier requires n = 3, m = 2");
  }
  for (int k = 0; k < path.nodes(); ++k) {
    if (!martinet_set_membership(frame, path.xs.row(k), tol)) return false;
  }
  return true;
}

}  // namespace srotlab
