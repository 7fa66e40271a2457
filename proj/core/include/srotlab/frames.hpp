#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

namespace srotlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A control frame: m smooth vector fields f_0..f_{m-1} spanning a rank-m
/// distribution on a single chart R^n, with m < n. Frames are immutable after
/// construction and all evaluation is const and thread-safe.
///
/// Custom distributions can be added by subclassing and overriding fields()
/// (and, when available analytically, jacobians() / hessian_form()); the
/// built-in catalog is available through catalog().
class ControlFrame {
 public:
  ControlFrame(std::string name, int ambient_dim, int rank);
  virtual ~ControlFrame() = default;

  const std::string& name() const { return name_; }
  int ambient_dim() const { return n_; }
  int rank() const { return m_; }

  /// Writes f_i(x) into column i of F (n x m).
  virtual void fields(const Vec& x, Mat& F) const = 0;

  /// J[i](j,k) = d f_i^j / d x_k. Default: central differences of fields()
  /// with step kJacStep.
  virtual void jacobians(const Vec& x, std::vector<Mat>& J) const;

  /// Weighted field Hessian: H(k,l) = sum_j w_j d^2 f_i^j / dx_k dx_l.
  /// Default: central differences of jacobians().
  virtual void hessian_form(int i, const Vec& x, const Vec& w, Mat& H) const;

  /// Value of field i at x (allocating convenience wrapper).
  Vec field(int i, const Vec& x) const;
  /// Derivative matrix of field i at x.
  Mat field_jacobian(int i, const Vec& x) const;

  static constexpr double kJacStep = 1e-5;

 private:
  std::string name_;
  int n_;
  int m_;
};

using FramePtr = std::shared_ptr<const ControlFrame>;

/// Catalog lookup by identifier. Known names: "heisenberg", "martinet",
/// "two_generating_r4", "rank2_dim4". Throws UnknownFrameError otherwise.
FramePtr catalog(const std::string& name);

const std::vector<std::string>& catalog_names();

/// [f_i, f_j](x) = Df_j(x) f_i(x) - Df_i(x) f_j(x), field indices 0-based.
Vec lie_bracket(const ControlFrame& frame, int i, int j, const Vec& x);

/// Numerical rank (singular values > tol * sigma_max) of the matrix whose
/// columns are all iterated brackets [f_{i1},[f_{i2},...,f_{ik}]...] of
/// length k <= depth, evaluated at x.
int bracket_span_rank(const ControlFrame& frame, const Vec& x, int depth,
                      double tol = 1e-8);

/// True iff rank of {f_i(x)} together with {[f_i,f_j](x)} is < n at relative
/// tolerance tol, i.e. x lies in the singular (Martinet) set of the
/// distribution.
bool martinet_set_membership(const ControlFrame& frame, const Vec& x,
                             double tol = 1e-8);

/// Throws NonFiniteError unless every entry of v is finite.
void require_finite(const Vec& v, const char* what);

}  // namespace srotlab
