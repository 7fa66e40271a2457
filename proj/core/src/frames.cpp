#include "srotlab/frames.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <functional>

#include "srotlab/errors.hpp"

namespace srotlab {

ControlFrame::ControlFrame(std::string name, int ambient_dim, int rank)
    : name_(std::move(name)), n_(ambient_dim), m_(rank) {
  if (n_ < 2 || m_ < 1 || m_ >= n_) {
    throw WrongDimensionError("control frame requires 1 <= m < n, n >= 2");
  }
}

void ControlFrame::jacobians(const Vec& x, std::vector<Mat>& J) const {
  J.assign(static_cast<std::size_t>(m_), Mat::Zero(n_, n_));
  Mat Fp(n_, m_), Fm(n_, m_);
  Vec xp = x, xm = x;
  for (int k = 0; k < n_; ++k) {
    xp(k) = x(k) + kJacStep;
    xm(k) = x(k) - kJacStep;
    fields(xp, Fp);
    fields(xm, Fm);
    for (int i = 0; i < m_; ++i) {
      J[static_cast<std::size_t>(i)].col(k) = (Fp.col(i) - Fm.col(i)) / (2.0 * kJacStep);
    }
    xp(k) = x(k);
    xm(k) = x(k);
  }
}

void ControlFrame::hessian_form(int i, const Vec& x, const Vec& w, Mat& H) const {
  if (i < 0 || i >= m_) throw IndexOutOfRangeError("field index out of range");
  H.setZero(n_, n_);
  std::vector<Mat> Jp, Jm;
  Vec xp = x, xm = x;
  for (int k = 0; k < n_; ++k) {
    xp(k) = x(k) + kJacStep;
    xm(k) = x(k) - kJacStep;
    jacobians(xp, Jp);
    jacobians(xm, Jm);
    // column k of H: d/dx_k of (J_i^T w)
    H.col(k) = (Jp[static_cast<std::size_t>(i)] - Jm[static_cast<std::size_t>(i)])
                   .transpose() *
               w / (2.0 * kJacStep);
    xp(k) = x(k);
    xm(k) = x(k);
  }
  // symmetrize FD noise
  H = 0.5 * (H + H.transpose()).eval();
}

Vec ControlFrame::field(int i, const Vec& x) const {
  if (i < 0 || i >= m_) throw IndexOutOfRangeError("field index out of range");
  Mat F(n_, m_);
  fields(x, F);
  return F.col(i);
}

Mat ControlFrame::field_jacobian(int i, const Vec& x) const {
  if (i < 0 || i >= m_) throw IndexOutOfRangeError("field index out of range");
  std::vector<Mat> J;
  jacobians(x, J);
  return J[static_cast<std::size_t>(i)];
}

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(std::string("non-finite entries in ") + what);
}

namespace {

// --- catalog frames ---------------------------------------------------------

// f_0 = d/dx1, f_1 = d/dx2 + x1 d/dx3. Fat on all of R^3.
class HeisenbergFrame final : public ControlFrame {
 public:
  HeisenbergFrame() : ControlFrame("heisenberg", 3, 2) {}
  void fields(const Vec& x, Mat& F) const override {
    F.setZero(3, 2);
    F(0, 0) = 1.0;
    F(1, 1) = 1.0;
    F(2, 1) = x(0);
  }
  void jacobians(const Vec&, std::vector<Mat>& J) const override {
    J.assign(2, Mat::Zero(3, 3));
    J[1](2, 0) = 1.0;
  }
  void hessian_form(int, const Vec&, const Vec&, Mat& H) const override {
    H.setZero(3, 3);
  }
};

// f_0 = d/dx1, f_1 = d/dx2 + x1^2 d/dx3. Singular set is the plane {x1 = 0}.
class MartinetFrame final : public ControlFrame {
 public:
  MartinetFrame() : ControlFrame("martinet", 3, 2) {}
  void fields(const Vec& x, Mat& F) const override {
    F.setZero(3, 2);
    F(0, 0) = 1.0;
    F(1, 1) = 1.0;
    F(2, 1) = x(0) * x(0);
  }
  void jacobians(const Vec& x, std::vector<Mat>& J) const override {
    J.assign(2, Mat::Zero(3, 3));
    J[1](2, 0) = 2.0 * x(0);
  }
  void hessian_form(int i, const Vec&, const Vec& w, Mat& H) const override {
    H.setZero(3, 3);
    if (i == 1) H(0, 0) = 2.0 * w(2);
  }
};

// f_0 = d/dx1, f_1 = d/dx2, f_2 = d/dx3 + x1 d/dx4. Two-generating, not fat.
class TwoGeneratingR4Frame final : public ControlFrame {
 public:
  TwoGeneratingR4Frame() : ControlFrame("two_generating_r4", 4, 3) {}
  void fields(const Vec& x, Mat& F) const override {
    F.setZero(4, 3);
    F(0, 0) = 1.0;
    F(1, 1) = 1.0;
    F(2, 2) = 1.0;
    F(3, 2) = x(0);
  }
  void jacobians(const Vec&, std::vector<Mat>& J) const override {
    J.assign(3, Mat::Zero(4, 4));
    J[2](3, 0) = 1.0;
  }
  void hessian_form(int, const Vec&, const Vec&, Mat& H) const override {
    H.setZero(4, 4);
  }
};

// f_0 = d/dx1, f_1 = d/dx2 + x1 d/dx3 + x3 d/dx4. Rank-two regular
// distribution in dimension four; singular paths are the f_0 integral curves.
class Rank2Dim4Frame final : public ControlFrame {
 public:
  Rank2Dim4Frame() : ControlFrame("rank2_dim4", 4, 2) {}
  void fields(const Vec& x, Mat& F) const override {
    F.setZero(4, 2);
    F(0, 0) = 1.0;
    F(1, 1) = 1.0;
    F(2, 1) = x(0);
    F(3, 1) = x(2);
  }
  void jacobians(const Vec&, std::vector<Mat>& J) const override {
    J.assign(2, Mat::Zero(4, 4));
    J[1](2, 0) = 1.0;
    J[1](3, 2) = 1.0;
  }
  void hessian_form(int, const Vec&, const Vec&, Mat& H) const override {
    H.setZero(4, 4);
  }
};

// Iterated bracket f_I = [f_{I[0]}, [f_{I[1]}, ... f_{I[k-1]}]...] evaluated
// by recursion; derivative of the inner (composite) field is taken by central
// differences. The catalog fields are polynomial of degree <= 2, so the
// differences are exact up to roundoff.
Vec eval_bracket_word(const ControlFrame& frame, const std::vector<int>& word,
                      std::size_t from, const Vec& x) {
  const int n = frame.ambient_dim();
  if (from + 1 == word.size()) return frame.field(word[from], x);
  const int i = word[from];
  const Vec fi = frame.field(i, x);
  const Mat Dfi = frame.field_jacobian(i, x);
  const Vec inner = eval_bracket_word(frame, word, from + 1, x);
  // D(inner)(x) * f_i(x) by central differences along f_i
  const double h = ControlFrame::kJacStep;
  Mat Dinner(n, n);
  Vec xp = x, xm = x;
  for (int k = 0; k < n; ++k) {
    xp(k) += h;
    xm(k) -= h;
    Dinner.col(k) =
        (eval_bracket_word(frame, word, from + 1, xp) -
         eval_bracket_word(frame, word, from + 1, xm)) /
        (2.0 * h);
    xp(k) = x(k);
    xm(k) = x(k);
  }
  return Dinner * fi - Dfi * inner;
}

int numerical_rank(const Mat& A, double tol) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(A);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol * sv(0)) ++rank;
  }
  return rank;
}

}  // namespace

FramePtr catalog(const std::string& name) {
  if (name == "heisenberg") return std::make_shared<HeisenbergFrame>();
  if (name == "martinet") return std::make_shared<MartinetFrame>();
  if (name == "two_generating_r4") return std::make_shared<TwoGeneratingR4Frame>();
  if (name == "rank2_dim4") return std::make_shared<Rank2Dim4Frame>();
  throw UnknownFrameError(name);
}

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "heisenberg", "martinet", "two_generating_r4", "rank2_dim4"};
  return names;
}

Vec lie_bracket(const ControlFrame& frame, int i, int j, const Vec& x) {
  if (i < 0 || i >= frame.rank() || j < 0 || j >= frame.rank()) {
    throw IndexOutOfRangeError("lie_bracket: field index out of range");
  }
  std::vector<Mat> J;
  frame.jacobians(x, J);
  Mat F(frame.ambient_dim(), frame.rank());
  frame.fields(x, F);
  return J[static_cast<std::size_t>(j)] * F.col(i) -
         J[static_cast<std::size_t>(i)] * F.col(j);
}

int bracket_span_rank(const ControlFrame& frame, const Vec& x, int depth,
                      double tol) {
  if (depth < 1) throw IndexOutOfRangeError("bracket_span_rank: depth >= 1 required");
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  // all words of length <= depth over {0..m-1}
  std::vector<std::vector<int>> words;
  std::vector<std::vector<int>> prev;
  for (int i = 0; i < m; ++i) prev.push_back({i});
  words = prev;
  for (int len = 2; len <= depth; ++len) {
    std::vector<std::vector<int>> cur;
    for (const auto& w : prev) {
      for (int i = 0; i < m; ++i) {
        std::vector<int> nw;
        nw.reserve(w.size() + 1);
        nw.push_back(i);
        nw.insert(nw.end(), w.begin(), w.end());
        cur.push_back(std::move(nw));
      }
    }
    words.insert(words.end(), cur.begin(), cur.end());
    prev = std::move(cur);
  }
  Mat span(n, static_cast<int>(words.size()));
  for (std::size_t c = 0; c < words.size(); ++c) {
    span.col(static_cast<int>(c)) = eval_bracket_word(frame, words[c], 0, x);
  }
  return numerical_rank(span, tol);
}

bool martinet_set_membership(const ControlFrame& frame, const Vec& x, double tol) {
  const int n = frame.ambient_dim();
  const int m = frame.rank();
  const int n_pairs = m * (m - 1) / 2;
  Mat span(n, m + n_pairs);
  Mat F(n, m);
  frame.fields(x, F);
  span.leftCols(m) = F;
  int c = m;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      span.col(c++) = lie_bracket(frame, i, j, x);
    }
  }
  return numerical_rank(span, tol) < n;
}

}  // namespace srotlab
