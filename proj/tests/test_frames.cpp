#include "srotlab/frames.hpp"

#include <doctest.h>
#include <random>

#include "oracles.hpp"
#include "srotlab/errors.hpp"

using namespace srotlab;

TEST_CASE("catalog fields match their definitions") {
  const FramePtr heis = catalog("heisenberg");
  CHECK(heis->ambient_dim() == 3);
  CHECK(heis->rank() == 2);

  Vec x(3);
  x << 1.0, 0.0, 0.0;
  const Vec f2 = heis->field(1, x);
  CHECK(f2(0) == 0.0);
  CHECK(f2(1) == 1.0);
  CHECK(f2(2) == 1.0);  // x1 d/dx3 at x1 = 1

  // first field is constant
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec z = oracles::random_point(rng, 3, 2.0);
    const Vec f1 = heis->field(0, z);
    CHECK(f1(0) == 1.0);
    CHECK(f1(1) == 0.0);
    CHECK(f1(2) == 0.0);
  }

  const FramePtr mart = catalog("martinet");
  Vec y(3);
  y << 0.0, 5.0, 7.0;
  const Vec m2 = mart->field(1, y);
  CHECK(m2(0) == 0.0);
  CHECK(m2(1) == 1.0);
  CHECK(m2(2) == 0.0);  // x1^2 = 0

  CHECK(catalog("two_generating_r4")->rank() == 3);
  CHECK(catalog("rank2_dim4")->rank() == 2);
  CHECK_THROWS_AS(catalog("no_such_frame"), UnknownFrameError);
  CHECK_THROWS_AS(heis->field(2, x), IndexOutOfRangeError);
}

TEST_CASE("analytic jacobians agree with central differences") {
  std::mt19937_64 rng(7);
  for (const auto& name : catalog_names()) {
    const FramePtr frame = catalog(name);
    const int n = frame->ambient_dim();
    for (int trial = 0; trial < 4; ++trial) {
      const Vec x = oracles::random_point(rng, n, 1.5);
      for (int i = 0; i < frame->rank(); ++i) {
        const Mat J = frame->field_jacobian(i, x);
        const double h = 1e-5;
        for (int k = 0; k < n; ++k) {
          Vec xp = x, xm = x;
          xp(k) += h;
          xm(k) -= h;
          const Vec col = (frame->field(i, xp) - frame->field(i, xm)) / (2.0 * h);
          CHECK((J.col(k) - col).norm() < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("lie bracket against the finite-difference oracle") {
  std::mt19937_64 rng(3);
  for (const auto& name : catalog_names()) {
    const FramePtr frame = catalog(name);
    const int n = frame->ambient_dim();
    const int m = frame->rank();
    for (int trial = 0; trial < 6; ++trial) {
      const Vec x = oracles::random_point(rng, n, 1.5);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          const Vec lb = lie_bracket(*frame, i, j, x);
          const Vec fd = oracles::bracket_fd(*frame, i, j, x);
          CHECK((lb - fd).norm() < 1e-6);
          // antisymmetry
          CHECK((lb + lie_bracket(*frame, j, i, x)).norm() < 1e-9);
        }
        CHECK(lie_bracket(*frame, i, i, x).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("frozen bracket values") {
  const FramePtr heis = catalog("heisenberg");
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const Vec x = oracles::random_point(rng, 3, 2.0);
    const Vec lb = lie_bracket(*heis, 0, 1, x);
    CHECK(lb(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lb(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lb(2) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const FramePtr mart = catalog("martinet");
  Vec x(3);
  x << 1.0, 0.0, 0.0;
  const Vec lb = lie_bracket(*mart, 0, 1, x);
  CHECK(lb(2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("bracket span ranks") {
  const FramePtr heis = catalog("heisenberg");
  const FramePtr mart = catalog("martinet");
  const Vec zero3 = Vec::Zero(3);

  CHECK(bracket_span_rank(*heis, zero3, 2) == 3);
  CHECK(bracket_span_rank(*mart, zero3, 1) == 2);
  CHECK(bracket_span_rank(*mart, zero3, 2) == 2);  // bracket vanishes on the plane
  CHECK(bracket_span_rank(*mart, zero3, 3) == 3);
  CHECK_THROWS_AS(bracket_span_rank(*heis, zero3, 0), IndexOutOfRangeError);

  const Vec zero4 = Vec::Zero(4);
  CHECK(bracket_span_rank(*catalog("two_generating_r4"), zero4, 2) == 4);
  CHECK(bracket_span_rank(*catalog("rank2_dim4"), zero4, 2) == 3);
  CHECK(bracket_span_rank(*catalog("rank2_dim4"), zero4, 3) == 4);
}

TEST_CASE("hoermander certificate on a lattice") {
  for (const auto& name : catalog_names()) {
    const FramePtr frame = catalog(name);
    const int n = frame->ambient_dim();
    // coarse lattice {-1, 0, 1}^n
    const int total = static_cast<int>(std::pow(3.0, n));
    for (int code = 0; code < total; ++code) {
      Vec x(n);
      int c = code;
      for (int k = 0; k < n; ++k) {
        x(k) = static_cast<double>(c % 3 - 1);
        c /= 3;
      }
      CHECK(bracket_span_rank(*frame, x, 3) == n);
    }
  }
}

TEST_CASE("martinet set membership") {
  const FramePtr mart = catalog("martinet");
  Vec on_plane(3), off_plane(3);
  on_plane << 0.0, 2.0, -1.0;
  off_plane << 0.5, 0.0, 0.0;
  CHECK(martinet_set_membership(*mart, on_plane));
  CHECK_FALSE(martinet_set_membership(*mart, off_plane));

  const FramePtr heis = catalog("heisenberg");
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    CHECK_FALSE(martinet_set_membership(*heis, oracles::random_point(rng, 3, 2.0)));
  }

  // lattice: membership iff the first coordinate vanishes
  for (double x1 = -1.0; x1 <= 1.0 + 1e-12; x1 += 0.1) {
    for (double x2 = -1.0; x2 <= 1.0 + 1e-12; x2 += 0.5) {
      Vec x(3);
      x << x1, x2, 0.3;
      CHECK(martinet_set_membership(*mart, x) == (std::abs(x1) < 0.05));
    }
  }
}

TEST_CASE("hessian form matches finite differences of the jacobian") {
  const FramePtr mart = catalog("martinet");
  std::mt19937_64 rng(13);
  const Vec x = oracles::random_point(rng, 3, 1.0);
  Vec w(3);
  w << 0.3, -1.2, 2.5;
  Mat H;
  mart->hessian_form(1, x, w, H);
  CHECK(H(0, 0) == doctest::Approx(2.0 * w(2)).epsilon(1e-10));
  CHECK(std::abs(H.sum() - H(0, 0)) < 1e-12);
}
