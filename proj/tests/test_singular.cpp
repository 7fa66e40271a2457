#include "srotlab/singular.hpp"

#include <doctest.h>
#include <random>

#include "oracles.hpp"
#include "srotlab/errors.hpp"

using namespace srotlab;

namespace {

HorizontalPath random_nonconstant_path(const FramePtr& frame,
                                       std::mt19937_64& rng, int segments = 4,
                                       int steps = 160) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int m = frame->rank();
  Mat seg_controls(segments, m);
  for (int s = 0; s < segments; ++s) {
    for (int i = 0; i < m; ++i) {
      const double v = unif(rng);
      seg_controls(s, i) = v + (v >= 0.0 ? 0.3 : -0.3);  // keep segments active
    }
  }
  Mat us(steps + 1, m);
  for (int k = 0; k <= steps; ++k) {
    us.row(k) = seg_controls.row(std::min((k * segments) / (steps + 1), segments - 1));
  }
  const Vec x0 = oracles::random_point(rng, frame->ambient_dim(), 1.0);
  return integrate_controls(frame, x0, Vec::LinSpaced(steps + 1, 0.0, 1.0), us);
}

}  // namespace

TEST_CASE("heisenberg nonconstant paths are regular") {
  const FramePtr heis = catalog("heisenberg");
  Vec u(2);
  u << 1.0, 0.0;
  const HorizontalPath line = constant_control_path(heis, Vec::Zero(3), u);
  CHECK(endpoint_rank(*heis, line) == 3);
  CHECK_FALSE(abnormal_certificate(*heis, line).has_value());

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const HorizontalPath path = random_nonconstant_path(heis, rng);
    CHECK(endpoint_rank(*heis, path) == 3);
  }
}

TEST_CASE("martinet arc is singular with a Goh certificate") {
  const FramePtr mart = catalog("martinet");
  Vec u(2);
  u << 0.0, 1.0;
  const HorizontalPath arc = constant_control_path(mart, Vec::Zero(3), u);

  CHECK(endpoint_rank(*mart, arc) == 2);

  const auto cert = abnormal_certificate(*mart, arc);
  REQUIRE(cert.has_value());
  CHECK(cert->residual < 1e-8);
  CHECK(cert->goh_residual < 1e-8);
  // adjoint is (0, 0, +-1) throughout
  const Vec p0 = cert->adjoint.row(0);
  CHECK(std::abs(p0(2)) > 0.999);
  CHECK(goh_test(*mart, arc, *cert));

  // re-integration from p(0) reproduces the stored arc
  const Mat transported = adjoint_transport(*mart, arc, p0);
  CHECK((transported.row(transported.rows() - 1) -
         cert->adjoint.row(cert->adjoint.rows() - 1))
            .norm() < 1e-6);
}

TEST_CASE("rank-two dim-four frame: f1 integral curves are singular") {
  const FramePtr frame = catalog("rank2_dim4");
  Vec u(2);
  u << 1.0, 0.0;
  const HorizontalPath curve = constant_control_path(frame, Vec::Zero(4), u);
  CHECK(endpoint_rank(*frame, curve) < 4);
  const auto cert = abnormal_certificate(*frame, curve);
  REQUIRE(cert.has_value());
  CHECK(cert->residual < 1e-8);

  // a generic two-control path is regular
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const HorizontalPath path = random_nonconstant_path(frame, rng);
    CHECK(endpoint_rank(*frame, path) == 4);
  }
}

TEST_CASE("goh condition for constant paths") {
  Vec u0 = Vec::Zero(3);
  const FramePtr two_gen = catalog("two_generating_r4");
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x0 = oracles::random_point(rng, 4, 1.0);
    const HorizontalPath rest = constant_control_path(two_gen, x0, u0, 20);
    // constant paths are singular whenever m < n (rank is the fiber rank m)
    const int rank = endpoint_rank(*two_gen, rest);
    CHECK(rank == 3);
    const auto cert = abnormal_certificate(*two_gen, rest);
    REQUIRE(cert.has_value());
    CHECK_FALSE(goh_test(*two_gen, rest, *cert));  // no Goh paths when two-generating
  }

  const FramePtr heis = catalog("heisenberg");
  Vec u2 = Vec::Zero(2);
  const HorizontalPath rest3 = constant_control_path(heis, Vec::Zero(3), u2, 20);
  const auto cert3 = abnormal_certificate(*heis, rest3);
  REQUIRE(cert3.has_value());
  CHECK_FALSE(goh_test(*heis, rest3, *cert3));  // fat: brackets span everything

  // on the Martinet plane a constant path does carry a Goh covector
  const FramePtr mart = catalog("martinet");
  Vec on_plane(3);
  on_plane << 0.0, 0.4, -0.2;
  const HorizontalPath restm = constant_control_path(mart, on_plane, u2, 20);
  const auto certm = abnormal_certificate(*mart, restm);
  REQUIRE(certm.has_value());
  CHECK(goh_test(*mart, restm, *certm));
}

TEST_CASE("dim-3 classifier matches the gramian rank test") {
  const FramePtr mart = catalog("martinet");
  const FramePtr heis = catalog("heisenberg");

  Vec u(2);
  u << 0.0, 1.0;
  SUBCASE("plane arcs are singular at any height") {
    for (double height : {0.0, -1.5, 2.0}) {
      Vec x0(3);
      x0 << 0.0, 0.0, height;
      const HorizontalPath arc = constant_control_path(mart, x0, u);
      CHECK(dim3_singular_classifier(*mart, arc));
      CHECK(endpoint_rank(*mart, arc) < 3);
    }
  }

  SUBCASE("transversal line leaves the plane") {
    Vec uf(2);
    uf << 1.0, 0.0;
    const HorizontalPath line = constant_control_path(mart, Vec::Zero(3), uf);
    CHECK_FALSE(dim3_singular_classifier(*mart, line));
    CHECK(endpoint_rank(*mart, line) == 3);
  }

  SUBCASE("agreement on random nonconstant paths") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 15; ++trial) {
      const HorizontalPath pm = random_nonconstant_path(mart, rng);
      CHECK(dim3_singular_classifier(*mart, pm) ==
            (endpoint_rank(*mart, pm) < 3));
      const HorizontalPath ph = random_nonconstant_path(heis, rng);
      CHECK(dim3_singular_classifier(*heis, ph) ==
            (endpoint_rank(*heis, ph) < 3));
    }
  }

  SUBCASE("wrong dimension is rejected") {
    const FramePtr r4 = catalog("rank2_dim4");
    Vec u4(2);
    u4 << 1.0, 0.0;
    const HorizontalPath p4 = constant_control_path(r4, Vec::Zero(4), u4, 20);
    CHECK_THROWS_AS(dim3_singular_classifier(*r4, p4), WrongDimensionError);
  }
}

TEST_CASE("endpoint rank is invariant under control rescaling") {
  const FramePtr mart = catalog("martinet");
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const HorizontalPath path = random_nonconstant_path(mart, rng);
    HorizontalPath doubled = path;
    doubled.us *= 2.0;
    doubled = integrate_controls(mart, path.xs.row(0), doubled.ts, doubled.us);
    // same rank even though the doubled path traverses a different image
    CHECK(endpoint_rank(*mart, path) == endpoint_rank(*mart, doubled));
  }

  // for the canonical singular arc the scaled path stays on the plane
  Vec u(2);
  u << 0.0, 2.0;
  const HorizontalPath fast_arc = constant_control_path(mart, Vec::Zero(3), u);
  CHECK(endpoint_rank(*mart, fast_arc) == 2);
}

TEST_CASE("constant paths have fiber rank and are singular") {
  for (const auto& name : catalog_names()) {
    const FramePtr frame = catalog(name);
    const HorizontalPath rest = constant_control_path(
        frame, Vec::Zero(frame->ambient_dim()), Vec::Zero(frame->rank()), 20);
    const int rank = endpoint_rank(*frame, rest);
    CHECK(rank == frame->rank());
    CHECK(rank < frame->ambient_dim());  // singular since m < n
  }
}
