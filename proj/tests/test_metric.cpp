#include "srotlab/metric.hpp"

#include <doctest.h>
#include <random>

#include "oracles.hpp"
#include "srotlab/errors.hpp"

using namespace srotlab;

namespace {

// trimmed sweep for generic pairs; unit tests keep the full sweep for the
// cut-locus cases only
DistanceOptions fast_opts() {
  DistanceOptions d;
  d.shoot_steps = 150;
  d.verify_steps = 400;
  d.max_iters = 50;
  d.lazy_sweep = true;
  return d;
}

}  // namespace

TEST_CASE("distance on the diagonal is zero") {
  const FramePtr heis = catalog("heisenberg");
  Vec x(3);
  x << 0.4, -0.2, 1.7;
  const DistanceResult res = distance(heis, x, x);
  CHECK(res.value == 0.0);
  CHECK(res.converged);
  CHECK(res.multiplicity == 1);
  CHECK(res.covectors.at(0).norm() == 0.0);
}

TEST_CASE("heisenberg straight-line distances") {
  const FramePtr heis = catalog("heisenberg");
  const Vec zero = Vec::Zero(3);

  SUBCASE("diagonal horizontal line") {
    Vec y(3);
    y << 1.0, 1.0, 0.5;
    const DistanceResult res = distance(heis, zero, y);
    CHECK(res.converged);
    CHECK(res.value ==
          doctest::Approx(oracles::heisenberg_line_distance(1.0, 1.0)).epsilon(1e-5));
    CHECK(res.endpoint_error <= 1e-8);
    CHECK(res.multiplicity == 1);
    // value^2 = 2H for every returned covector
    for (const Vec& p : res.covectors) {
      const double e = 2.0 * hamiltonian(*heis, zero, p);
      if (e <= res.energy * (1.0 + 1e-4)) {
        CHECK(std::abs(res.value * res.value - e) <= 1e-6 * std::max(e, 1e-12));
      }
    }
  }

  SUBCASE("axis line") {
    Vec y(3);
    y << 2.0, 0.0, 0.0;
    const DistanceResult res = distance(heis, zero, y);
    CHECK(res.converged);
    CHECK(res.value == doctest::Approx(2.0).epsilon(1e-5));
  }
}

TEST_CASE("heisenberg vertical target: isoperimetric value and multiplicity") {
  const FramePtr heis = catalog("heisenberg");
  const Vec zero = Vec::Zero(3);
  Vec y(3);
  y << 0.0, 0.0, 0.25;

  const DistanceResult res = distance(heis, zero, y);
  CHECK(res.converged);
  CHECK(res.value ==
        doctest::Approx(oracles::heisenberg_vertical_distance(0.25)).epsilon(1e-2));

  const MultiGeodesicReport probe = multi_geodesic_probe(heis, zero, y);
  CHECK(probe.multiplicity >= 2);
  // representatives are genuinely distinct geodesics
  for (std::size_t i = 0; i < probe.midpoints.size(); ++i) {
    for (std::size_t j = i + 1; j < probe.midpoints.size(); ++j) {
      CHECK((probe.midpoints[i] - probe.midpoints[j]).norm() > 1e-3);
    }
  }
}

TEST_CASE("planar projection lower bound") {
  const FramePtr heis = catalog("heisenberg");
  std::mt19937_64 rng(3);
  const DistanceOptions opts = fast_opts();
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = oracles::random_point(rng, 3, 1.0);
    const Vec y = oracles::random_point(rng, 3, 1.0);
    const DistanceResult res = distance(heis, x, y, opts);
    REQUIRE(res.converged);
    const double planar = (y.head(2) - x.head(2)).norm();
    CHECK(res.value + 1e-6 >= planar);
  }
}

TEST_CASE("symmetry and triangle inequality") {
  const FramePtr heis = catalog("heisenberg");
  std::mt19937_64 rng(5);
  const DistanceOptions opts = fast_opts();

  for (int trial = 0; trial < 12; ++trial) {
    const Vec x = oracles::random_point(rng, 3, 1.0);
    const Vec y = oracles::random_point(rng, 3, 1.0);
    const double dxy = distance(heis, x, y, opts).value;
    const double dyx = distance(heis, y, x, opts).value;
    CHECK(std::abs(dxy - dyx) < 1e-4);
  }

  for (int trial = 0; trial < 8; ++trial) {
    const Vec x = oracles::random_point(rng, 3, 1.0);
    const Vec y = oracles::random_point(rng, 3, 1.0);
    const Vec z = oracles::random_point(rng, 3, 1.0);
    const double dxz = distance(heis, x, z, opts).value;
    const double dxy = distance(heis, x, y, opts).value;
    const double dyz = distance(heis, y, z, opts).value;
    CHECK(dxz <= dxy + dyz + 1e-4);
  }
}

TEST_CASE("warm starts reproduce the cold solve") {
  const FramePtr heis = catalog("heisenberg");
  Vec x(3), y(3);
  x << 0.1, -0.2, 0.05;
  y << 0.8, 0.4, 0.3;
  const DistanceResult cold = distance(heis, x, y, fast_opts());
  REQUIRE(cold.converged);
  const DistanceResult warm =
      distance_warm(heis, x, y, {cold.covectors.front()}, fast_opts());
  CHECK(warm.converged);
  CHECK(warm.value == doctest::Approx(cold.value).epsilon(1e-9));
}

TEST_CASE("direct fallback recovers an axis line when shooting is disabled") {
  const FramePtr heis = catalog("heisenberg");
  DistanceOptions opts;
  opts.radial_scales.clear();  // no sweep
  opts.max_iters = 0;          // cheap starts cannot iterate
  Vec y(3);
  y << 1.0, 0.0, 0.0;
  const DistanceResult res = distance(heis, Vec::Zero(3), y, opts);
  CHECK(res.method != DistanceMethod::Shooting);
  CHECK(res.value == doctest::Approx(1.0).epsilon(5e-2));
  // direct solutions satisfy value^2 = energy by construction
  CHECK(std::abs(res.value * res.value - res.energy) <= 1e-4 * (1.0 + res.energy));
}

TEST_CASE("unconverged results are flagged, not thrown") {
  const FramePtr heis = catalog("heisenberg");
  DistanceOptions opts;
  opts.radial_scales.clear();
  opts.max_iters = 0;
  opts.allow_direct_fallback = false;
  Vec y(3);
  y << 0.0, 0.0, 0.3;  // unreachable without iterating
  const DistanceResult res = distance(heis, Vec::Zero(3), y, opts);
  CHECK_FALSE(res.converged);
}

TEST_CASE("eikonal residual at smooth targets") {
  const FramePtr heis = catalog("heisenberg");
  const Vec zero = Vec::Zero(3);
  DistanceOptions opts = fast_opts();
  opts.lazy_sweep = false;  // the probe needs the full sweep

  Vec y(3);
  y << 1.0, 1.0, 0.5;
  const double res = eikonal_residual(heis, zero, y, 1e-3, opts);
  CHECK(std::abs(res) < 5e-2);

  Vec y2(3);
  y2 << 2.0, 0.0, 0.0;
  CHECK(std::abs(eikonal_residual(heis, zero, y2, 1e-3, opts)) < 5e-2);

  CHECK_THROWS_AS(eikonal_residual(heis, zero, zero, 1e-3, opts), CutLocusError);
  Vec vertical(3);
  vertical << 0.0, 0.0, 0.25;
  CHECK_THROWS_AS(eikonal_residual(heis, zero, vertical, 1e-3, opts),
                  CutLocusError);
}
