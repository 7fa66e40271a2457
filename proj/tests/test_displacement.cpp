#include "srotlab/displacement.hpp"

#include <doctest.h>
#include <random>

#include "oracles.hpp"
#include "srotlab/errors.hpp"

using namespace srotlab;

namespace {

struct Instance {
  DiscreteMeasure mu, nu;
  CostMatrixResult cm;
  LpResult lp;
  TransportMapEstimate map;
};

DiscreteMeasure jittered_cloud(std::mt19937_64& rng, int count, double scale) {
  Mat pts(count, 3);
  std::uniform_real_distribution<double> unif(-scale, scale);
  for (int a = 0; a < count; ++a) {
    for (int k = 0; k < 3; ++k) pts(a, k) = unif(rng);
  }
  return DiscreteMeasure::equal_weights(std::move(pts));
}

// mu jittered near the origin, nu the same atoms pushed along the f1 flow by
// `shift` plus independent jitter
Instance translation_instance(std::mt19937_64& rng, int count, double shift,
                              double jitter) {
  Instance inst;
  inst.mu = jittered_cloud(rng, count, 0.4);
  inst.nu = inst.mu;
  std::uniform_real_distribution<double> unif(-jitter, jitter);
  for (int a = 0; a < count; ++a) {
    inst.nu.points(a, 0) += shift;
    for (int k = 0; k < 3; ++k) inst.nu.points(a, k) += unif(rng);
  }
  const FramePtr heis = catalog("heisenberg");
  inst.cm = cost_matrix(heis, inst.mu.points, inst.nu.points);
  inst.lp = solve_kantorovich(inst.mu, inst.nu, inst.cm.C);
  inst.map = build_map(inst.lp.plan, inst.lp.duals, inst.mu, inst.nu, heis,
                       &inst.cm);
  return inst;
}

}  // namespace

TEST_CASE("identity transport: everything static") {
  std::mt19937_64 rng(1);
  const FramePtr heis = catalog("heisenberg");
  const DiscreteMeasure mu = jittered_cloud(rng, 8, 0.5);
  CostMatrixOptions copts;
  copts.symmetric = true;
  const CostMatrixResult cm = cost_matrix(heis, mu.points, mu.points, copts);
  const LpResult lp = solve_kantorovich(mu, mu, cm.C);
  const TransportMapEstimate map = build_map(lp.plan, lp.duals, mu, mu, heis, &cm);

  CHECK(map.excluded_rows.empty());
  for (const auto& atom : map.atoms) {
    CHECK(atom.label == AtomLabel::Static);
    CHECK((atom.destination - atom.source).norm() == 0.0);
    CHECK(atom.covector.norm() == 0.0);
  }

  // interpolation is frozen and the injectivity ratio is exactly one
  const InterpolationResult interp = interpolate(map, {0.0, 0.5, 1.0}, 200);
  CHECK((interp.clouds[1] - mu.points).cwiseAbs().maxCoeff() == 0.0);
  const AbsContinuityReport probe = abs_continuity_probe(map, interp, 1);
  CHECK(probe.injectivity_margin == 1.0);
}

TEST_CASE("heisenberg translation test") {
  std::mt19937_64 rng(2);
  Instance inst = translation_instance(rng, 12, 1.0, 0.05);

  CHECK(inst.map.excluded_rows.empty());
  int moving = 0;
  const FramePtr heis = catalog("heisenberg");
  for (const auto& atom : inst.map.atoms) {
    if (atom.label != AtomLabel::Moving) continue;
    ++moving;
    // covectors cluster around (shift, 0, 0)
    CHECK(atom.covector(0) == doctest::Approx(1.0).epsilon(0.35));
    // consistency: exp reproduces the destination
    const Vec reached = exp_map(heis, atom.source, atom.covector);
    CHECK((reached - atom.destination).norm() < 1e-6);
  }
  CHECK(moving == 12);

  // regressed potential gradient points along the covector
  attach_regressed_gradients(inst.map, inst.lp.duals.phi, 6);
  int cos_ok = 0;
  for (const auto& atom : inst.map.atoms) {
    const Vec g = -0.5 * atom.dphi_regressed;
    const double cosine = g.dot(atom.covector) / (g.norm() * atom.covector.norm());
    if (cosine >= 0.9) ++cos_ok;
  }
  CHECK(cos_ok >= 9);  // most atoms; boundary fits are noisier
}

TEST_CASE("interpolation endpoints and constant speed") {
  std::mt19937_64 rng(3);
  Instance inst = translation_instance(rng, 8, 1.0, 0.03);
  const FramePtr heis = catalog("heisenberg");

  const InterpolationResult interp = interpolate(inst.map, {0.0, 0.5, 1.0});
  CHECK((interp.clouds.front() - inst.mu.points).cwiseAbs().maxCoeff() == 0.0);
  // t = 1 reproduces the plan destinations to the endpoint tolerance
  for (std::size_t i = 0; i < inst.map.atoms.size(); ++i) {
    CHECK((interp.clouds.back().row(static_cast<int>(i)).transpose() -
           inst.map.atoms[i].destination)
              .norm() < 1e-8);
  }

  DistanceOptions fast;
  fast.lazy_sweep = true;
  for (std::size_t i = 0; i < inst.map.atoms.size(); ++i) {
    const MapAtom& atom = inst.map.atoms[i];
    if (atom.label != AtomLabel::Moving) continue;
    const Vec mid = interp.clouds[1].row(static_cast<int>(i));
    const DistanceResult d =
        distance_warm(heis, atom.source, mid, {(0.5 * atom.covector).eval()}, fast);
    REQUIRE(d.converged);
    CHECK(std::abs(d.value - 0.5 * atom.pair_distance) < 1e-4);
  }
}

TEST_CASE("geodesic split identity") {
  std::mt19937_64 rng(4);
  Instance inst = translation_instance(rng, 6, 1.0, 0.03);
  const auto split = interpolation_split_check(inst.map, 0.5);
  CHECK_FALSE(split.empty());
  for (const auto& e : split) {
    CHECK(e.rel_error <= 1e-3);
  }
}

TEST_CASE("collapse towards a single target atom") {
  std::mt19937_64 rng(5);
  const FramePtr heis = catalog("heisenberg");
  const DiscreteMeasure mu = jittered_cloud(rng, 6, 0.3);
  DiscreteMeasure nu = mu;
  Vec target(3);
  target << 1.5, 0.2, 0.1;
  for (int a = 0; a < nu.size(); ++a) nu.points.row(a) = target;

  const CostMatrixResult cm = cost_matrix(heis, mu.points, nu.points);
  const LpResult lp = solve_kantorovich(mu, nu, cm.C);
  const TransportMapEstimate map = build_map(lp.plan, lp.duals, mu, nu, heis, &cm);
  const InterpolationResult interp = interpolate(map, {0.5, 0.95}, 400);
  const AbsContinuityReport mid = abs_continuity_probe(map, interp, 0);
  const AbsContinuityReport late = abs_continuity_probe(map, interp, 1);
  CHECK(mid.injectivity_margin > 0.0);
  CHECK(late.injectivity_margin < mid.injectivity_margin);  // legitimate collapse
}

TEST_CASE("gradient regression") {
  std::mt19937_64 rng(6);
  const int count = 30;
  Mat sources(count, 3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int a = 0; a < count; ++a) {
    for (int k = 0; k < 3; ++k) sources(a, k) = unif(rng);
  }

  SUBCASE("affine fields are recovered exactly") {
    Vec slope(3);
    slope << 2.0, -1.0, 0.5;
    Vec phi(count);
    for (int a = 0; a < count; ++a) phi(a) = 3.0 + slope.dot(sources.row(a));
    const auto grads = regress_dphi(phi, sources, 6);
    for (const auto& g : grads) {
      CHECK((g.gradient - slope).norm() < 1e-10);
    }
  }

  SUBCASE("underdetermined fits are rejected") {
    CHECK_THROWS_AS(regress_dphi(Vec::Zero(count), sources, 3),
                    DegenerateNeighborhoodError);
  }

  SUBCASE("affinely dependent neighborhoods are rejected") {
    Mat collinear(6, 3);
    for (int a = 0; a < 6; ++a) {
      collinear.row(a) << a * 0.1, 0.0, 0.0;
    }
    CHECK_THROWS_AS(regress_dphi(Vec::Zero(6), collinear, 4),
                    DegenerateNeighborhoodError);
  }
}

TEST_CASE("pushforward bookkeeping and cyclical monotonicity") {
  std::mt19937_64 rng(7);
  Instance inst = translation_instance(rng, 10, 1.0, 0.05);

  // histogram of destinations matches nu exactly
  Vec hist = Vec::Zero(inst.nu.size());
  for (const auto& atom : inst.map.atoms) {
    for (int b = 0; b < inst.nu.size(); ++b) {
      if ((atom.destination.transpose() - inst.nu.points.row(b)).norm() == 0.0) {
        hist(b) += inst.map.weights(atom.index);
        break;
      }
    }
  }
  CHECK((hist - inst.nu.weights).cwiseAbs().maxCoeff() < 1e-12);

  // support pairs are cyclically monotone
  const auto& entries = inst.lp.plan.entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const double direct = inst.cm.C(entries[i].a, entries[i].b) +
                            inst.cm.C(entries[j].a, entries[j].b);
      const double swapped = inst.cm.C(entries[i].a, entries[j].b) +
                             inst.cm.C(entries[j].a, entries[i].b);
      CHECK(direct <= swapped + 1e-9);
    }
  }
}

TEST_CASE("jacobian residual on grids") {
  const FramePtr heis = catalog("heisenberg");

  // 5^3 grid with exactly representable spacing
  GridSpec grid;
  grid.origin = Vec::Zero(3);
  grid.dims = {5, 5, 5};
  grid.spacing = 0.25;
  const int total = grid.total();
  Mat pts(total, 3);
  std::vector<int> idx(3, 0);
  for (int flat = 0; flat < total; ++flat) {
    int rem = flat;
    for (int k = 2; k >= 0; --k) {
      idx[static_cast<std::size_t>(k)] = rem % 5;
      rem /= 5;
    }
    for (int k = 0; k < 3; ++k) pts(flat, k) = 0.25 * idx[static_cast<std::size_t>(k)];
  }
  const DiscreteMeasure mu = DiscreteMeasure::equal_weights(pts);

  CostMatrixOptions copts;
  copts.symmetric = true;
  const CostMatrixResult cm = cost_matrix(heis, mu.points, mu.points, copts);
  const LpResult lp = solve_kantorovich(mu, mu, cm.C);
  const TransportMapEstimate map = build_map(lp.plan, lp.duals, mu, mu, heis, &cm);

  const auto uniform = [](const Vec&) { return 1.0; };

  SUBCASE("identity map: unit determinant, zero residuals") {
    const JacobianResidualReport rep = jacobian_residual(map, grid, uniform, uniform);
    CHECK(rep.evaluated == 27);  // 3^3 interior atoms
    CHECK(rep.median_residual == 0.0);
    CHECK(rep.max_residual == 0.0);
    CHECK(rep.min_abs_det == 1.0);
    CHECK(rep.all_nondegenerate);
    CHECK(rep.static_atoms == total);
    CHECK(rep.max_static_density_residual == 0.0);
  }

  SUBCASE("a mis-scaled target density is detected") {
    const auto half = [](const Vec&) { return 0.5; };
    const JacobianResidualReport rep = jacobian_residual(map, grid, uniform, half);
    CHECK(rep.median_residual == doctest::Approx(1.0));  // |1 - 1/0.5|
  }

  SUBCASE("grids without interior atoms are rejected") {
    GridSpec tiny;
    tiny.origin = Vec::Zero(3);
    tiny.dims = {2, 2, 2};
    tiny.spacing = 0.25;
    CHECK_THROWS_AS(jacobian_residual(map, tiny, uniform, uniform),
                    GridTooCoarseError);
  }
}
