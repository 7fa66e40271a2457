#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "srotlab/errors.hpp"
#include "srotlab/lab/cache.hpp"
#include "srotlab/lab/csv.hpp"
#include "srotlab/lab/scenario.hpp"

using namespace srotlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("srotlab_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path.string() : (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("csv round trip is exact") {
  TempDir tmp("csv");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1e3, 1e3);
  Mat m(7, 4);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = unif(rng) * std::pow(10.0, (r % 5) - 2);
  }
  const std::string path = tmp.str("table.csv");
  lab::write_csv(path, {"a", "b", "c", "d"}, m);
  const lab::CsvTable table = lab::read_csv(path);
  REQUIRE(table.header.size() == 4);
  CHECK(table.header[2] == "c");
  REQUIRE(table.rows.rows() == 7);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(table.rows(r, c) == m(r, c));
  }
}

TEST_CASE("measure csv round trip") {
  TempDir tmp("measure");
  Mat pts(3, 3);
  pts << 0, 0, 0, 1, 0.5, -0.25, 0.125, 2, 3;
  Vec w(3);
  w << 0.25, 0.25, 0.5;
  const std::string path = tmp.str("mu.csv");
  lab::write_measure_csv(path, pts, w);
  const lab::MeasureCsv m = lab::read_measure_csv(path);
  CHECK((m.points - pts).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.weights - w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("distance cache round trip and corruption recovery") {
  TempDir tmp("cache");
  lab::DistanceCache cache(tmp.str());

  CostMatrixResult payload;
  payload.n_source = 2;
  payload.n_target = 3;
  payload.C.resize(2, 3);
  payload.C << 0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0;
  payload.covectors.assign(6, Vec::Zero(3));
  payload.covectors[4] << 1.0, -2.0, 0.5;
  payload.flags.assign(6, 1);

  int computes = 0;
  auto compute = [&]() {
    ++computes;
    return payload;
  };

  const auto first = cache.get_or_compute(42, compute);
  CHECK_FALSE(first.hit);
  CHECK(computes == 1);

  const auto second = cache.get_or_compute(42, compute);
  CHECK(second.hit);
  CHECK(computes == 1);
  // bit-identical payload
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 3; ++b) {
      CHECK(std::memcmp(&second.result.C(a, b), &payload.C(a, b), sizeof(double)) == 0);
    }
  }
  CHECK((second.result.covectors[4] - payload.covectors[4]).norm() == 0.0);
  CHECK(second.result.flags == payload.flags);

  // truncate the cache file: recompute with a warning flag
  std::string file;
  for (const auto& entry : fs::directory_iterator(tmp.str())) {
    if (entry.path().extension() == ".srotcb") file = entry.path().string();
  }
  REQUIRE_FALSE(file.empty());
  fs::resize_file(file, 10);
  const auto third = cache.get_or_compute(42, compute);
  CHECK_FALSE(third.hit);
  CHECK(third.corrupt_recomputed);
  CHECK(computes == 2);

  // different keys do not collide
  const auto other = cache.get_or_compute(43, compute);
  CHECK_FALSE(other.hit);
  CHECK(computes == 3);
}

TEST_CASE("cost matrix keys track every solver option") {
  Mat X = Mat::Zero(2, 3), Y = Mat::Ones(2, 3);
  CostMatrixOptions base;
  const std::uint64_t k0 = lab::cost_matrix_key("heisenberg", X, Y, base);
  CHECK(k0 == lab::cost_matrix_key("heisenberg", X, Y, base));

  CostMatrixOptions changed = base;
  changed.solver.shoot_steps += 1;
  CHECK(k0 != lab::cost_matrix_key("heisenberg", X, Y, changed));
  changed = base;
  changed.solver.endpoint_tol *= 2.0;
  CHECK(k0 != lab::cost_matrix_key("heisenberg", X, Y, changed));
  changed = base;
  changed.solver.radial_scales.push_back(32.0);
  CHECK(k0 != lab::cost_matrix_key("heisenberg", X, Y, changed));
  CHECK(k0 != lab::cost_matrix_key("martinet", X, Y, base));
  Mat X2 = X;
  X2(0, 0) += 1e-9;
  CHECK(k0 != lab::cost_matrix_key("heisenberg", X2, Y, base));
}

TEST_CASE("minimal scenario run") {
  TempDir tmp("scenario");
  const std::string scenario = tmp.str("scenario.json");
  lab::write_text_file(scenario, R"({
    "frame": "heisenberg",
    "seed": 5,
    "experiments": [
      {"type": "distance", "x": [0,0,0], "y": [1,1,0.5],
       "expect_value": 1.4142135623730951, "tol": 1e-3}
    ]
  })");
  const std::string out = tmp.str("out");
  lab::RunOverrides overrides;
  overrides.cache_dir = tmp.str("cache");
  const lab::RunOutcome outcome = lab::run_scenario_file(scenario, out, overrides);
  CHECK(outcome.exit_code == 0);
  CHECK(outcome.failed_checks.empty());
  CHECK(fs::exists(outcome.manifest_path));
  bool found = false;
  for (const auto& artifact : outcome.artifacts) {
    if (artifact.find("distance.json") != std::string::npos) {
      found = true;
      const std::string body = slurp(artifact);
      CHECK(body.find("\"converged\": true") != std::string::npos);
    }
  }
  CHECK(found);
}

TEST_CASE("failed expectation sets exit code 1") {
  TempDir tmp("badcheck");
  const std::string scenario = tmp.str("scenario.json");
  lab::write_text_file(scenario, R"({
    "frame": "heisenberg",
    "experiments": [
      {"type": "distance", "x": [0,0,0], "y": [1,1,0.5],
       "expect_value": 3.0, "tol": 1e-3}
    ]
  })");
  lab::RunOverrides overrides;
  overrides.cache_dir = tmp.str("cache");
  const lab::RunOutcome outcome =
      lab::run_scenario_file(scenario, tmp.str("out"), overrides);
  CHECK(outcome.exit_code == 1);
  CHECK(outcome.failed_checks.size() == 1);
}

TEST_CASE("missing measure file aborts before any artifact") {
  TempDir tmp("missing");
  const std::string scenario = tmp.str("scenario.json");
  lab::write_text_file(scenario, R"({
    "frame": "heisenberg",
    "measures": {"mu": {"file": "does_not_exist.csv"}},
    "experiments": [{"type": "distmatrix", "measure": "mu"}]
  })");
  const std::string out = tmp.str("out");
  lab::RunOverrides overrides;
  overrides.cache_dir = tmp.str("cache");
  CHECK_THROWS_AS(lab::run_scenario_file(scenario, out, overrides), ConfigError);
  CHECK_FALSE(fs::exists(fs::path(out) / "manifest.json"));
}

TEST_CASE("unknown experiment type is a config error") {
  TempDir tmp("unknown");
  const std::string scenario = tmp.str("scenario.json");
  lab::write_text_file(scenario, R"({
    "frame": "heisenberg",
    "experiments": [{"type": "frobnicate"}]
  })");
  CHECK_THROWS_AS(lab::run_scenario_file(scenario, tmp.str("out")), ConfigError);
}

TEST_CASE("deterministic reruns produce identical artifacts") {
  TempDir tmp("determinism");
  const std::string scenario = tmp.str("scenario.json");
  lab::write_text_file(scenario, R"({
    "frame": "heisenberg",
    "seed": 77,
    "solver": {"shoot_steps": 120, "verify_steps": 240},
    "measures": {
      "mu": {"generator": "uniform_box", "count": 6,
              "low": [-0.5,-0.5,-0.2], "high": [0.5,0.5,0.2], "seed": 1},
      "nu": {"generator": "shift_of", "base": "mu", "offset": [1,0,0],
              "jitter": 0.02, "seed": 2}
    },
    "experiments": [
      {"type": "ot", "mu": "mu", "nu": "nu",
       "expect": {"max_gap_rel": 1e-9, "max_violation": 1e-9}},
      {"type": "geodesic", "x0": [0,0,0], "p0": [0.3,0.4,0.2], "steps": 200}
    ]
  })");

  lab::RunOverrides overrides;
  overrides.cache_dir = tmp.str("cache");
  const lab::RunOutcome first =
      lab::run_scenario_file(scenario, tmp.str("out1"), overrides);
  const lab::RunOutcome second =
      lab::run_scenario_file(scenario, tmp.str("out2"), overrides);
  CHECK(first.exit_code == 0);
  CHECK(second.exit_code == 0);

  REQUIRE(first.artifacts.size() == second.artifacts.size());
  for (std::size_t i = 0; i < first.artifacts.size(); ++i) {
    if (first.artifacts[i].find("manifest") != std::string::npos) continue;
    CHECK(slurp(first.artifacts[i]) == slurp(second.artifacts[i]));
  }
}

TEST_CASE("extremal csv layout") {
  TempDir tmp("extremal");
  const FramePtr heis = catalog("heisenberg");
  Vec p0(3);
  p0 << 1.0, 0.5, 0.0;
  const NormalExtremal ext = flow_extremal(heis, Vec::Zero(3), p0, 50);
  const std::string path = tmp.str("geodesic.csv");
  lab::write_extremal_csv(path, ext);
  const lab::CsvTable table = lab::read_csv(path);
  REQUIRE(table.header.size() == 1 + 3 + 3 + 2 + 1);
  CHECK(table.header.front() == "t");
  CHECK(table.header.back() == "H");
  CHECK(table.rows.rows() == 51);
  // H column constant along the extremal
  const int hcol = static_cast<int>(table.header.size()) - 1;
  for (int r = 0; r < table.rows.rows(); ++r) {
    CHECK(table.rows(r, hcol) ==
          doctest::Approx(table.rows(0, hcol)).epsilon(1e-9));
  }
}
