#include "srotlab/lab/scenario.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <random>
#include <sstream>

#include "srotlab/errors.hpp"
#include "srotlab/kantorovich.hpp"
#include "srotlab/lab/cache.hpp"
#include "srotlab/lab/csv.hpp"
#include "srotlab/regularity.hpp"
#include "srotlab/singular.hpp"

namespace srotlab::lab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("scenario parse error in " + path + ": " + e.what());
  }
  return j;
}

Vec vec_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    v(static_cast<int>(k)) = j[k].get<double>();
  }
  return v;
}

DistanceOptions solver_from_json(const json& root) {
  DistanceOptions d;
  if (!root.contains("solver")) return d;
  const json& s = root["solver"];
  if (s.contains("shoot_steps")) d.shoot_steps = s["shoot_steps"].get<int>();
  if (s.contains("verify_steps")) d.verify_steps = s["verify_steps"].get<int>();
  if (s.contains("endpoint_tol")) d.endpoint_tol = s["endpoint_tol"].get<double>();
  if (s.contains("max_iters")) d.max_iters = s["max_iters"].get<int>();
  if (s.contains("radius_floor")) d.radius_floor = s["radius_floor"].get<double>();
  if (s.contains("radial_scales")) {
    d.radial_scales = s["radial_scales"].get<std::vector<double>>();
  }
  if (s.contains("sep_tol")) d.sep_tol = s["sep_tol"].get<double>();
  if (d.endpoint_tol <= 0.0 || d.sep_tol <= 0.0) {
    throw ConfigError("solver tolerances must be positive");
  }
  return d;
}

struct NamedMeasures {
  std::map<std::string, DiscreteMeasure> measures;
  std::map<std::string, GridSpec> grids;  // only for grid-generated measures
};

std::uint64_t mix_seed(std::int64_t scenario_seed, const std::string& name,
                       std::int64_t local_seed) {
  ContentHash h;
  h.add(scenario_seed);
  h.add(name);
  h.add(local_seed);
  return h.value();
}

NamedMeasures build_measures(const json& root, std::int64_t seed,
                             const std::string& scenario_dir, int n) {
  NamedMeasures out;
  if (!root.contains("measures")) return out;
  const json& ms = root["measures"];
  if (!ms.is_object()) throw ConfigError("measures must be an object");

  // two passes so shift_of can reference any non-shift measure
  auto generate = [&](const std::string& name, const json& spec,
                      bool allow_shift) -> bool {
    if (spec.contains("file")) {
      std::string path = spec["file"].get<std::string>();
      if (!fs::path(path).is_absolute()) {
        path = (fs::path(scenario_dir) / path).string();
      }
      if (!fs::exists(path)) {
        throw ConfigError("measure file does not exist: " + path);
      }
      const MeasureCsv csv = read_measure_csv(path);
      DiscreteMeasure m;
      m.points = csv.points;
      m.weights = csv.weights;
      m.validate();
      out.measures[name] = std::move(m);
      return true;
    }
    const std::string gen = spec.value("generator", "");
    std::mt19937_64 rng(mix_seed(seed, name, spec.value("seed", 0)));
    if (gen == "uniform_box") {
      const int count = spec.at("count").get<int>();
      const Vec low = vec_from_json(spec.at("low"), "low");
      const Vec high = vec_from_json(spec.at("high"), "high");
      if (low.size() != n || high.size() != n) {
        throw ConfigError("measure " + name + ": box dimension mismatch");
      }
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Mat pts(count, n);
      for (int a = 0; a < count; ++a) {
        for (int k = 0; k < n; ++k) {
          pts(a, k) = low(k) + (high(k) - low(k)) * unif(rng);
        }
      }
      out.measures[name] = DiscreteMeasure::equal_weights(std::move(pts));
      return true;
    }
    if (gen == "gaussian_clip") {
      const int count = spec.at("count").get<int>();
      const Vec mean = vec_from_json(spec.at("mean"), "mean");
      const double sigma = spec.at("sigma").get<double>();
      const double clip = spec.value("clip", 3.0 * sigma);
      std::normal_distribution<double> gauss(0.0, sigma);
      Mat pts(count, n);
      for (int a = 0; a < count; ++a) {
        for (;;) {
          Vec z(n);
          for (int k = 0; k < n; ++k) z(k) = gauss(rng);
          if (z.norm() <= clip) {
            pts.row(a) = (mean + z).transpose();
            break;
          }
        }
      }
      out.measures[name] = DiscreteMeasure::equal_weights(std::move(pts));
      return true;
    }
    if (gen == "grid") {
      const Vec low = vec_from_json(spec.at("low"), "low");
      const double spacing = spec.at("spacing").get<double>();
      const auto dims = spec.at("dims").get<std::vector<int>>();
      if (static_cast<int>(dims.size()) != n) {
        throw ConfigError("measure " + name + ": grid dims mismatch");
      }
      GridSpec grid;
      grid.origin = low;
      grid.dims = dims;
      grid.spacing = spacing;
      const int total = grid.total();
      Mat pts(total, n);
      std::vector<int> idx(static_cast<std::size_t>(n), 0);
      for (int flat = 0; flat < total; ++flat) {
        int rem = flat;
        for (int k = n - 1; k >= 0; --k) {
          idx[static_cast<std::size_t>(k)] = rem % dims[static_cast<std::size_t>(k)];
          rem /= dims[static_cast<std::size_t>(k)];
        }
        for (int k = 0; k < n; ++k) {
          pts(flat, k) = low(k) + spacing * idx[static_cast<std::size_t>(k)];
        }
      }
      out.measures[name] = DiscreteMeasure::equal_weights(std::move(pts));
      out.grids[name] = std::move(grid);
      return true;
    }
    if (gen == "shift_of") {
      if (!allow_shift) return false;
      const std::string base = spec.at("base").get<std::string>();
      const auto it = out.measures.find(base);
      if (it == out.measures.end()) {
        throw ConfigError("measure " + name + ": unknown base " + base);
      }
      const Vec offset = vec_from_json(spec.at("offset"), "offset");
      const double jitter = spec.value("jitter", 0.0);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      DiscreteMeasure m = it->second;
      for (int a = 0; a < m.size(); ++a) {
        m.points.row(a) += offset.transpose();
        for (int k = 0; k < n; ++k) m.points(a, k) += jitter * unif(rng);
      }
      out.measures[name] = std::move(m);
      return true;
    }
    throw ConfigError("measure " + name + ": unknown generator '" + gen + "'");
  };

  std::vector<std::pair<std::string, json>> deferred;
  for (const auto& [name, spec] : ms.items()) {
    if (!generate(name, spec, /*allow_shift=*/false)) {
      deferred.emplace_back(name, spec);
    }
  }
  for (const auto& [name, spec] : deferred) {
    generate(name, spec, /*allow_shift=*/true);
  }
  return out;
}

json distance_result_to_json(const DistanceResult& r) {
  json j;
  j["value"] = r.value;
  j["energy"] = r.energy;
  j["endpoint_error"] = r.endpoint_error;
  j["converged"] = r.converged;
  j["multiplicity"] = r.multiplicity;
  j["method"] = r.method == DistanceMethod::Shooting
                    ? "shooting"
                    : (r.method == DistanceMethod::Direct ? "direct" : "hybrid");
  j["gn_starts"] = r.gn_starts;
  json covs = json::array();
  for (const Vec& p : r.covectors) {
    covs.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  }
  j["covectors"] = covs;
  return j;
}

// The riemannian metric on the chart complement is taken to be euclidean;
// recorded in every report per the open-question note in the frames module.
void stamp_conventions(json& j) {
  j["conventions"] = {{"chart", "single global chart R^n"},
                      {"metric_off_distribution", "euclidean"},
                      {"horizon", "[0,1]"}};
}

struct ExperimentContext {
  FramePtr frame;
  std::string frame_name;
  DistanceOptions solver;
  NamedMeasures measures;
  std::string out_dir;
  DistanceCache* cache = nullptr;
  int threads = 0;
  std::int64_t seed = 0;
  std::vector<std::string>* artifacts = nullptr;
  std::vector<std::string>* failed = nullptr;
  json* manifest_experiments = nullptr;
};

std::string artifact_path(const ExperimentContext& ctx, int index,
                          const std::string& suffix) {
  std::ostringstream name;
  name << "exp" << (index < 10 ? "0" : "") << index << "_" << suffix;
  return (fs::path(ctx.out_dir) / name.str()).string();
}

void emit(const ExperimentContext& ctx, const std::string& path,
          const std::string& content) {
  write_text_file(path, content);
  ctx.artifacts->push_back(path);
}

void check(const ExperimentContext& ctx, int index, bool ok,
           const std::string& what) {
  if (!ok) {
    ctx.failed->push_back("exp" + std::to_string(index) + ": " + what);
  }
}

const DiscreteMeasure& need_measure(const ExperimentContext& ctx,
                                    const json& spec, const char* key) {
  const std::string name = spec.at(key).get<std::string>();
  const auto it = ctx.measures.measures.find(name);
  if (it == ctx.measures.measures.end()) {
    throw ConfigError(std::string("unknown measure '") + name + "'");
  }
  return it->second;
}

// --- experiment handlers ---------------------------------------------------

void run_distance_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const Vec x = vec_from_json(spec.at("x"), "x");
  const Vec y = vec_from_json(spec.at("y"), "y");
  const DistanceResult res = distance(ctx.frame, x, y, ctx.solver);
  emit(ctx, artifact_path(ctx, index, "distance.json"),
       distance_report_json(ctx.frame_name, x, y, res));
  if (spec.contains("expect_value")) {
    const double expect = spec["expect_value"].get<double>();
    const double tol = spec.value("tol", 1e-6);
    check(ctx, index, res.converged && std::abs(res.value - expect) <= tol,
          "distance to " + std::to_string(expect) + " within " +
              std::to_string(tol));
  }
  if (spec.value("expect_multiplicity_ge", 0) > 1) {
    const MultiGeodesicReport probe = multi_geodesic_probe(ctx.frame, x, y, ctx.solver);
    check(ctx, index,
          probe.multiplicity >= spec["expect_multiplicity_ge"].get<int>(),
          "minimizer multiplicity");
  }
}

void run_geodesic_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const Vec x0 = vec_from_json(spec.at("x0"), "x0");
  const Vec p0 = vec_from_json(spec.at("p0"), "p0");
  const int steps = spec.value("steps", kDefaultFlowSteps);
  const NormalExtremal ext = flow_extremal(ctx.frame, x0, p0, steps);
  const std::string path = artifact_path(ctx, index, "geodesic.csv");
  write_extremal_csv(path, ext);
  ctx.artifacts->push_back(path);
}

void run_distmatrix_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const DiscreteMeasure& m = need_measure(ctx, spec, "measure");
  CostMatrixOptions copts;
  copts.solver = ctx.solver;
  copts.threads = ctx.threads;
  copts.symmetric = true;
  const std::uint64_t key =
      cost_matrix_key(ctx.frame_name, m.points, m.points, copts);
  const auto outcome = ctx.cache->get_or_compute(key, [&]() {
    return cost_matrix(ctx.frame, m.points, m.points, copts);
  });
  // distances, not squared costs, in the CSV artifact
  Mat D = outcome.result.C.array().max(0.0).sqrt();
  std::vector<std::string> header;
  for (int c = 0; c < D.cols(); ++c) header.push_back("d" + std::to_string(c));
  const std::string path = artifact_path(ctx, index, "distmatrix.csv");
  write_csv(path, header, D);
  ctx.artifacts->push_back(path);
  (*ctx.manifest_experiments)[static_cast<std::size_t>(index)]["cache_hit"] =
      outcome.hit;
  (*ctx.manifest_experiments)[static_cast<std::size_t>(index)]["cache_key"] =
      ContentHash().add(static_cast<std::int64_t>(key)).hex();
}

void run_ot_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const DiscreteMeasure& mu = need_measure(ctx, spec, "mu");
  const DiscreteMeasure& nu = need_measure(ctx, spec, "nu");
  CostMatrixOptions copts;
  copts.solver = ctx.solver;
  copts.threads = ctx.threads;
  const CostMatrixResult cm = cost_matrix(ctx.frame, mu.points, nu.points, copts);
  const bool sinkhorn = spec.value("sinkhorn", false);
  const LpResult lp = sinkhorn ? solve_sinkhorn(mu, nu, cm.C)
                               : solve_kantorovich(mu, nu, cm.C);

  Mat plan_rows(static_cast<int>(lp.plan.entries.size()), 3);
  for (std::size_t e = 0; e < lp.plan.entries.size(); ++e) {
    plan_rows(static_cast<int>(e), 0) = lp.plan.entries[e].a;
    plan_rows(static_cast<int>(e), 1) = lp.plan.entries[e].b;
    plan_rows(static_cast<int>(e), 2) = lp.plan.entries[e].w;
  }
  const std::string plan_path = artifact_path(ctx, index, "ot_plan.csv");
  write_csv(plan_path, {"a", "b", "w"}, plan_rows);
  ctx.artifacts->push_back(plan_path);

  const std::string phi_path = artifact_path(ctx, index, "ot_phi.csv");
  write_csv(phi_path, {"phi"}, lp.duals.phi);
  ctx.artifacts->push_back(phi_path);
  const std::string phic_path = artifact_path(ctx, index, "ot_phic.csv");
  write_csv(phic_path, {"phic"}, lp.duals.phic);
  ctx.artifacts->push_back(phic_path);

  const SuperdiffReport sd = superdifferential_check(lp.plan, lp.duals, cm.C);
  json rep;
  rep["frame"] = ctx.frame_name;
  rep["cost"] = lp.plan.cost;
  rep["w2"] = std::sqrt(std::max(lp.plan.cost, 0.0));
  rep["gap"] = lp.duals.gap;
  rep["max_violation"] = sd.max_violation;
  rep["pivots"] = lp.pivots;
  rep["support_size"] = lp.plan.entries.size();
  rep["mode"] = sinkhorn ? "sinkhorn" : "exact";
  stamp_conventions(rep);
  emit(ctx, artifact_path(ctx, index, "ot_report.json"), rep.dump(2) + "\n");

  if (!sinkhorn && spec.contains("expect")) {
    const json& ex = spec["expect"];
    if (ex.contains("max_gap_rel")) {
      check(ctx, index,
            std::abs(lp.duals.gap) <=
                ex["max_gap_rel"].get<double>() * (1.0 + std::abs(lp.plan.cost)),
            "duality gap");
    }
    if (ex.contains("max_violation")) {
      check(ctx, index, sd.max_violation <= ex["max_violation"].get<double>(),
            "superdifferential violation");
    }
  }
}

DensityFn box_density(const Vec& low, const Vec& high, double pad) {
  double volume = 1.0;
  for (int k = 0; k < low.size(); ++k) volume *= (high(k) - low(k));
  return [low, high, pad, volume](const Vec& z) -> double {
    for (int k = 0; k < low.size(); ++k) {
      if (z(k) < low(k) - pad || z(k) > high(k) + pad) return 0.0;
    }
    return 1.0 / volume;
  };
}

void run_transport_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const DiscreteMeasure& mu = need_measure(ctx, spec, "mu");
  const DiscreteMeasure& nu = need_measure(ctx, spec, "nu");
  const std::vector<double> t_list =
      spec.value("t_list", std::vector<double>{0.25, 0.5, 0.75});

  CostMatrixOptions copts;
  copts.solver = ctx.solver;
  copts.threads = ctx.threads;
  const CostMatrixResult cm = cost_matrix(ctx.frame, mu.points, nu.points, copts);
  const LpResult lp = solve_kantorovich(mu, nu, cm.C);

  BuildMapOptions bopts;
  bopts.solver = ctx.solver;
  TransportMapEstimate map_est =
      build_map(lp.plan, lp.duals, mu, nu, ctx.frame, &cm, bopts);
  const int k_reg = spec.value("regression_k", ctx.frame->ambient_dim() + 5);
  bool regression_ok = true;
  try {
    attach_regressed_gradients(map_est, lp.duals.phi, k_reg);
  } catch (const DegenerateNeighborhoodError&) {
    regression_ok = false;
  }

  const int n = ctx.frame->ambient_dim();
  // map CSV: source, destination, covector, label
  Mat map_rows(static_cast<int>(map_est.atoms.size()), 3 * n + 1);
  for (std::size_t i = 0; i < map_est.atoms.size(); ++i) {
    const MapAtom& atom = map_est.atoms[i];
    map_rows.row(static_cast<int>(i)).segment(0, n) = atom.source;
    map_rows.row(static_cast<int>(i)).segment(n, n) = atom.destination;
    map_rows.row(static_cast<int>(i)).segment(2 * n, n) = atom.covector;
    map_rows(static_cast<int>(i), 3 * n) =
        atom.label == AtomLabel::Moving ? 1.0 : 0.0;
  }
  std::vector<std::string> header;
  for (int k = 0; k < n; ++k) header.push_back("x" + std::to_string(k + 1));
  for (int k = 0; k < n; ++k) header.push_back("T" + std::to_string(k + 1));
  for (int k = 0; k < n; ++k) header.push_back("p" + std::to_string(k + 1));
  header.push_back("moving");
  const std::string map_path = artifact_path(ctx, index, "transport_map.csv");
  write_csv(map_path, header, map_rows);
  ctx.artifacts->push_back(map_path);

  const InterpolationResult interp = interpolate(map_est, t_list);
  for (std::size_t k = 0; k < t_list.size(); ++k) {
    std::ostringstream suffix;
    suffix << "interp_t" << t_list[k] << ".csv";
    const std::string path = artifact_path(ctx, index, suffix.str());
    write_measure_csv(path, interp.clouds[k], interp.weights);
    ctx.artifacts->push_back(path);
  }

  json rep;
  rep["frame"] = ctx.frame_name;
  rep["atoms"] = map_est.atoms.size();
  rep["excluded_rows"] = map_est.excluded_rows;
  int moving = 0;
  for (const auto& atom : map_est.atoms) {
    if (atom.label == AtomLabel::Moving) ++moving;
  }
  rep["moving"] = moving;
  rep["static"] = static_cast<int>(map_est.atoms.size()) - moving;
  rep["single_destination_fraction"] =
      mu.size() > 0
          ? 1.0 - static_cast<double>(map_est.excluded_rows.size()) / mu.size()
          : 1.0;

  // exponential consistency on moving rows
  int exp_checked = 0, exp_ok = 0;
  for (const auto& atom : map_est.atoms) {
    if (atom.label != AtomLabel::Moving) continue;
    ++exp_checked;
    const Vec reached = exp_map(ctx.frame, atom.source, atom.covector,
                                ctx.solver.verify_steps);
    if ((reached - atom.destination).norm() <= 1e-6) ++exp_ok;
  }
  rep["exp_consistency"] = {
      {"checked", exp_checked},
      {"ok", exp_ok},
      {"fraction", exp_checked > 0 ? static_cast<double>(exp_ok) / exp_checked : 1.0},
      {"tol", 1e-6}};

  // regressed-gradient agreement: cos(-g/2, p) on interior moving atoms
  double cos_fraction = 1.0;
  int interior_checked = 0, cos_ok = 0;
  if (regression_ok) {
    Vec lo = mu.points.colwise().minCoeff();
    Vec hi = mu.points.colwise().maxCoeff();
    for (const auto& atom : map_est.atoms) {
      if (atom.label != AtomLabel::Moving || atom.dphi_regressed.size() != n) {
        continue;
      }
      bool interior = true;
      const double margin = 0.15 * (hi - lo).norm() / std::sqrt(double(n));
      for (int k = 0; k < n; ++k) {
        interior = interior && atom.source(k) >= lo(k) + margin &&
                   atom.source(k) <= hi(k) - margin;
      }
      if (!interior) continue;
      ++interior_checked;
      const Vec minus_half_g = -0.5 * atom.dphi_regressed;
      const double denom = minus_half_g.norm() * atom.covector.norm();
      const double cosine =
          denom > 0.0 ? minus_half_g.dot(atom.covector) / denom : 0.0;
      if (cosine >= 0.9) ++cos_ok;
    }
    cos_fraction = interior_checked > 0
                       ? static_cast<double>(cos_ok) / interior_checked
                       : 1.0;
  }
  rep["regression"] = {{"k", k_reg},
                       {"usable", regression_ok},
                       {"interior_checked", interior_checked},
                       {"cosine_ok_fraction", cos_fraction}};

  // split identity at an interior t
  const double split_t = spec.value("split_check_t", 0.5);
  double split_max_rel = 0.0;
  if (split_t > 0.0 && split_t < 1.0 && moving > 0) {
    const auto split = interpolation_split_check(map_est, split_t, ctx.solver);
    for (const auto& e : split) split_max_rel = std::max(split_max_rel, e.rel_error);
    rep["split_check"] = {{"t", split_t},
                          {"atoms", split.size()},
                          {"max_rel_error", split_max_rel}};
  }

  // injectivity / clustering diagnostics at each interior t
  json abs_list = json::array();
  for (std::size_t k = 0; k < t_list.size(); ++k) {
    if (t_list[k] <= 0.0 || t_list[k] >= 1.0) continue;
    const AbsContinuityReport probe = abs_continuity_probe(map_est, interp,
                                                           static_cast<int>(k));
    abs_list.push_back({{"t", probe.t},
                        {"injectivity_margin", probe.injectivity_margin},
                        {"max_cluster_mass", probe.max_cluster_mass},
                        {"r_cluster", probe.r_cluster}});
    check(ctx, index, probe.injectivity_margin > 0.0,
          "injectivity margin at t=" + std::to_string(probe.t));
  }
  rep["abs_continuity"] = abs_list;

  // geodesic property via fresh LP solves (optional; expensive)
  double geod_max_rel = 0.0;
  if (spec.value("geodesic_check", false)) {
    const GeodesicCheckReport gc = geodesic_check(mu, interp, nu, ctx.frame, copts);
    json entries = json::array();
    for (const auto& e : gc.entries) {
      geod_max_rel = std::max(geod_max_rel, e.rel_error);
      entries.push_back({{"t", e.t},
                         {"w_left", e.w_left},
                         {"w_right", e.w_right},
                         {"rel_error", e.rel_error}});
    }
    rep["geodesic_check"] = {{"w_total", gc.w_total}, {"entries", entries}};
  }

  // Jacobian residual when the source measure came from a grid
  if (spec.contains("jacobian")) {
    const json& jac = spec["jacobian"];
    const std::string grid_name = jac.at("grid").get<std::string>();
    const auto it = ctx.measures.grids.find(grid_name);
    if (it == ctx.measures.grids.end()) {
      throw ConfigError("jacobian check: measure '" + grid_name +
                        "' was not generated by a grid");
    }
    const GridSpec& grid = it->second;
    const double pad = 0.5 * grid.spacing;
    const Vec f_low = vec_from_json(jac.at("f_box").at("low"), "f low");
    const Vec f_high = vec_from_json(jac.at("f_box").at("high"), "f high");
    const Vec g_low = vec_from_json(jac.at("g_box").at("low"), "g low");
    const Vec g_high = vec_from_json(jac.at("g_box").at("high"), "g high");
    const JacobianResidualReport jr = jacobian_residual(
        map_est, grid, box_density(f_low, f_high, pad),
        box_density(g_low, g_high, pad));
    rep["jacobian"] = {{"evaluated", jr.evaluated},
                       {"skipped", jr.skipped},
                       {"median_residual", jr.median_residual},
                       {"mean_residual", jr.mean_residual},
                       {"max_residual", jr.max_residual},
                       {"min_abs_det", jr.min_abs_det},
                       {"all_nondegenerate", jr.all_nondegenerate},
                       {"static_atoms", jr.static_atoms},
                       {"max_static_density_residual",
                        jr.max_static_density_residual}};
    if (spec.contains("expect") && spec["expect"].contains("jacobian_median_max")) {
      check(ctx, index,
            jr.median_residual <=
                spec["expect"]["jacobian_median_max"].get<double>() &&
                jr.all_nondegenerate,
            "jacobian residual");
    }
  }

  stamp_conventions(rep);
  emit(ctx, artifact_path(ctx, index, "transport_report.json"), rep.dump(2) + "\n");

  if (spec.contains("expect")) {
    const json& ex = spec["expect"];
    if (ex.contains("min_single_dest_fraction")) {
      check(ctx, index,
            rep["single_destination_fraction"].get<double>() >=
                ex["min_single_dest_fraction"].get<double>(),
            "single destination fraction");
    }
    if (ex.contains("exp_consistency_min")) {
      check(ctx, index,
            rep["exp_consistency"]["fraction"].get<double>() >=
                ex["exp_consistency_min"].get<double>(),
            "exponential consistency");
    }
    if (ex.contains("cosine_min_fraction")) {
      check(ctx, index, cos_fraction >= ex["cosine_min_fraction"].get<double>(),
            "regressed gradient direction");
    }
    if (ex.contains("split_max_rel")) {
      check(ctx, index, split_max_rel <= ex["split_max_rel"].get<double>(),
            "geodesic split identity");
    }
    if (ex.contains("geodesic_max_rel") && spec.value("geodesic_check", false)) {
      check(ctx, index, geod_max_rel <= ex["geodesic_max_rel"].get<double>(),
            "wasserstein geodesic property");
    }
  }
}

void run_singular_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const Vec x0 = vec_from_json(spec.at("x0"), "x0");
  HorizontalPath path;
  const int steps = spec.value("steps", 200);
  if (spec.contains("control")) {
    const Vec u = vec_from_json(spec["control"], "control");
    path = constant_control_path(ctx.frame, x0, u, steps);
  } else if (spec.contains("path_csv")) {
    const CsvTable table = read_csv(spec["path_csv"].get<std::string>());
    const int m = ctx.frame->rank();
    if (table.rows.cols() != m + 1) {
      throw ConfigError("singular path CSV needs columns t, u1..um");
    }
    path = integrate_controls(ctx.frame, x0, table.rows.col(0),
                              table.rows.rightCols(m));
  } else {
    throw ConfigError("singular experiment needs 'control' or 'path_csv'");
  }

  const int rank = endpoint_rank(*ctx.frame, path);
  const auto cert = abnormal_certificate(*ctx.frame, path);
  const bool is_singular = rank < ctx.frame->ambient_dim();
  bool goh = false;
  double residual = 0.0, goh_residual = 0.0;
  if (cert.has_value()) {
    residual = cert->residual;
    goh_residual = cert->goh_residual;
    goh = goh_test(*ctx.frame, path, *cert);
  }
  emit(ctx, artifact_path(ctx, index, "singular.json"),
       singular_report_json(ctx.frame_name, rank, is_singular, goh, residual,
                            goh_residual, cert.has_value()));
  if (spec.contains("expect")) {
    const json& ex = spec["expect"];
    if (ex.contains("singular")) {
      check(ctx, index, is_singular == ex["singular"].get<bool>(), "singular flag");
    }
    if (ex.contains("goh")) {
      check(ctx, index, goh == ex["goh"].get<bool>(), "goh flag");
    }
  }
}

void run_regularity_experiment(ExperimentContext& ctx, int index, const json& spec) {
  const std::string kind = spec.at("kind").get<std::string>();
  ProbeResult probe;
  std::string region_desc;
  if (kind == "semiconcavity") {
    PairRegion region;
    region.x_center = vec_from_json(spec.at("x_center"), "x_center");
    region.y_center = vec_from_json(spec.at("y_center"), "y_center");
    region.box_halfwidth = spec.value("halfwidth", 0.4);
    region.d_min = spec.value("d_min", 0.3);
    region.d_max = spec.value("d_max", 1e30);
    SemiconcavityOptions opts;
    opts.solver = ctx.solver;
    opts.seed = mix_seed(ctx.seed, "semiconcavity", spec.value("seed", 0));
    probe = semiconcavity_probe(ctx.frame, region, spec.value("samples", 200), opts);
    region_desc = "pair box around base pair, d in [" +
                  std::to_string(region.d_min) + ", " +
                  std::to_string(region.d_max) + "]";
  } else if (kind == "lipschitz") {
    LipschitzOptions opts;
    opts.solver = ctx.solver;
    opts.scale = spec.value("scale", 1e-2);
    opts.seed = mix_seed(ctx.seed, "lipschitz", spec.value("seed", 0));
    probe = lipschitz_probe(ctx.frame, vec_from_json(spec.at("low"), "low"),
                            vec_from_json(spec.at("high"), "high"),
                            spec.value("samples", 200), opts);
    region_desc = "chart box";
  } else {
    throw ConfigError("unknown regularity kind: " + kind);
  }
  emit(ctx, artifact_path(ctx, index, "regularity.json"),
       regularity_report_json(ctx.frame_name, kind, probe.estimate, probe.samples,
                              probe.scale, region_desc));
  if (spec.contains("expect") && spec["expect"].contains("finite_below")) {
    check(ctx, index,
          std::isfinite(probe.estimate) &&
              probe.estimate < spec["expect"]["finite_below"].get<double>(),
          "probe finiteness");
  }
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

std::string distance_report_json(const std::string& frame_name, const Vec& x,
                                 const Vec& y, const DistanceResult& result) {
  json j = distance_result_to_json(result);
  j["frame"] = frame_name;
  j["x"] = std::vector<double>(x.data(), x.data() + x.size());
  j["y"] = std::vector<double>(y.data(), y.data() + y.size());
  stamp_conventions(j);
  return j.dump(2) + "\n";
}

std::string singular_report_json(const std::string& frame_name, int rank,
                                 bool is_singular, bool goh,
                                 double abnormal_residual, double goh_residual,
                                 bool has_certificate) {
  json j;
  j["frame"] = frame_name;
  j["rank"] = rank;
  j["singular"] = is_singular;
  j["goh"] = goh;
  j["has_certificate"] = has_certificate;
  j["residuals"] = {{"abnormal", abnormal_residual}, {"goh", goh_residual}};
  stamp_conventions(j);
  return j.dump(2) + "\n";
}

std::string regularity_report_json(const std::string& frame_name,
                                   const std::string& kind, double estimate,
                                   int samples, double scale,
                                   const std::string& region_desc) {
  json j;
  j["frame"] = frame_name;
  j["kind"] = kind;
  j["estimate"] = estimate;
  j["samples"] = samples;
  j["scale"] = scale;
  j["region"] = region_desc;
  stamp_conventions(j);
  return j.dump(2) + "\n";
}

void write_extremal_csv(const std::string& path, const NormalExtremal& extremal) {
  const int n = static_cast<int>(extremal.xs.cols());
  const int m = static_cast<int>(extremal.us.cols());
  const int nodes = extremal.nodes();
  Mat rows(nodes, 1 + 2 * n + m + 1);
  std::vector<std::string> header;
  header.push_back("t");
  for (int k = 0; k < n; ++k) header.push_back("x" + std::to_string(k + 1));
  for (int k = 0; k < n; ++k) header.push_back("p" + std::to_string(k + 1));
  for (int k = 0; k < m; ++k) header.push_back("u" + std::to_string(k + 1));
  header.push_back("H");
  for (int r = 0; r < nodes; ++r) {
    rows(r, 0) = extremal.ts(r);
    rows.row(r).segment(1, n) = extremal.xs.row(r);
    rows.row(r).segment(1 + n, n) = extremal.ps.row(r);
    rows.row(r).segment(1 + 2 * n, m) = extremal.us.row(r);
    rows(r, 1 + 2 * n + m) = extremal.hamiltonian_at(r);
  }
  write_csv(path, header, rows);
}

RunOutcome run_scenario_file(const std::string& scenario_path,
                             const std::string& out_dir,
                             const RunOverrides& overrides) {
  const auto t_start = std::chrono::steady_clock::now();
  const json root = load_json_file(scenario_path);

  RunOutcome outcome;

  const std::string frame_name = root.value("frame", "");
  if (frame_name.empty()) throw ConfigError("scenario: missing 'frame'");
  FramePtr frame = catalog(frame_name);

  std::int64_t seed = root.value("seed", 0);
  if (overrides.seed >= 0) seed = overrides.seed;
  int threads = root.value("threads", 0);
  if (overrides.threads >= 0) threads = overrides.threads;

  std::string cache_dir = overrides.cache_dir;
  if (cache_dir.empty()) cache_dir = root.value("cache_dir", "");

  if (!root.contains("experiments") || !root["experiments"].is_array()) {
    throw ConfigError("scenario: missing 'experiments' array");
  }

  // validate experiment types before producing any artifact
  for (const auto& spec : root["experiments"]) {
    const std::string type = spec.value("type", "");
    if (type != "distance" && type != "geodesic" && type != "distmatrix" &&
        type != "ot" && type != "transport" && type != "singular" &&
        type != "regularity") {
      throw ConfigError("scenario: unknown experiment type '" + type + "'");
    }
  }

  const std::string scenario_dir = fs::path(scenario_path).parent_path().string();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  ExperimentContext ctx;
  ctx.frame = frame;
  ctx.frame_name = frame_name;
  ctx.solver = solver_from_json(root);
  ctx.measures = build_measures(root, seed, scenario_dir, frame->ambient_dim());
  ctx.out_dir = out_dir;
  ctx.threads = threads;
  ctx.seed = seed;
  ctx.artifacts = &outcome.artifacts;
  ctx.failed = &outcome.failed_checks;

  DistanceCache cache(cache_dir);
  ctx.cache = &cache;

  json manifest;
  manifest["schema"] = "srotlab-manifest-v1";
  manifest["srotlab_version"] = kVersion;
  manifest["frame"] = frame_name;
  manifest["seed"] = seed;
  manifest["scenario"] = scenario_path;
  {
    std::ifstream in(scenario_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    manifest["inputs_hash"] = ContentHash().add(ss.str()).hex();
  }
  json experiments = json::array();
  for (std::size_t i = 0; i < root["experiments"].size(); ++i) {
    experiments.push_back(
        {{"index", i}, {"type", root["experiments"][i].value("type", "")}});
  }
  ctx.manifest_experiments = &experiments;

  for (std::size_t i = 0; i < root["experiments"].size(); ++i) {
    const json& spec = root["experiments"][i];
    const std::string type = spec["type"].get<std::string>();
    const int index = static_cast<int>(i);
    if (type == "distance") {
      run_distance_experiment(ctx, index, spec);
    } else if (type == "geodesic") {
      run_geodesic_experiment(ctx, index, spec);
    } else if (type == "distmatrix") {
      run_distmatrix_experiment(ctx, index, spec);
    } else if (type == "ot") {
      run_ot_experiment(ctx, index, spec);
    } else if (type == "transport") {
      run_transport_experiment(ctx, index, spec);
    } else if (type == "singular") {
      run_singular_experiment(ctx, index, spec);
    } else if (type == "regularity") {
      run_regularity_experiment(ctx, index, spec);
    }
  }

  const auto t_end = std::chrono::steady_clock::now();
  manifest["wall_time_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(t_end - t_start)
          .count();
  manifest["artifacts"] = outcome.artifacts;
  manifest["failed_checks"] = outcome.failed_checks;
  manifest["experiments"] = experiments;
  manifest["cache_dir"] = cache.dir();

  outcome.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_text_file(outcome.manifest_path, manifest.dump(2) + "\n");
  outcome.artifacts.push_back(outcome.manifest_path);

  outcome.exit_code = outcome.failed_checks.empty() ? 0 : 1;
  return outcome;
}

}  // namespace srotlab::lab
