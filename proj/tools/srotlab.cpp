// srotlab: sub-Riemannian optimal transport laboratory CLI.
//
// Exit codes: 0 ok, 1 check failure, 2 config/IO error, 3 solver failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "srotlab/errors.hpp"
#include "srotlab/kantorovich.hpp"
#include "srotlab/lab/cache.hpp"
#include "srotlab/lab/csv.hpp"
#include "srotlab/lab/scenario.hpp"
#include "srotlab/regularity.hpp"
#include "srotlab/singular.hpp"

namespace fs = std::filesystem;
using namespace srotlab;

namespace {

Vec parse_vec(const std::string& csv) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t next = csv.find(',', pos);
    const std::string field =
        csv.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!field.empty()) vals.push_back(std::stod(field));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  Vec v(static_cast<int>(vals.size()));
  for (std::size_t k = 0; k < vals.size(); ++k) v(static_cast<int>(k)) = vals[k];
  return v;
}

DiscreteMeasure load_measure(const std::string& path) {
  const lab::MeasureCsv csv = lab::read_measure_csv(path);
  DiscreteMeasure m;
  m.points = csv.points;
  m.weights = csv.weights;
  m.validate();
  return m;
}

void write_or_print(const std::string& out_dir, const std::string& name,
                    const std::string& content) {
  if (out_dir.empty()) {
    std::cout << content;
    return;
  }
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / name).string();
  lab::write_text_file(path, content);
  std::cout << path << "\n";
}

struct CommonArgs {
  std::string frame = "heisenberg";
  std::string out_dir;
  int threads = 0;
  std::int64_t seed = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srotlab: sub-Riemannian geometry and optimal transport lab"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--out", common.out_dir, "output directory (default: stdout)");
  auto* seed_opt = app.add_option("--seed", common.seed, "seed override");
  auto* threads_opt =
      app.add_option("--threads", common.threads, "worker threads (0 = hardware)");

  // geodesic
  auto* geodesic = app.add_subcommand("geodesic", "integrate a normal extremal");
  std::string g_x0, g_p0;
  int g_steps = kDefaultFlowSteps;
  geodesic->add_option("--frame", common.frame, "catalog frame");
  geodesic->add_option("--x0", g_x0, "start point, comma separated")->required();
  geodesic->add_option("--p0", g_p0, "initial covector")->required();
  geodesic->add_option("--steps", g_steps, "RK4 steps");

  // distance
  auto* dist = app.add_subcommand("distance", "sub-Riemannian distance");
  std::string d_x, d_y;
  dist->add_option("--frame", common.frame, "catalog frame");
  dist->add_option("--x", d_x, "source point")->required();
  dist->add_option("--y", d_y, "target point")->required();

  // distmatrix
  auto* dm = app.add_subcommand("distmatrix", "pairwise distance matrix");
  std::string dm_points, dm_cache;
  dm->add_option("--frame", common.frame, "catalog frame");
  dm->add_option("--points", dm_points, "point cloud CSV (coords..., weight)")
      ->required();
  dm->add_option("--cache-dir", dm_cache, "cache directory override");

  // singular
  auto* sing = app.add_subcommand("singular", "singular-path classification");
  std::string s_x0, s_control, s_path_csv;
  int s_steps = 200;
  sing->add_option("--frame", common.frame, "catalog frame");
  sing->add_option("--x0", s_x0, "start point")->required();
  sing->add_option("--control", s_control, "constant control vector");
  sing->add_option("--path", s_path_csv, "path CSV with columns t,u1..um");
  sing->add_option("--steps", s_steps, "integration steps for --control");

  // regularity
  auto* reg = app.add_subcommand("regularity", "semiconcavity / Lipschitz probes");
  std::string r_kind = "lipschitz", r_xc, r_yc, r_low, r_high;
  int r_samples = 200;
  double r_halfwidth = 0.4, r_dmin = 0.3, r_dmax = 1e30, r_scale = 1e-2;
  reg->add_option("--frame", common.frame, "catalog frame");
  reg->add_option("--kind", r_kind, "semiconcavity | lipschitz");
  reg->add_option("--x-center", r_xc, "semiconcavity: base pair first point");
  reg->add_option("--y-center", r_yc, "semiconcavity: base pair second point");
  reg->add_option("--halfwidth", r_halfwidth, "jitter box halfwidth");
  reg->add_option("--d-min", r_dmin, "lower distance band");
  reg->add_option("--d-max", r_dmax, "upper distance band");
  reg->add_option("--low", r_low, "lipschitz: box lower corner");
  reg->add_option("--high", r_high, "lipschitz: box upper corner");
  reg->add_option("--scale", r_scale, "lipschitz perturbation scale");
  reg->add_option("--samples", r_samples, "sample count");

  // ot
  auto* ot = app.add_subcommand("ot", "discrete optimal transport");
  std::string ot_mu, ot_nu;
  bool ot_sinkhorn = false;
  ot->add_option("--frame", common.frame, "catalog frame");
  ot->add_option("--mu", ot_mu, "source measure CSV")->required();
  ot->add_option("--nu", ot_nu, "target measure CSV")->required();
  ot->add_flag("--sinkhorn", ot_sinkhorn, "entropic mode (approximate)");

  // transport
  auto* tr = app.add_subcommand("transport", "optimal map + displacement interpolation");
  std::string tr_mu, tr_nu, tr_ts = "0.25,0.5,0.75";
  tr->add_option("--frame", common.frame, "catalog frame");
  tr->add_option("--mu", tr_mu, "source measure CSV")->required();
  tr->add_option("--nu", tr_nu, "target measure CSV")->required();
  tr->add_option("--t", tr_ts, "interpolation times, comma separated");

  // run
  auto* run = app.add_subcommand("run", "execute a scenario file");
  std::string run_config, run_cache;
  run->add_option("--config", run_config, "scenario JSON")->required();
  run->add_option("--cache-dir", run_cache, "cache directory override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (geodesic->parsed()) {
      const FramePtr frame = catalog(common.frame);
      const NormalExtremal ext =
          flow_extremal(frame, parse_vec(g_x0), parse_vec(g_p0), g_steps);
      const std::string dir = common.out_dir.empty() ? "." : common.out_dir;
      fs::create_directories(dir);
      const std::string path = (fs::path(dir) / "geodesic.csv").string();
      lab::write_extremal_csv(path, ext);
      std::cout << path << "\n";
      return 0;
    }
    if (dist->parsed()) {
      const FramePtr frame = catalog(common.frame);
      const Vec x = parse_vec(d_x), y = parse_vec(d_y);
      const DistanceResult res = distance(frame, x, y);
      write_or_print(common.out_dir, "distance.json",
                     lab::distance_report_json(common.frame, x, y, res));
      return res.converged ? 0 : 3;
    }
    if (dm->parsed()) {
      const FramePtr frame = catalog(common.frame);
      const DiscreteMeasure m = load_measure(dm_points);
      CostMatrixOptions copts;
      copts.threads = common.threads;
      copts.symmetric = true;
      lab::DistanceCache cache(dm_cache);
      const std::uint64_t key =
          lab::cost_matrix_key(common.frame, m.points, m.points, copts);
      const auto outcome = cache.get_or_compute(key, [&]() {
        return cost_matrix(frame, m.points, m.points, copts);
      });
      const Mat D = outcome.result.C.array().max(0.0).sqrt();
      std::vector<std::string> header;
      for (int c = 0; c < D.cols(); ++c) header.push_back("d" + std::to_string(c));
      const std::string dir = common.out_dir.empty() ? "." : common.out_dir;
      fs::create_directories(dir);
      const std::string path = (fs::path(dir) / "distmatrix.csv").string();
      lab::write_csv(path, header, D);
      std::cout << path << (outcome.hit ? " (cache hit)" : "") << "\n";
      return 0;
    }
    if (sing->parsed()) {
      const FramePtr frame = catalog(common.frame);
      const Vec x0 = parse_vec(s_x0);
      HorizontalPath path;
      if (!s_control.empty()) {
        path = constant_control_path(frame, x0, parse_vec(s_control), s_steps);
      } else if (!s_path_csv.empty()) {
        const lab::CsvTable table = lab::read_csv(s_path_csv);
        if (table.rows.cols() != frame->rank() + 1) {
          throw ConfigError("path CSV needs columns t, u1..um");
        }
        path = integrate_controls(frame, x0, table.rows.col(0),
                                  table.rows.rightCols(frame->rank()));
      } else {
        throw ConfigError("singular: provide --control or --path");
      }
      const int rank = endpoint_rank(*frame, path);
      const auto cert = abnormal_certificate(*frame, path);
      const bool is_singular = rank < frame->ambient_dim();
      const bool goh = cert.has_value() && goh_test(*frame, path, *cert);
      write_or_print(common.out_dir, "singular.json",
                     lab::singular_report_json(
                         common.frame, rank, is_singular, goh,
                         cert ? cert->residual : 0.0,
                         cert ? cert->goh_residual : 0.0, cert.has_value()));
      return 0;
    }
    if (reg->parsed()) {
      const FramePtr frame = catalog(common.frame);
      ProbeResult probe;
      std::string desc;
      if (r_kind == "semiconcavity") {
        PairRegion region;
        region.x_center = parse_vec(r_xc);
        region.y_center = parse_vec(r_yc);
        region.box_halfwidth = r_halfwidth;
        region.d_min = r_dmin;
        region.d_max = r_dmax;
        SemiconcavityOptions opts;
        opts.seed = static_cast<std::uint64_t>(common.seed) + 1;
        probe = semiconcavity_probe(frame, region, r_samples, opts);
        desc = "pair box";
      } else if (r_kind == "lipschitz") {
        LipschitzOptions opts;
        opts.scale = r_scale;
        opts.seed = static_cast<std::uint64_t>(common.seed) + 2;
        probe = lipschitz_probe(frame, parse_vec(r_low), parse_vec(r_high),
                                r_samples, opts);
        desc = "chart box";
      } else {
        throw ConfigError("unknown regularity kind: " + r_kind);
      }
      write_or_print(common.out_dir, "regularity.json",
                     lab::regularity_report_json(common.frame, r_kind,
                                                 probe.estimate, probe.samples,
                                                 probe.scale, desc));
      return 0;
    }
    if (ot->parsed() || tr->parsed()) {
      // both run through the scenario machinery for identical artifacts
      const std::string dir = common.out_dir.empty() ? "srotlab_out" : common.out_dir;
      fs::create_directories(dir);
      const std::string scenario_path = (fs::path(dir) / "_cli_scenario.json").string();
      std::string t_json = "[";
      if (tr->parsed()) {
        const Vec ts = parse_vec(tr_ts);
        for (int k = 0; k < ts.size(); ++k) {
          t_json += (k ? "," : "") + lab::format_double(ts(k));
        }
      }
      t_json += "]";
      std::string experiments;
      if (ot->parsed()) {
        experiments = std::string("{\"type\":\"ot\",\"mu\":\"mu\",\"nu\":\"nu\"") +
                      (ot_sinkhorn ? ",\"sinkhorn\":true" : "") + "}";
      } else {
        experiments =
            "{\"type\":\"transport\",\"mu\":\"mu\",\"nu\":\"nu\",\"t_list\":" +
            t_json + "}";
      }
      const std::string mu_path = ot->parsed() ? ot_mu : tr_mu;
      const std::string nu_path = ot->parsed() ? ot_nu : tr_nu;
      lab::write_text_file(
          scenario_path,
          std::string("{\"frame\":\"") + common.frame + "\",\"seed\":" +
              std::to_string(common.seed) + ",\"threads\":" +
              std::to_string(common.threads) + ",\"measures\":{\"mu\":{\"file\":\"" +
              fs::absolute(mu_path).string() + "\"},\"nu\":{\"file\":\"" +
              fs::absolute(nu_path).string() + "\"}},\"experiments\":[" +
              experiments + "]}\n");
      const lab::RunOutcome outcome = lab::run_scenario_file(scenario_path, dir);
      for (const auto& a : outcome.artifacts) std::cout << a << "\n";
      return outcome.exit_code;
    }
    if (run->parsed()) {
      lab::RunOverrides overrides;
      overrides.threads = threads_opt->count() > 0 ? common.threads : -1;
      overrides.seed = seed_opt->count() > 0 ? common.seed : -1;
      overrides.cache_dir = run_cache;
      const std::string dir = common.out_dir.empty() ? "srotlab_out" : common.out_dir;
      const lab::RunOutcome outcome =
          lab::run_scenario_file(run_config, dir, overrides);
      for (const auto& f : outcome.failed_checks) {
        std::cerr << "check failed: " << f << "\n";
      }
      std::cout << outcome.manifest_path << "\n";
      return outcome.exit_code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownFrameError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const WrongDimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
