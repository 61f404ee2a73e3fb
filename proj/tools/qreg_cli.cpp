#include "qreg_cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include <qreg/errors.hpp>
#include <qreg/parallel.hpp>
#include <qreg/solver.hpp>

namespace qreg::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kMethods{"qreg", "qreg_no_lo", "ransac", "ransac_lo",
                                        "kabsch_weighted"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename F>
auto as_spec_error(const std::string& key, const std::string& value, F&& parse) {
  try {
    return parse(value);
  } catch (const InvalidArgument&) {
    throw InvalidSpec("bad value '" + value + "' for '" + key + "'");
  }
}

std::string real_list(const std::vector<double>& v) {
  std::vector<std::string> s;
  for (double x : v) s.push_back(format_real(x));
  return join(s, ',');
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& text) {
  MethodSpec m;
  const auto colon = text.find(':');
  m.name = text.substr(0, colon);
  if (std::find(kMethods.begin(), kMethods.end(), m.name) == kMethods.end()) {
    throw InvalidSpec("unknown method '" + m.name + "'");
  }
  if (colon != std::string::npos) {
    if (m.name != "ransac" && m.name != "ransac_lo") {
      throw InvalidSpec("only ransac methods take an iteration count");
    }
    m.iterations = as_spec_error("method", text.substr(colon + 1), [](const std::string& s) {
      return static_cast<std::size_t>(parse_unsigned(s));
    });
    if (*m.iterations == 0) throw InvalidSpec("ransac needs at least one iteration");
  }
  return m;
}

std::string MethodSpec::str() const {
  return iterations ? name + ":" + std::to_string(*iterations) : name;
}

Settings RunConfig::settings() const {
  const auto& e = estimator;
  Settings s{
      {"method", method},
      {"ransac_iterations", std::to_string(ransac_iterations)},
      {"neighbors", std::to_string(patch.neighbors)},
      {"degeneracy_tolerance", format_real(patch.degeneracy_tolerance)},
      {"inlier_threshold", format_real(e.inlier_threshold)},
      {"lo_iterations", std::to_string(e.lo_iterations)},
      {"lo_sample_fraction", format_real(e.lo_sample_fraction)},
      {"lo_normal_angle_max", format_real(e.lo_normal_angle_max)},
      {"lo_normal_gate", e.lo_normal_gate ? "true" : "false"},
      {"scale_min", format_real(e.solver.scale_min)},
      {"scale_max", format_real(e.solver.scale_max)},
      {"axis_ratio_tolerance", format_real(e.solver.axis_ratio_tolerance)},
      {"rng_seed", std::to_string(e.rng_seed)},
      {"gamma", format_real(e.gamma)},
      {"record_candidates", e.record_candidates ? "true" : "false"},
  };
  for (auto& kv : scene_settings(scene)) s.push_back(std::move(kv));
  s.emplace_back("bench_inlier_ratios", real_list(bench_inlier_ratios));
  s.emplace_back("bench_noise_sigmas", real_list(bench_noise_sigmas));
  s.emplace_back("bench_methods", join(bench_methods, ','));
  s.emplace_back("bench_trials", std::to_string(bench_trials));
  s.emplace_back("success_rmse", format_real(success_rmse));
  return s;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  auto real = [&] { return as_spec_error(key, value, [](const std::string& v) { return parse_real(v); }); };
  auto uint = [&] { return as_spec_error(key, value, [](const std::string& v) { return parse_unsigned(v); }); };
  auto flag = [&] { return as_spec_error(key, value, [](const std::string& v) { return parse_bool(v); }); };
  auto& e = estimator;

  if (key == "method") {
    MethodSpec::parse(value);
    method = value;
  } else if (key == "ransac_iterations") {
    ransac_iterations = static_cast<std::size_t>(uint());
  } else if (key == "neighbors") {
    patch.neighbors = static_cast<std::size_t>(uint());
  } else if (key == "degeneracy_tolerance") {
    patch.degeneracy_tolerance = real();
  } else if (key == "inlier_threshold") {
    e.inlier_threshold = real();
  } else if (key == "lo_iterations") {
    e.lo_iterations = static_cast<int>(std::min<std::uint64_t>(uint(), 1'000'000));
  } else if (key == "lo_sample_fraction") {
    e.lo_sample_fraction = real();
  } else if (key == "lo_normal_angle_max") {
    e.lo_normal_angle_max = real();
  } else if (key == "lo_normal_gate") {
    e.lo_normal_gate = flag();
  } else if (key == "scale_min") {
    e.solver.scale_min = real();
  } else if (key == "scale_max") {
    e.solver.scale_max = real();
  } else if (key == "axis_ratio_tolerance") {
    e.solver.axis_ratio_tolerance = real();
  } else if (key == "rng_seed") {
    e.rng_seed = uint();
  } else if (key == "gamma") {
    e.gamma = real();
  } else if (key == "record_candidates") {
    e.record_candidates = flag();
  } else if (key == "bench_inlier_ratios" || key == "bench_noise_sigmas") {
    std::vector<double> v;
    for (const auto& item : split_list(value)) {
      v.push_back(as_spec_error(key, item, [](const std::string& x) { return parse_real(x); }));
    }
    (key == "bench_inlier_ratios" ? bench_inlier_ratios : bench_noise_sigmas) = std::move(v);
  } else if (key == "bench_methods") {
    auto v = split_list(value);
    for (const auto& m : v) MethodSpec::parse(m);
    bench_methods = std::move(v);
  } else if (key == "bench_trials") {
    bench_trials = static_cast<int>(std::min<std::uint64_t>(uint(), 1'000'000));
  } else if (key == "success_rmse") {
    success_rmse = real();
  } else if (!apply_scene_setting(scene, key, value)) {
    throw InvalidSpec("unknown config key '" + key + "'");
  }
}

void RunConfig::validate() const {
  MethodSpec::parse(method);
  if (ransac_iterations == 0) throw InvalidSpec("ransac_iterations must be positive");
  if (patch.neighbors < 10) throw InvalidSpec("neighbors must be at least 10");
  if (!(patch.degeneracy_tolerance > 0.0)) throw InvalidSpec("degeneracy_tolerance must be positive");
  if (!(success_rmse > 0.0)) throw InvalidSpec("success_rmse must be positive");
  if (bench_trials < 0) throw InvalidSpec("bench_trials must be >= 0");
  try {
    estimator.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidSpec(e.what());
  }
  scene.validate();
}

RunConfig load_config(const std::optional<fs::path>& config_file,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (config_file) {
    for (const auto& s : read_key_value_file(*config_file)) {
      try {
        cfg.apply(s.key, s.value);
      } catch (const InvalidSpec& e) {
        throw InvalidSpec(config_file->string() + ":" + std::to_string(s.line) + ": " + e.what());
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw InvalidSpec("override '" + o + "' is not key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.apply(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RegistrationReport run_method(const MethodSpec& method, std::span<const Correspondence> corrs,
                              const PointCloud& source, const PointCloud& target,
                              const RunConfig& cfg) {
  validate_correspondences(corrs, source, target);
  EstimatorConfig e = cfg.estimator;
  if (method.name == "qreg") return qreg_register(corrs, source, target, e, cfg.patch);
  if (method.name == "qreg_no_lo") {
    e.lo_iterations = 0;
    auto report = qreg_register(corrs, source, target, e, cfg.patch);
    report.method = "qreg_no_lo";
    return report;
  }
  if (method.name == "kabsch_weighted") return weighted_kabsch_register(corrs, source, target, e);
  const std::size_t iterations = method.iterations.value_or(cfg.ransac_iterations);
  if (method.name == "ransac") return ransac_register(corrs, source, target, iterations, e);
  // ransac_lo needs the quadric normals for its refinement gate.
  const Enrichment enriched = enrich_correspondences(corrs, source, target, cfg.patch);
  auto report = ransac_register(corrs, source, target, iterations, e, enriched.correspondences, true);
  report.patch_failures = enriched.failed;
  report.stage_timings["patch_fitting"] = enriched.seconds;
  return report;
}

int cmd_register(const RegisterArgs& args, const RunConfig& cfg, std::ostream& err) {
  try {
    const PointCloud source = read_cloud(args.source, cloud_format_from_path(args.source));
    const PointCloud target = read_cloud(args.target, cloud_format_from_path(args.target));
    const auto corrs = read_correspondences(args.correspondences);
    std::optional<RigidTransform> gt;
    if (args.gt) gt = read_transform(*args.gt);

    const auto report = run_method(MethodSpec::parse(cfg.method), corrs, source, target, cfg);
    std::vector<std::pair<std::string, double>> metrics;
    if (gt) {
      metrics.emplace_back("rre_deg", rre(report.best_transform, *gt));
      metrics.emplace_back("rte", rte(report.best_transform, *gt));
    }
    write_transform(report.best_transform, args.out_transform);
    write_report(report, args.out_report, cfg.settings(), metrics);
    return 0;
  } catch (const NoEligibleCorrespondences& e) {
    err << "qreg register: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "qreg register: " << e.what() << "\n";
    return 1;
  }
}

std::string evaluation_header() { return "pair,protocol,rre_deg,rte,rmse,chamfer,registered"; }

std::string evaluation_row(const std::string& name, const PairEvaluation& e, Protocol protocol) {
  const bool ok = protocol == Protocol::Kitti ? e.registered_kitti : e.registered_3dmatch;
  return name + "," + std::string(to_string(protocol)) + "," + fmt(e.rre_degrees) + "," +
         fmt(e.rte_units) + "," + fmt(e.rmse_units) + "," + fmt(e.chamfer) + "," +
         (ok ? "true" : "false");
}

std::string summary_header() {
  return "protocol,pairs,registration_recall,median_rre_deg,median_rte,mean_rre_deg,mean_rte,"
         "mean_rmse";
}

std::string summary_row(const BenchmarkSummary& s, Protocol protocol) {
  return std::string(to_string(protocol)) + "," + std::to_string(s.pairs) + "," +
         fmt(s.registration_recall) + "," + fmt(s.median_rre) + "," + fmt(s.median_rte) + "," +
         fmt(s.mean_rre) + "," + fmt(s.mean_rte) + "," + fmt(s.mean_rmse);
}

namespace {

struct PairFiles {
  fs::path est;
  fs::path gt;
  std::optional<fs::path> gt_corrs;
  std::optional<fs::path> source;
  std::optional<fs::path> target;
  std::optional<fs::path> source_raw;
  std::optional<fs::path> target_raw;
};

PairEvaluation evaluate_files(const PairFiles& f, Protocol protocol) {
  const RigidTransform est = read_transform(f.est);
  const RigidTransform gt = read_transform(f.gt);
  std::optional<PointCloud> source;
  std::optional<PointCloud> target;
  if (f.source) source = read_cloud(*f.source, cloud_format_from_path(*f.source));
  if (f.target) target = read_cloud(*f.target, cloud_format_from_path(*f.target));

  std::optional<double> rmse;
  if (f.gt_corrs) {
    if (!source || !target) throw InvalidArgument("gt correspondences need --source and --target");
    const auto corrs = read_correspondences(*f.gt_corrs);
    validate_correspondences(corrs, *source, *target);
    if (!corrs.empty()) rmse = rmse_gt_correspondences(est, corrs, *source, *target);
  }
  PairEvaluation e = evaluate_pair(est, gt, rmse);
  if (protocol == Protocol::ModelNet && source && target) {
    const PointCloud sraw =
        f.source_raw ? read_cloud(*f.source_raw, cloud_format_from_path(*f.source_raw)) : *source;
    const PointCloud traw =
        f.target_raw ? read_cloud(*f.target_raw, cloud_format_from_path(*f.target_raw)) : *target;
    e.chamfer = chamfer_modified(*source, sraw, *target, traw, est);
  }
  return e;
}

std::optional<fs::path> if_exists(const fs::path& p) {
  return fs::exists(p) ? std::optional<fs::path>(p) : std::nullopt;
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.batch_dir) {
      std::vector<fs::path> dirs;
      for (const auto& entry : fs::directory_iterator(*args.batch_dir)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
      }
      std::sort(dirs.begin(), dirs.end());
      std::vector<PairEvaluation> evals;
      std::string rows;
      for (const auto& d : dirs) {
        PairFiles f{d / "est_transform.txt", d / "gt_transform.txt", if_exists(d / "gt_correspondences.csv"),
                    if_exists(d / "source.ply"), if_exists(d / "target.ply"),
                    if_exists(d / "source_raw.ply"), if_exists(d / "target_raw.ply")};
        if (f.gt_corrs && (!f.source || !f.target)) f.gt_corrs.reset();
        evals.push_back(evaluate_files(f, args.protocol));
        rows += evaluation_row(d.filename().string(), evals.back(), args.protocol) + "\n";
      }
      out << evaluation_header() << "\n"
          << rows << "\n"
          << summary_header() << "\n"
          << summary_row(summarize(evals, args.protocol), args.protocol) << "\n";
      return 0;
    }
    if (!args.est || !args.gt) throw InvalidArgument("evaluate needs --est and --gt (or --batch)");
    const PairFiles f{*args.est, *args.gt, args.gt_corrs, args.source, args.target,
                      args.source_raw, args.target_raw};
    const PairEvaluation e = evaluate_files(f, args.protocol);
    out << evaluation_header() << "\n"
        << evaluation_row(args.est->filename().string(), e, args.protocol) << "\n";
    return 0;
  } catch (const Error& e) {
    err << "qreg evaluate: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "qreg evaluate: " << e.what() << "\n";
    return 1;
  }
}

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& err) {
  try {
    const Scene scene = generate(cfg.scene);
    fs::create_directories(out_dir);
    write_cloud(scene.source, out_dir / "source.ply", CloudFormat::PlyBinaryLittleEndian);
    write_cloud(scene.target, out_dir / "target.ply", CloudFormat::PlyBinaryLittleEndian);
    write_correspondences(scene.correspondences, out_dir / "correspondences.csv");
    write_correspondences(scene.gt_correspondences, out_dir / "gt_correspondences.csv");
    write_transform(scene.gt, out_dir / "gt_transform.txt");
    write_key_value_file(scene_settings(cfg.scene), out_dir / "scene.cfg");
    return 0;
  } catch (const Error& e) {
    err << "qreg synth: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "qreg synth: " << e.what() << "\n";
    return 1;
  }
}

std::string bench_header() {
  return "inlier_ratio,noise_sigma,method,trials,success_rate,median_rre_deg,median_rte,"
         "mean_wall_seconds,seeds";
}

namespace {

struct CellResult {
  double success_rate = 0.0;
  double median_rre = 0.0;
  double median_rte = 0.0;
  double mean_seconds = 0.0;
};

// Medians run over all trials; a trial that finds no eligible correspondence
// counts as a failure with the identity as its estimate.
CellResult run_cell(const RunConfig& cfg, double ratio, double sigma, const MethodSpec& method,
                    const std::vector<std::uint64_t>& seeds) {
  CellResult r;
  std::vector<double> rres;
  std::vector<double> rtes;
  std::size_t ok = 0;
  for (const std::uint64_t seed : seeds) {
    SceneSpec spec = cfg.scene;
    spec.inlier_ratio = ratio;
    spec.noise_sigma = sigma;
    spec.seed = seed;
    const Scene scene = generate(spec);
    RigidTransform est;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      est = run_method(method, scene.correspondences, scene.source, scene.target, cfg).best_transform;
    } catch (const NoEligibleCorrespondences&) {
    }
    r.mean_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (pose_rmse(est, scene.gt_correspondences, scene.source, scene.target) < cfg.success_rmse) ++ok;
    rres.push_back(rre(est, scene.gt));
    rtes.push_back(rte(est, scene.gt));
  }
  const auto n = static_cast<double>(seeds.size());
  if (!seeds.empty()) {
    r.success_rate = static_cast<double>(ok) / n;
    r.mean_seconds /= n;
  }
  r.median_rre = median(rres);
  r.median_rte = median(rtes);
  return r;
}

}  // namespace

int cmd_bench(const RunConfig& cfg, const fs::path& out_csv, bool with_timing, std::ostream& err) {
  try {
    struct Cell {
      double ratio;
      double sigma;
      MethodSpec method;
    };
    std::vector<Cell> cells;
    for (double ratio : cfg.bench_inlier_ratios) {
      for (double sigma : cfg.bench_noise_sigmas) {
        for (const auto& m : cfg.bench_methods) cells.push_back({ratio, sigma, MethodSpec::parse(m)});
      }
    }
    // Every cell sees the same scenes so methods are compared on equal footing.
    std::vector<std::uint64_t> seeds;
    for (int t = 0; t < cfg.bench_trials; ++t) seeds.push_back(cfg.scene.seed + static_cast<std::uint64_t>(t));
    std::vector<std::string> seed_text;
    for (auto s : seeds) seed_text.push_back(std::to_string(s));
    const std::string seed_column = join(seed_text, ';');

    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
      results[i] = run_cell(cfg, cells[i].ratio, cells[i].sigma, cells[i].method, seeds);
    });

    std::string csv = bench_header() + "\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      const auto& r = results[i];
      csv += fmt(c.ratio) + "," + fmt(c.sigma) + "," + c.method.str() + "," +
             std::to_string(seeds.size()) + "," + fmt(r.success_rate) + "," + fmt(r.median_rre) +
             "," + fmt(r.median_rte) + "," + (with_timing ? fmt(r.mean_seconds) : "NA") + "," +
             seed_column + "\n";
    }
    write_file(out_csv, csv);
    return 0;
  } catch (const Error& e) {
    err << "qreg bench: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Single-correspondence quadric registration toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for all subcommands");

  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Key-value config file (key = value per line)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override a config key, e.g. --set inlier_threshold=0.05")
        ->take_all();
  };

  RegisterArgs reg;
  std::optional<std::string> reg_gt;
  auto* reg_cmd = app.add_subcommand("register", "Estimate the transform between two clouds");
  reg_cmd->add_option("--source", reg.source, "Source cloud (.ply or .xyz)")->required();
  reg_cmd->add_option("--target", reg.target, "Target cloud (.ply or .xyz)")->required();
  reg_cmd->add_option("--corrs", reg.correspondences, "Correspondence CSV (src,dst[,score])")
      ->required();
  reg_cmd->add_option("--out-transform", reg.out_transform, "Output 4x4 transform file")
      ->required();
  reg_cmd->add_option("--out-report", reg.out_report, "Output JSON report")->required();
  reg_cmd->add_option("--gt", reg_gt, "Ground-truth transform; adds RRE/RTE to the report");
  add_config(reg_cmd);

  EvaluateArgs ev;
  std::optional<std::string> est, gt, gt_corrs, src, dst, src_raw, dst_raw, batch;
  std::string protocol = "threedmatch";
  auto* ev_cmd = app.add_subcommand("evaluate", "Score estimated transforms against ground truth");
  ev_cmd->add_option("--est", est, "Estimated transform file");
  ev_cmd->add_option("--gt", gt, "Ground-truth transform file");
  ev_cmd->add_option("--gt-corrs", gt_corrs, "Ground-truth correspondences (enables RMSE)");
  ev_cmd->add_option("--source", src, "Source cloud");
  ev_cmd->add_option("--target", dst, "Target cloud");
  ev_cmd->add_option("--source-raw", src_raw, "Raw source cloud for the chamfer distance");
  ev_cmd->add_option("--target-raw", dst_raw, "Raw target cloud for the chamfer distance");
  ev_cmd->add_option("--batch", batch,
                     "Directory of pair subdirectories (est_transform.txt, gt_transform.txt, "
                     "optional gt_correspondences.csv, source.ply, target.ply)");
  ev_cmd->add_option("--protocol", protocol, "threedmatch, kitti or modelnet")
      ->check(CLI::IsMember({"threedmatch", "3dmatch", "kitti", "modelnet"}));

  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic registration problem");
  synth_cmd->add_option("--out-dir", synth_out, "Output directory")->required();
  add_config(synth_cmd);

  std::string bench_out;
  bool no_timing = false;
  auto* bench_cmd =
      app.add_subcommand("bench", "Sweep inlier ratio x noise x method over synthetic scenes");
  bench_cmd->add_option("--out", bench_out, "Output CSV")->required();
  bench_cmd->add_flag("--no-timing", no_timing,
                      "Write NA for wall time so repeated runs produce identical files");
  add_config(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto opt_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
    return s ? std::optional<fs::path>(*s) : std::nullopt;
  };

  RunConfig cfg;
  if (!ev_cmd->parsed()) {
    try {
      cfg = load_config(opt_path(config_file), overrides);
    } catch (const Error& e) {
      std::cerr << "qreg: " << e.what() << "\n";
      return 1;
    }
  }

  if (reg_cmd->parsed()) {
    reg.gt = opt_path(reg_gt);
    return cmd_register(reg, cfg, std::cerr);
  }
  if (ev_cmd->parsed()) {
    ev.est = opt_path(est);
    ev.gt = opt_path(gt);
    ev.gt_corrs = opt_path(gt_corrs);
    ev.source = opt_path(src);
    ev.target = opt_path(dst);
    ev.source_raw = opt_path(src_raw);
    ev.target_raw = opt_path(dst_raw);
    ev.batch_dir = opt_path(batch);
    ev.protocol = parse_protocol(protocol);
    return cmd_evaluate(ev, std::cout, std::cerr);
  }
  if (synth_cmd->parsed()) return cmd_synth(cfg, synth_out, std::cerr);
  return cmd_bench(cfg, bench_out, !no_timing, std::cerr);
}

}  // namespace qreg::cli
