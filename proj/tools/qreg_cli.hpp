#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <qreg/estimator.hpp>
#include <qreg/io.hpp>
#include <qreg/metrics.hpp>
#include <qreg/quadric.hpp>
#include <qreg/synth.hpp>

namespace qreg::cli {

/// "qreg", "qreg_no_lo", "ransac", "ransac_lo" or "kabsch_weighted"; the two
/// RANSAC names take an optional ":<iterations>" suffix.
struct MethodSpec {
  std::string name;
  std::optional<std::size_t> iterations;

  static MethodSpec parse(const std::string& text);
  std::string str() const;
};

struct RunConfig {
  std::string method = "qreg";
  std::size_t ransac_iterations = 50000;
  EstimatorConfig estimator;
  PatchConfig patch;
  SceneSpec scene;

  // bench matrix
  std::vector<double> bench_inlier_ratios{0.3, 1.0};
  std::vector<double> bench_noise_sigmas{0.0, 0.005};
  std::vector<std::string> bench_methods{"qreg", "ransac:1000"};
  int bench_trials = 10;
  double success_rmse = 0.2;

  /// Every key with its current value, in a fixed order.
  Settings settings() const;
  /// Throws InvalidSpec for unknown keys or malformed values.
  void apply(const std::string& key, const std::string& value);
  void validate() const;
};

/// Defaults, then the config file, then each "key=value" override in order.
RunConfig load_config(const std::optional<std::filesystem::path>& config_file,
                      const std::vector<std::string>& overrides);

/// Runs one method end to end. Throws NoEligibleCorrespondences like the estimators.
RegistrationReport run_method(const MethodSpec& method, std::span<const Correspondence> corrs,
                              const PointCloud& source, const PointCloud& target,
                              const RunConfig& cfg);

struct RegisterArgs {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path correspondences;
  std::filesystem::path out_transform;
  std::filesystem::path out_report;
  std::optional<std::filesystem::path> gt;
};

struct EvaluateArgs {
  std::optional<std::filesystem::path> est;
  std::optional<std::filesystem::path> gt;
  std::optional<std::filesystem::path> gt_corrs;
  std::optional<std::filesystem::path> source;
  std::optional<std::filesystem::path> target;
  std::optional<std::filesystem::path> source_raw;
  std::optional<std::filesystem::path> target_raw;
  std::optional<std::filesystem::path> batch_dir;
  Protocol protocol = Protocol::ThreeDMatch;
};

/// Exit codes: 0 success, 1 I/O, parse or config failure, 2 no eligible correspondences.
int cmd_register(const RegisterArgs& args, const RunConfig& cfg, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& err);
int cmd_bench(const RunConfig& cfg, const std::filesystem::path& out_csv, bool with_timing,
              std::ostream& err);

/// CSV header and row used by `evaluate`.
std::string evaluation_header();
std::string evaluation_row(const std::string& name, const PairEvaluation& e, Protocol protocol);
std::string summary_header();
std::string summary_row(const BenchmarkSummary& s, Protocol protocol);

std::string bench_header();

/// Full command-line entry point.
int run(int argc, char** argv);

}  // namespace qreg::cli
