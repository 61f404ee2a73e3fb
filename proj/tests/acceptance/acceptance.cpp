// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include <qreg/errors.hpp>
#include <qreg/estimator.hpp>
#include <qreg/metrics.hpp>
#include <qreg/parallel.hpp>
#include <qreg/quadric.hpp>
#include <qreg/solver.hpp>
#include <qreg/spatial.hpp>
#include <qreg/synth.hpp>

#include "test_support.hpp"

namespace {

using namespace qreg;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and trial counts.
constexpr int kC1Trials = 100;
constexpr double kC1MaxRreDeg = 0.1;
constexpr double kC1MaxRte = 1e-4;
constexpr double kC1MaxSeconds = 5.0;

constexpr int kC2Trials = 100;
constexpr int kC2MinSuccesses = 95;
constexpr double kC2SuccessRmse = 0.2;
constexpr std::size_t kC2RansacIterations = 1000;
constexpr double kC2SurfaceSize = 0.4;
constexpr int kC2PointsPerSurface = 1000;

constexpr int kC3Correspondences = 1000;
constexpr std::size_t kC3RansacIterations = 50000;
constexpr double kC3MinSpeedup = 5.0;
constexpr double kC3MaxRunSeconds = 60.0;
constexpr int kC3Repeats = 3;

constexpr int kC4Patches = 500;
constexpr double kC4MaxResidual = 1e-8;
constexpr double kC4MaxAnchorResidual = 1e-10;
constexpr int kC4PatchPoints = 60;
constexpr double kC4PatchRadius = 0.5;
constexpr int kC4MaxGuarded = 5;  // ill-conditioned draws are rejected, never mis-fitted

constexpr int kC5Transforms = 200;
constexpr double kC5LengthTol = 1e-6;
constexpr double kC5AxisTol = 1e-6;

constexpr int kC6Patches = 100;
constexpr double kC6MaxSphereGap = 4.5e-4;  // spread 2g/(1+g) stays below 1e-3
constexpr int kC6ScaleSeeds = 10;

constexpr int kC7Trials = 100;
constexpr int kC7MinImproved = 95;
constexpr double kC7AngleDeg = 2.0;
constexpr double kC7Translation = 0.02;

constexpr int kC8Batches = 100;
constexpr double kC8Tol = 1e-12;

constexpr double kC9Tol = 1e-12;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void criterion_1() {
  int ok = 0;
  double worst_rre = 0.0;
  double worst_rte = 0.0;
  double total = 0.0;
  for (int t = 0; t < kC1Trials; ++t) {
    SceneSpec spec;
    spec.seed = static_cast<std::uint64_t>(t);
    const Scene s = generate(spec);
    const auto t0 = Clock::now();
    const auto r = qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{});
    total += seconds_since(t0);
    const double e_r = rre(r.best_transform, s.gt);
    const double e_t = rte(r.best_transform, s.gt);
    worst_rre = std::max(worst_rre, e_r);
    worst_rte = std::max(worst_rte, e_t);
    ok += e_r < kC1MaxRreDeg && e_t < kC1MaxRte;
  }
  report(1, ok == kC1Trials && total < kC1MaxSeconds,
         format("exact recovery %d/%d, max RRE %.3g deg, max RTE %.3g, %.2f s total", ok, kC1Trials,
                worst_rre, worst_rte, total));
}

bool registered(const RigidTransform& est, const Scene& s) {
  return pose_rmse(est, s.gt_correspondences, s.source, s.target) < kC2SuccessRmse;
}

void criterion_2() {
  int qreg_ok = 0;
  int ransac_ok = 0;
  for (int t = 0; t < kC2Trials; ++t) {
    SceneSpec spec;
    spec.seed = static_cast<std::uint64_t>(t);
    spec.surface_size = kC2SurfaceSize;
    spec.points_per_surface = kC2PointsPerSurface;
    spec.n_correspondences = 200;
    spec.inlier_ratio = 0.3;
    spec.noise_sigma = 0.005;
    const Scene s = generate(spec);
    try {
      qreg_ok += registered(qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{})
                                .best_transform,
                            s);
    } catch (const NoEligibleCorrespondences&) {
    }
    EstimatorConfig rc;
    rc.rng_seed = spec.seed;
    ransac_ok += registered(
        ransac_register(s.correspondences, s.source, s.target, kC2RansacIterations, rc).best_transform, s);
  }
  report(2, qreg_ok >= kC2MinSuccesses && ransac_ok <= qreg_ok,
         format("qreg %d/%d registered, ransac-%zu %d/%d", qreg_ok, kC2Trials, kC2RansacIterations,
                ransac_ok, kC2Trials));
}

void criterion_3() {
  SceneSpec spec;
  spec.seed = 3;
  spec.surface_size = kC2SurfaceSize;
  spec.points_per_surface = kC2PointsPerSurface;
  spec.n_correspondences = kC3Correspondences;
  spec.inlier_ratio = 0.3;
  spec.noise_sigma = 0.005;
  const Scene s = generate(spec);
  double qreg_best = std::numeric_limits<double>::infinity();
  double ransac_best = std::numeric_limits<double>::infinity();
  double slowest = 0.0;
  for (int rep = 0; rep < kC3Repeats; ++rep) {
    auto t0 = Clock::now();
    (void)qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{});
    const double q = seconds_since(t0);
    t0 = Clock::now();
    (void)ransac_register(s.correspondences, s.source, s.target, kC3RansacIterations, EstimatorConfig{});
    const double r = seconds_since(t0);
    qreg_best = std::min(qreg_best, q);
    ransac_best = std::min(ransac_best, r);
    slowest = std::max({slowest, q, r});
  }
  const double ratio = ransac_best / qreg_best;
  report(3, ratio >= kC3MinSpeedup && slowest < kC3MaxRunSeconds,
         format("qreg %.3f s, ransac-%zu %.3f s, speedup %.1fx (need >= %.0fx), slowest run %.2f s",
                qreg_best, kC3RansacIterations, ransac_best, ratio, kC3MinSpeedup, slowest));
}

void criterion_4() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  int fitted = 0;
  int guarded = 0;
  double worst = 0.0;
  double worst_anchor = 0.0;
  while (fitted < kC4Patches) {
    QuadricCoefficients q{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), 0.0};
    const Point3 anchor(u(rng), u(rng), u(rng));
    q.J = -q.evaluate(anchor);
    if (q.gradient(anchor).norm() < 0.1) continue;
    const auto pts = test::sample_patch(q, anchor, kC4PatchPoints, kC4PatchRadius, rng);
    QuadricCoefficients fit;
    try {
      fit = fit_quadric(anchor, pts).normalized();
    } catch (const SingularSystem&) {
      ++guarded;
      continue;
    }
    for (const auto& p : pts) worst = std::max(worst, std::abs(fit.evaluate(p)));
    worst_anchor = std::max(worst_anchor, std::abs(fit.evaluate(anchor)));
    ++fitted;
  }
  report(4, worst < kC4MaxResidual && worst_anchor < kC4MaxAnchorResidual && guarded <= kC4MaxGuarded,
         format("%d patches, max residual %.3g, max anchor residual %.3g, %d rejected by the "
                "condition guard",
                fitted, worst, worst_anchor, guarded));
}

void criterion_5() {
  std::mt19937_64 rng(5);
  const auto surface = test::ellipsoid(0.3, 0.2, 0.12);
  const Point3 anchor(0.3 * 0.6, 0.2 * 0.48, 0.12 * std::sqrt(1.0 - 0.36 - 0.2304));
  const auto pts = test::sample_patch(surface, anchor, 60, 0.06, rng);
  const LocalFrame base = extract_frame(fit_quadric(anchor, pts), anchor);
  const bool distinct = classify_degeneracy(base) == Degeneracy::Distinct;
  double worst_len = 0.0;
  double worst_axis = 0.0;
  for (int t = 0; t < kC5Transforms; ++t) {
    const RigidTransform T = test::random_rigid(rng, 5.0);
    std::vector<Point3> moved;
    for (const auto& p : pts) moved.push_back(T(p));
    const LocalFrame f = extract_frame(fit_quadric(T(anchor), moved), T(anchor));
    for (int i = 0; i < 3; ++i) {
      worst_len = std::max(worst_len, std::abs(f.axis_lengths[i] / base.axis_lengths[i] - 1.0));
    }
    worst_axis = std::max(worst_axis, test::max_axis_error_up_to_sign(f.axes, T.rotation() * base.axes));
  }
  report(5, distinct && worst_len < kC5LengthTol && worst_axis < kC5AxisTol,
         format("%d transforms, max relative length change %.3g, max axis error %.3g", kC5Transforms,
                worst_len, worst_axis));
}

void criterion_6() {
  int filtered = 0;
  for (int t = 0; t < kC6Patches; ++t) {
    SceneSpec spec;
    spec.ellipsoids = 0;
    spec.spheres = 1;
    spec.n_correspondences = 1;
    spec.sphere_axis_gap = kC6MaxSphereGap * t / (kC6Patches - 1);
    spec.seed = static_cast<std::uint64_t>(t);
    const Scene s = generate(spec);
    const auto e = enrich_correspondences(s.correspondences, s.source, s.target);
    const bool gated = e.correspondences.size() == 1 &&
                       e.correspondences[0].patch_p.degeneracy != Degeneracy::Distinct &&
                       filter_solver_eligible(e.correspondences).empty();
    filtered += gated;
  }

  int scale_rejected = 0;
  std::size_t candidates = 0;
  for (int t = 0; t < kC6ScaleSeeds; ++t) {
    SceneSpec spec;
    spec.seed = static_cast<std::uint64_t>(t);
    spec.target_scale = 1.5;
    const Scene s = generate(spec);
    const auto e = enrich_correspondences(s.correspondences, s.source, s.target);
    for (const auto& ec : filter_solver_eligible(e.correspondences)) {
      candidates += solve_from_correspondence(ec).size();
    }
    try {
      (void)qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{});
    } catch (const NoEligibleCorrespondences&) {
      ++scale_rejected;
    }
  }
  report(6, filtered == kC6Patches && scale_rejected == kC6ScaleSeeds && candidates == 0,
         format("near-sphere patches filtered %d/%d; x1.5 target rejected in %d/%d scenes, "
                "%zu surviving candidates",
                filtered, kC6Patches, scale_rejected, kC6ScaleSeeds, candidates));
}

void criterion_7() {
  int improved = 0;
  int monotone = 0;
  const EstimatorConfig cfg;
  for (int t = 0; t < kC7Trials; ++t) {
    SceneSpec spec;
    spec.seed = 700 + static_cast<std::uint64_t>(t);
    spec.n_correspondences = 200;
    spec.inlier_ratio = 0.5;
    spec.noise_sigma = 0.005;
    const Scene s = generate(spec);
    const auto e = enrich_correspondences(s.correspondences, s.source, s.target);
    const RigidTransform T0 = perturb_transform(s.gt, kC7AngleDeg, kC7Translation, spec.seed);
    const RigidTransform T = local_optimize(T0, s.correspondences, s.source, s.target, e.correspondences, cfg);
    improved += rre(T, s.gt) < rre(T0, s.gt) && rte(T, s.gt) < rte(T0, s.gt);
    monotone += count_inliers(T, s.correspondences, s.source, s.target, cfg.inlier_threshold).count() >=
                count_inliers(T0, s.correspondences, s.source, s.target, cfg.inlier_threshold).count();
  }
  report(7, improved >= kC7MinImproved && monotone == kC7Trials,
         format("strictly improved %d/%d, inlier count kept %d/%d", improved, kC7Trials, monotone,
                kC7Trials));
}

// Straight-line loss: for each eligible match pick the first candidate with
// the most inliers, take its RMSE over the batch, clamp at gamma.
double loss_oracle(const std::vector<EnrichedCorrespondence>& enriched,
                   const std::vector<Correspondence>& corrs, const Scene& s, const EstimatorConfig& cfg) {
  auto residual = [&](const RigidTransform& T, const Correspondence& c) {
    return (T(s.source[c.source_index]) - s.target[c.target_index]).norm();
  };
  double total = 0.0;
  for (const auto& ec : enriched) {
    if (ec.patch_p.degeneracy != Degeneracy::Distinct || ec.patch_q.degeneracy != Degeneracy::Distinct) {
      continue;
    }
    double eps = std::numeric_limits<double>::infinity();
    int best_count = -1;
    for (const auto& cand : solve_from_correspondence(ec, cfg.solver)) {
      int count = 0;
      double sq = 0.0;
      for (const auto& c : corrs) {
        const double r = residual(cand.transform, c);
        count += r <= cfg.inlier_threshold;
        sq += r * r;
      }
      if (count > best_count) {
        best_count = count;
        eps = std::sqrt(sq / static_cast<double>(corrs.size()));
      }
    }
    const double s_score = ec.correspondence.score;
    total += 1.0 - std::min(eps, cfg.gamma) / cfg.gamma - s_score;
  }
  return total;
}

void criterion_8() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  std::size_t terms = 0;
  for (int b = 0; b < kC8Batches; ++b) {
    SceneSpec spec;
    spec.seed = 800 + static_cast<std::uint64_t>(b);
    spec.n_correspondences = 16;
    spec.inlier_ratio = 0.5;
    spec.noise_sigma = 0.01 * unit(rng);
    spec.points_per_surface = 1000;
    Scene s = generate(spec);
    for (auto& c : s.correspondences) c.score = unit(rng);
    EstimatorConfig cfg;
    cfg.gamma = 0.05 + 0.3 * unit(rng);
    const auto e = enrich_correspondences(s.correspondences, s.source, s.target);
    const auto loss = pose_loss(e.correspondences, s.correspondences, s.source, s.target, cfg);
    const double oracle = loss_oracle(e.correspondences, s.correspondences, s, cfg);
    worst = std::max(worst, std::abs(loss.value - oracle));
    terms += loss.terms;
  }
  bool clamp_ok = true;
  for (double gamma : {0.05, 0.2, 1.0}) {
    for (double s : {0.0, 0.3, 0.75, 1.0}) {
      clamp_ok &= pose_loss_term(0.0, gamma, s) == 1.0 - s;
      clamp_ok &= pose_loss_term(gamma, gamma, s) == -s;
      clamp_ok &= pose_loss_term(2.5 * gamma, gamma, s) == -s;
    }
  }
  report(8, worst < kC8Tol && clamp_ok && terms > 0,
         format("%d batches (%zu terms), max |loss - oracle| %.3g; clamp cases %s", kC8Batches,
                terms, worst, clamp_ok ? "exact" : "wrong"));
}

void criterion_9() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* name) {
    if (!ok) failed.emplace_back(name);
  };
  constexpr double deg = std::numbers::pi / 180.0;
  const Matrix3 R10 = Eigen::AngleAxisd(10 * deg, Vector3::UnitZ()).toRotationMatrix();
  check(std::abs(rre(R10, Matrix3::Identity()) - 10.0) < kC9Tol, "rre 10 deg");
  check(rre(Matrix3::Identity(), Matrix3::Identity()) == 0.0, "rre identity");
  check(rte(Vector3(0, 0, 0), Vector3(3, 4, 0)) == 5.0, "rte 3-4-5");

  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    const Matrix3 a = random_rotation(rng);
    const Matrix3 b = random_rotation(rng);
    const double oracle =
        2.0 * std::acos(std::min(1.0, std::abs(Eigen::Quaterniond(a).dot(Eigen::Quaterniond(b))))) / deg;
    if (std::abs(rre(a, b) - oracle) > 1e-6) {
      check(false, "rre vs quaternion angle");
      break;
    }
  }

  const PointCloud P({Point3(0, 0, 0), Point3(1, 2, 3)});
  const PointCloud Q({Point3(1, 0, 0), Point3(2, 2, 3)});
  const std::vector<Correspondence> c{{0, 0, 1.0}, {1, 1, 1.0}};
  check(std::abs(rmse_gt_correspondences(RigidTransform::identity(), c, P, Q) - 1.0) < kC9Tol,
        "rmse unit offset");

  const std::vector<double> rmses{0.1, 0.2, 0.3, 0.05};
  check(recall_3dmatch(rmses) == 0.5, "3dmatch recall");
  const std::vector<double> rr{1.0, 6.0, 1.0};
  const std::vector<double> tt{1.0, 1.0, 3.0};
  check(std::abs(recall_kitti(rr, tt) - 1.0 / 3.0) < kC9Tol, "kitti recall");

  const PointCloud p1({Point3(0, 0, 0)});
  const PointCloud q1({Point3(0, 0, 0.3)});
  check(std::abs(chamfer_modified(p1, p1, q1, q1, RigidTransform::identity()) - 0.18) < kC9Tol,
        "chamfer single point");

  std::uniform_real_distribution<double> u(-1, 1);
  auto cloud = [&](std::size_t n) {
    std::vector<Point3> v;
    for (std::size_t i = 0; i < n; ++i) v.emplace_back(u(rng), u(rng), u(rng));
    return v;
  };
  const auto A = cloud(200);
  const auto Ar = cloud(300);
  const auto B = cloud(250);
  const auto Br = cloud(280);
  const RigidTransform T = test::random_rigid(rng);
  double fwd = 0.0;
  for (const auto& a : A) {
    double best = 1e300;
    for (const auto& b : Br) best = std::min(best, (T(a) - b).squaredNorm());
    fwd += best;
  }
  double bwd = 0.0;
  for (const auto& b : B) {
    double best = 1e300;
    for (const auto& a : Ar) best = std::min(best, (b - T(a)).squaredNorm());
    bwd += best;
  }
  const double brute = fwd / A.size() + bwd / B.size();
  check(std::abs(chamfer_modified(PointCloud(A), PointCloud(Ar), PointCloud(B), PointCloud(Br), T) -
                 brute) < kC9Tol,
        "chamfer brute force");

  std::string detail = "rre, rte, rmse, recall and chamfer analytic and brute-force cases";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
  }
  report(9, failed.empty(), detail);
}

void criterion_10() {
  SceneSpec spec;
  spec.seed = 10;
  spec.inlier_ratio = 0.4;
  spec.noise_sigma = 0.004;
  spec.n_correspondences = 150;
  const Scene s = generate(spec);
  const Scene again = generate(spec);
  bool ok = s.source.points() == again.source.points() && s.target.points() == again.target.points() &&
            s.correspondences == again.correspondences && s.gt == again.gt;

  struct Snapshot {
    RigidTransform qreg;
    RigidTransform qreg_no_lo;
    std::vector<std::size_t> inliers;
    RigidTransform kabsch;
    double loss = 0.0;
    RigidTransform ransac;
    RigidTransform ransac_lo;
  };
  auto snapshot = [&] {
    Snapshot out;
    const auto r = qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{});
    out.qreg = r.best_transform;
    out.inliers = r.inlier_indices;
    EstimatorConfig no_lo;
    no_lo.lo_iterations = 0;
    out.qreg_no_lo = qreg_register(s.correspondences, s.source, s.target, no_lo).best_transform;
    out.kabsch = weighted_kabsch_register(s.correspondences, s.source, s.target, EstimatorConfig{}).best_transform;
    const auto e = enrich_correspondences(s.correspondences, s.source, s.target);
    out.loss = pose_loss(e.correspondences, s.correspondences, s.source, s.target, EstimatorConfig{}).value;
    EstimatorConfig rc;
    rc.rng_seed = 1234;
    out.ransac = ransac_register(s.correspondences, s.source, s.target, 2000, rc).best_transform;
    out.ransac_lo =
        ransac_register(s.correspondences, s.source, s.target, 500, rc, e.correspondences, true).best_transform;
    return out;
  };
  auto same = [](const Snapshot& a, const Snapshot& b) {
    return a.qreg == b.qreg && a.qreg_no_lo == b.qreg_no_lo && a.inliers == b.inliers &&
           a.kabsch == b.kabsch && a.loss == b.loss && a.ransac == b.ransac && a.ransac_lo == b.ransac_lo;
  };
  set_thread_count(1);
  const Snapshot ref = snapshot();
  ok &= same(ref, snapshot());
  for (std::size_t threads : {2u, 4u, 7u}) {
    set_thread_count(threads);
    ok &= same(ref, snapshot());
  }
  set_thread_count(0);

  EstimatorConfig other;
  other.rng_seed = 4321;
  // A different seed is allowed to differ; the same seed must not.
  const auto r1 = ransac_register(s.correspondences, s.source, s.target, 300, other);
  const auto r2 = ransac_register(s.correspondences, s.source, s.target, 300, other);
  ok &= r1.best_transform == r2.best_transform && r1.inlier_indices == r2.inlier_indices;

  report(10, ok, "generator, qreg, qreg_no_lo, weighted kabsch, pose loss and seeded ransac "
                 "identical across runs and 1/2/4/7 threads");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                    criterion_5, criterion_6, criterion_7, criterion_8,
                                                    criterion_9, criterion_10};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
