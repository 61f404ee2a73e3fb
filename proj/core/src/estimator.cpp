#include "qreg/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qreg/errors.hpp"
#include "qreg/parallel.hpp"

namespace qreg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kLocalOptimizationSeed = 0x4c4f2d5145474953ULL;
constexpr int kMaxDrawsPerIteration = 10;

/// Correspondence endpoints gathered into contiguous arrays.
class Residuals {
 public:
  Residuals(std::span<const Correspondence> corrs, const PointCloud& source,
            const PointCloud& target) {
    validate_correspondences(corrs, source, target);
    src_.reserve(corrs.size());
    dst_.reserve(corrs.size());
    for (const auto& c : corrs) {
      src_.push_back(source[c.source_index]);
      dst_.push_back(target[c.target_index]);
    }
  }

  std::size_t size() const noexcept { return src_.size(); }
  const std::vector<Point3>& src() const noexcept { return src_; }
  const std::vector<Point3>& dst() const noexcept { return dst_; }

  /// Inlier count and residual sum without materializing indices.
  std::pair<std::size_t, double> score(const RigidTransform& T, double threshold) const {
    const Matrix3& R = T.rotation();
    const Vector3& t = T.translation();
    const double limit = threshold * threshold;
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < src_.size(); ++i) {
      const double d2 = (R * src_[i] + t - dst_[i]).squaredNorm();
      if (d2 <= limit) {
        ++count;
        sum += std::sqrt(d2);
      }
    }
    return {count, sum};
  }

  InlierSet inliers(const RigidTransform& T, double threshold) const {
    const Matrix3& R = T.rotation();
    const Vector3& t = T.translation();
    const double limit = threshold * threshold;
    InlierSet out;
    for (std::size_t i = 0; i < src_.size(); ++i) {
      const double d2 = (R * src_[i] + t - dst_[i]).squaredNorm();
      if (d2 <= limit) {
        out.indices.push_back(i);
        out.residual_sum += std::sqrt(d2);
      }
    }
    return out;
  }

 private:
  std::vector<Point3> src_;
  std::vector<Point3> dst_;
};

/// A scored hypothesis; `rank` breaks remaining ties (correspondence index,
/// sign variant, or RANSAC iteration).
struct Hypothesis {
  bool valid = false;
  std::size_t count = 0;
  double residual_sum = 0.0;
  double normal_agreement = 0.0;  ///< n_qᵀ R n_p of the generating match; 0 for RANSAC
  std::size_t rank_major = 0;
  std::size_t rank_minor = 0;
  RigidTransform transform;

  double mean_residual() const {
    return count == 0 ? 0.0 : residual_sum / static_cast<double>(count);
  }
};

// Mean residuals closer than `tie` count as equal. The four sign variants of
// one match all reproduce that match exactly, so with a single inlier their
// residuals differ only by rounding and the normals have to decide.
bool better(const Hypothesis& a, const Hypothesis& b, double tie = 0.0) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.count != b.count) return a.count > b.count;
  const double ma = a.mean_residual();
  const double mb = b.mean_residual();
  if (std::abs(ma - mb) > tie) return ma < mb;
  if (a.normal_agreement != b.normal_agreement) return a.normal_agreement > b.normal_agreement;
  if (a.rank_major != b.rank_major) return a.rank_major < b.rank_major;
  return a.rank_minor < b.rank_minor;
}

void finalize(RegistrationReport& report, const Residuals& residuals, const EstimatorConfig& cfg) {
  const InlierSet inl = residuals.inliers(report.best_transform, cfg.inlier_threshold);
  report.inlier_indices = inl.indices;
  report.inlier_count = inl.count();
  report.config = cfg;
}

RigidTransform local_optimize_impl(const RigidTransform& T0, std::span<const Correspondence> corrs,
                                   const Residuals& residuals,
                                   std::span<const EnrichedCorrespondence> patches,
                                   const EstimatorConfig& cfg) {
  std::vector<std::optional<std::pair<Vector3, Vector3>>> normals(corrs.size());
  for (const auto& ec : patches) {
    if (ec.index < normals.size()) normals[ec.index] = {ec.patch_p.normal, ec.patch_q.normal};
  }
  const double min_cos = std::cos(cfg.lo_normal_angle_max * std::numbers::pi / 180.0);

  RigidTransform best = T0;
  std::size_t best_count = residuals.score(T0, cfg.inlier_threshold).first;

  std::vector<std::size_t> survivors;
  std::vector<Point3> src;
  std::vector<Point3> dst;
  std::vector<double> weights;
  for (int round = 0; round < cfg.lo_iterations; ++round) {
    const InlierSet inl = residuals.inliers(best, cfg.inlier_threshold);
    survivors.clear();
    for (std::size_t idx : inl.indices) {
      // Correspondences without fitted patches are kept on position alone.
      if (cfg.lo_normal_gate && normals[idx]) {
        const auto& [np, nq] = *normals[idx];
        if ((best.rotation() * np).dot(nq) < min_cos) continue;
      }
      survivors.push_back(idx);
    }
    if (survivors.size() < 3) break;

    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg.lo_sample_fraction * survivors.size())), 3,
        survivors.size());
    std::mt19937_64 rng(mix_seed(kLocalOptimizationSeed, static_cast<std::uint64_t>(round)));
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, survivors.size() - 1);
      std::swap(survivors[i], survivors[pick(rng)]);
    }
    std::sort(survivors.begin(), survivors.begin() + static_cast<std::ptrdiff_t>(take));

    src.clear();
    dst.clear();
    weights.clear();
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t idx = survivors[i];
      src.push_back(residuals.src()[idx]);
      dst.push_back(residuals.dst()[idx]);
      weights.push_back(corrs[idx].score);
    }
    RigidTransform refit;
    try {
      refit = kabsch_weighted(src, dst, weights);
    } catch (const DegenerateInput&) {
      continue;
    }
    const std::size_t count = residuals.score(refit, cfg.inlier_threshold).first;
    if (count >= best_count) {
      best = refit;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (!(inlier_threshold > 0.0)) throw InvalidArgument("inlier_threshold must be positive");
  if (lo_iterations < 0) throw InvalidArgument("lo_iterations must be non-negative");
  if (!(lo_sample_fraction > 0.0 && lo_sample_fraction <= 1.0)) {
    throw InvalidArgument("lo_sample_fraction must lie in (0, 1]");
  }
  if (!(lo_normal_angle_max > 0.0)) throw InvalidArgument("lo_normal_angle_max must be positive");
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  if (!(solver.scale_min > 0.0 && solver.scale_min <= solver.scale_max)) {
    throw InvalidArgument("scale bounds must satisfy 0 < min <= max");
  }
  if (!(solver.axis_ratio_tolerance > 0.0)) {
    throw InvalidArgument("axis_ratio_tolerance must be positive");
  }
}

InlierSet count_inliers(const RigidTransform& T, std::span<const Correspondence> corrs,
                        const PointCloud& source, const PointCloud& target, double threshold) {
  if (threshold < 0.0) throw InvalidArgument("count_inliers: threshold must be non-negative");
  return Residuals(corrs, source, target).inliers(T, threshold);
}

RegistrationReport qreg_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                 const PointCloud& target,
                                 std::span<const EnrichedCorrespondence> patches,
                                 const EstimatorConfig& cfg) {
  cfg.validate();
  const Residuals residuals(corrs, source, target);
  RegistrationReport report;
  report.method = cfg.lo_iterations > 0 ? "qreg" : "qreg_no_lo";

  const auto scoring_start = Clock::now();
  const auto eligible = filter_solver_eligible(patches);
  report.eligible_correspondences = eligible.size();
  if (eligible.empty()) throw NoEligibleCorrespondences();

  const double tie = 1e-9 * cfg.inlier_threshold;
  std::vector<Hypothesis> best_per(eligible.size());
  std::vector<std::size_t> emitted(eligible.size(), 0);
  std::vector<std::vector<CandidateScore>> scores(cfg.record_candidates ? eligible.size() : 0);
  parallel_for(eligible.size(), [&](std::size_t i) {
    for (const auto& cand : solve_from_correspondence(eligible[i], cfg.solver)) {
      ++emitted[i];
      const auto [count, sum] = residuals.score(cand.transform, cfg.inlier_threshold);
      if (cfg.record_candidates) scores[i].push_back({cand.source, cand.sign_variant, count});
      const double agreement =
          eligible[i].patch_q.normal.dot(cand.transform.rotation() * eligible[i].patch_p.normal);
      Hypothesis h{true, count, sum, agreement, cand.source,
                   static_cast<std::size_t>(cand.sign_variant), cand.transform};
      if (better(h, best_per[i], tie)) best_per[i] = h;
    }
  });

  Hypothesis winner;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    report.candidates_evaluated += emitted[i];
    if (better(best_per[i], winner, tie)) winner = best_per[i];
  }
  if (cfg.record_candidates) {
    std::vector<CandidateScore> flat;
    for (auto& s : scores) flat.insert(flat.end(), s.begin(), s.end());
    report.per_candidate_scores = std::move(flat);
  }
  report.stage_timings["candidate_scoring"] = seconds_since(scoring_start);
  if (!winner.valid) throw NoEligibleCorrespondences();

  report.pre_lo_transform = winner.transform;
  report.best_transform = winner.transform;
  if (cfg.lo_iterations > 0) {
    const auto lo_start = Clock::now();
    report.best_transform = local_optimize_impl(winner.transform, corrs, residuals, patches, cfg);
    report.stage_timings["local_optimization"] = seconds_since(lo_start);
  }
  finalize(report, residuals, cfg);
  return report;
}

RegistrationReport qreg_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                 const PointCloud& target, const EstimatorConfig& cfg,
                                 const PatchConfig& patch_config) {
  const Enrichment enriched = enrich_correspondences(corrs, source, target, patch_config);
  RegistrationReport report = qreg_register(corrs, source, target, enriched.correspondences, cfg);
  report.patch_failures = enriched.failed;
  report.stage_timings["patch_fitting"] = enriched.seconds;
  return report;
}

RigidTransform local_optimize(const RigidTransform& T0, std::span<const Correspondence> corrs,
                              const PointCloud& source, const PointCloud& target,
                              std::span<const EnrichedCorrespondence> patches,
                              const EstimatorConfig& cfg) {
  cfg.validate();
  return local_optimize_impl(T0, corrs, Residuals(corrs, source, target), patches, cfg);
}

RegistrationReport ransac_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                   const PointCloud& target, std::size_t iterations,
                                   const EstimatorConfig& cfg,
                                   std::span<const EnrichedCorrespondence> lo_patches,
                                   bool local_optimization) {
  cfg.validate();
  if (corrs.size() < 3) throw InvalidArgument("ransac_register: needs at least 3 correspondences");
  if (iterations == 0) throw InvalidArgument("ransac_register: iterations must be positive");
  const Residuals residuals(corrs, source, target);
  RegistrationReport report;
  report.method = local_optimization ? "ransac_lo" : "ransac";

  const auto start = Clock::now();
  const std::size_t blocks = std::max<std::size_t>(1, std::min(thread_count(), iterations));
  const std::size_t per_block = (iterations + blocks - 1) / blocks;
  std::vector<Hypothesis> block_best(blocks);
  std::vector<std::size_t> block_evaluated(blocks, 0);

  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t n = residuals.size();
    std::array<Point3, 3> src;
    std::array<Point3, 3> dst;
    const std::array<double, 3> weights{1.0, 1.0, 1.0};
    const std::size_t end = std::min(iterations, (b + 1) * per_block);
    for (std::size_t it = b * per_block; it < end; ++it) {
      std::mt19937_64 rng(mix_seed(cfg.rng_seed, it));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (int draw = 0; draw < kMaxDrawsPerIteration; ++draw) {
        const std::size_t a = pick(rng);
        std::size_t c1 = pick(rng);
        while (c1 == a) c1 = pick(rng);
        std::size_t c2 = pick(rng);
        while (c2 == a || c2 == c1) c2 = pick(rng);
        for (std::size_t k = 0; k < 3; ++k) {
          const std::size_t idx = k == 0 ? a : (k == 1 ? c1 : c2);
          src[k] = residuals.src()[idx];
          dst[k] = residuals.dst()[idx];
        }
        RigidTransform T;
        try {
          T = kabsch_weighted(src, dst, weights);
        } catch (const DegenerateInput&) {
          continue;
        }
        ++block_evaluated[b];
        const auto [count, sum] = residuals.score(T, cfg.inlier_threshold);
        Hypothesis h{true, count, sum, 0.0, it, 0, T};
        if (better(h, block_best[b])) block_best[b] = h;
        break;
      }
    }
  });

  Hypothesis winner;
  for (std::size_t b = 0; b < blocks; ++b) {
    report.candidates_evaluated += block_evaluated[b];
    if (better(block_best[b], winner)) winner = block_best[b];
  }
  report.stage_timings["hypothesis_scoring"] = seconds_since(start);
  if (!winner.valid) throw DegenerateInput("ransac_register: every sample was degenerate");

  report.pre_lo_transform = winner.transform;
  report.best_transform = winner.transform;
  if (local_optimization && cfg.lo_iterations > 0) {
    const auto lo_start = Clock::now();
    report.best_transform =
        local_optimize_impl(winner.transform, corrs, residuals, lo_patches, cfg);
    report.stage_timings["local_optimization"] = seconds_since(lo_start);
  }
  finalize(report, residuals, cfg);
  return report;
}

RegistrationReport weighted_kabsch_register(std::span<const Correspondence> corrs,
                                            const PointCloud& source, const PointCloud& target,
                                            const EstimatorConfig& cfg) {
  cfg.validate();
  const Residuals residuals(corrs, source, target);
  std::vector<double> weights;
  weights.reserve(corrs.size());
  for (const auto& c : corrs) weights.push_back(c.score);

  RegistrationReport report;
  report.method = "kabsch_weighted";
  const auto start = Clock::now();
  report.best_transform = kabsch_weighted(residuals.src(), residuals.dst(), weights);
  report.pre_lo_transform = report.best_transform;
  report.candidates_evaluated = 1;
  report.stage_timings["kabsch"] = seconds_since(start);
  finalize(report, residuals, cfg);
  return report;
}

double pose_rmse(const RigidTransform& T, std::span<const Correspondence> corrs,
                 const PointCloud& source, const PointCloud& target) {
  if (corrs.empty()) throw InvalidArgument("pose_rmse: correspondence list is empty");
  validate_correspondences(corrs, source, target);
  double sum = 0.0;
  for (const auto& c : corrs) sum += (T(source[c.source_index]) - target[c.target_index]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(corrs.size()));
}

double pose_loss_term(double epsilon, double gamma, double score) {
  return 1.0 - std::min(epsilon, gamma) / gamma - score;
}

PoseLoss pose_loss(std::span<const EnrichedCorrespondence> enriched,
                   std::span<const Correspondence> corrs, const PointCloud& source,
                   const PointCloud& target, const EstimatorConfig& cfg) {
  cfg.validate();
  const Residuals residuals(corrs, source, target);
  PoseLoss loss;
  for (const auto& ec : enriched) {
    if (!ec.solver_eligible()) {
      ++loss.skipped;
      continue;
    }
    double epsilon = std::numeric_limits<double>::infinity();
    const auto candidates = solve_from_correspondence(ec, cfg.solver);
    const PoseCandidate* chosen = nullptr;
    std::size_t chosen_count = 0;
    for (const auto& cand : candidates) {
      const std::size_t count = residuals.score(cand.transform, cfg.inlier_threshold).first;
      if (!chosen || count > chosen_count) {
        chosen = &cand;
        chosen_count = count;
      }
    }
    if (chosen && !corrs.empty()) epsilon = pose_rmse(chosen->transform, corrs, source, target);
    loss.value += pose_loss_term(epsilon, cfg.gamma, ec.correspondence.score);
    ++loss.terms;
  }
  return loss;
}

}  // namespace qreg
