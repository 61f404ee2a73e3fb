#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qreg/geometry.hpp"
#include "qreg/solver.hpp"

namespace qreg {

struct EstimatorConfig {
  double inlier_threshold = 0.1;
  int lo_iterations = 10;
  double lo_sample_fraction = 0.5;
  double lo_normal_angle_max = 30.0;  ///< degrees
  bool lo_normal_gate = true;
  SolverConfig solver;
  std::uint64_t rng_seed = 0;  ///< RANSAC sampling only
  double gamma = 0.2;          ///< pose-loss clamp threshold
  bool record_candidates = false;

  /// Throws InvalidArgument when a threshold is non-positive or the fraction leaves (0, 1].
  void validate() const;
};

struct InlierSet {
  std::vector<std::size_t> indices;  ///< ascending
  double residual_sum = 0.0;         ///< Σ ‖T(p) − q‖ over the inliers

  std::size_t count() const noexcept { return indices.size(); }
  double mean_residual() const {
    return indices.empty() ? 0.0 : residual_sum / static_cast<double>(indices.size());
  }
};

struct CandidateScore {
  std::size_t correspondence = 0;
  int sign_variant = 0;
  std::size_t inliers = 0;
};

struct RegistrationReport {
  std::string method;
  RigidTransform best_transform;
  RigidTransform pre_lo_transform;
  std::vector<std::size_t> inlier_indices;
  std::size_t inlier_count = 0;
  std::size_t candidates_evaluated = 0;
  std::size_t eligible_correspondences = 0;
  std::size_t patch_failures = 0;
  std::map<std::string, double> stage_timings;  ///< seconds
  std::optional<std::vector<CandidateScore>> per_candidate_scores;
  EstimatorConfig config;
};

/// Correspondences with ‖T(pᵢ) − qᵢ‖ <= threshold, ascending by index.
InlierSet count_inliers(const RigidTransform& T, std::span<const Correspondence> corrs,
                        const PointCloud& source, const PointCloud& target, double threshold);

/// Exhaustive single-correspondence search: every candidate of every
/// eligible enriched correspondence is scored by inlier count; ties go to
/// the smaller mean inlier residual (equal within 1e-9 · inlier_threshold),
/// then the better agreement n_qᵀ R n_p of the generating match's quadric
/// normals, then the smaller correspondence index, then the smaller sign variant. The winner is refined by local_optimize
/// when cfg.lo_iterations > 0. Throws NoEligibleCorrespondences when no
/// candidate survives filtering and the scale gate.
RegistrationReport qreg_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                 const PointCloud& target,
                                 std::span<const EnrichedCorrespondence> patches,
                                 const EstimatorConfig& cfg);

/// Patch fitting followed by qreg_register; stage timings include "patch_fitting".
RegistrationReport qreg_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                 const PointCloud& target, const EstimatorConfig& cfg,
                                 const PatchConfig& patch_config = {});

/// Inlier re-sampling and score-weighted re-fitting with a quadric-normal
/// consistency gate. Never returns a transform with fewer inliers than T0.
RigidTransform local_optimize(const RigidTransform& T0, std::span<const Correspondence> corrs,
                              const PointCloud& source, const PointCloud& target,
                              std::span<const EnrichedCorrespondence> patches,
                              const EstimatorConfig& cfg);

/// Seeded 3-point RANSAC with Kabsch hypotheses. Iteration i draws from its
/// own stream mix_seed(rng_seed, i), so results are independent of the
/// thread count. Degenerate samples are re-drawn up to 10 times each.
RegistrationReport ransac_register(std::span<const Correspondence> corrs, const PointCloud& source,
                                   const PointCloud& target, std::size_t iterations,
                                   const EstimatorConfig& cfg,
                                   std::span<const EnrichedCorrespondence> lo_patches = {},
                                   bool local_optimization = false);

/// Score-weighted Kabsch over all correspondences.
RegistrationReport weighted_kabsch_register(std::span<const Correspondence> corrs,
                                            const PointCloud& source, const PointCloud& target,
                                            const EstimatorConfig& cfg);

/// √((1/|C|) Σ ‖T(pᵢ) − qᵢ‖²). Throws InvalidArgument on an empty list.
double pose_rmse(const RigidTransform& T, std::span<const Correspondence> corrs,
                 const PointCloud& source, const PointCloud& target);

/// One term of the pose loss: 1 − min(ε, γ)/γ − s.
double pose_loss_term(double epsilon, double gamma, double score);

struct PoseLoss {
  double value = 0.0;
  std::size_t terms = 0;
  std::size_t skipped = 0;  ///< ineligible correspondences, contributing 0
};

/// Σ over eligible correspondences of pose_loss_term(ε(T_pq), γ, s), where
/// T_pq is the lowest-sign-variant candidate with the most inliers over C
/// and ε is pose_rmse over C. A correspondence whose candidates are all
/// rejected by the scale gate contributes with ε = ∞ (term = −s).
PoseLoss pose_loss(std::span<const EnrichedCorrespondence> enriched,
                   std::span<const Correspondence> corrs, const PointCloud& source,
                   const PointCloud& target, const EstimatorConfig& cfg);

}  // namespace qreg
