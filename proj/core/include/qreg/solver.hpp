#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "qreg/geometry.hpp"
#include "qreg/quadric.hpp"

namespace qreg {

/// A correspondence equipped with the local quadric patches at both ends.
struct EnrichedCorrespondence {
  std::size_t index = 0;  ///< position in the original correspondence list
  Correspondence correspondence;
  QuadricPatch patch_p;
  QuadricPatch patch_q;

  bool solver_eligible() const {
    return patch_p.degeneracy == Degeneracy::Distinct && patch_q.degeneracy == Degeneracy::Distinct;
  }
};

struct PoseCandidate {
  RigidTransform transform;
  double scale_estimate = 1.0;
  std::size_t source = 0;  ///< correspondence index
  int sign_variant = 0;    ///< 0..3, see sign_variant_matrix()
};

struct SolverConfig {
  double scale_min = 0.9;
  double scale_max = 1.1;
  /// Maximum relative deviation of any per-axis length ratio from their geometric mean.
  double axis_ratio_tolerance = 0.1;
};

/// The four proper axis sign flips: I, diag(1,-1,-1), diag(-1,1,-1), diag(-1,-1,1).
Matrix3 sign_variant_matrix(int variant);

/// Rigid pose from one correspondence whose two patches have distinct axis
/// lengths. Axes are matched by length order; the eigenvector sign ambiguity
/// is enumerated, giving R = V_q S V_pᵀ and t = q - R p for each proper S.
/// Returns no candidates when the implied uniform scale leaves
/// [scale_min, scale_max] or the per-axis ratios disagree. Throws NotDistinct.
std::vector<PoseCandidate> solve_from_correspondence(const EnrichedCorrespondence& ec,
                                                     const SolverConfig& config = {});

/// Keeps the correspondences whose two patches are both Distinct.
std::vector<EnrichedCorrespondence> filter_solver_eligible(
    std::span<const EnrichedCorrespondence> ecs);

struct Enrichment {
  std::vector<EnrichedCorrespondence> correspondences;  ///< fits that succeeded at both ends
  std::size_t failed = 0;                               ///< correspondences dropped on PatchFailure
  double seconds = 0.0;
};

/// Fits patches at every referenced point (each point once) and attaches them
/// to the correspondences. Builds the two spatial indices internally.
Enrichment enrich_correspondences(std::span<const Correspondence> corrs, const PointCloud& source,
                                  const PointCloud& target, const PatchConfig& config = {});

}  // namespace qreg
