#include "qreg/solver.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

#include "qreg/errors.hpp"
#include "qreg/spatial.hpp"

namespace qreg {

Matrix3 sign_variant_matrix(int variant) {
  switch (variant) {
    case 0:
      return Vector3(1, 1, 1).asDiagonal();
    case 1:
      return Vector3(1, -1, -1).asDiagonal();
    case 2:
      return Vector3(-1, 1, -1).asDiagonal();
    case 3:
      return Vector3(-1, -1, 1).asDiagonal();
    default:
      throw InvalidArgument("sign variant must be in [0, 3]");
  }
}

std::vector<PoseCandidate> solve_from_correspondence(const EnrichedCorrespondence& ec,
                                                     const SolverConfig& config) {
  if (!ec.solver_eligible()) throw NotDistinct();

  const auto& lp = ec.patch_p.frame.axis_lengths;
  const auto& lq = ec.patch_q.frame.axis_lengths;
  std::array<double, 3> ratio{};
  double log_sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    ratio[i] = lq[i] / lp[i];
    log_sum += std::log(ratio[i]);
  }
  const double scale = std::exp(log_sum / 3.0);
  if (!(scale >= config.scale_min && scale <= config.scale_max)) return {};
  for (double r : ratio) {
    if (std::abs(r - scale) > config.axis_ratio_tolerance * scale) return {};
  }

  const Matrix3& vp = ec.patch_p.frame.axes;
  const Matrix3& vq = ec.patch_q.frame.axes;
  const Point3& p = ec.patch_p.anchor;
  const Point3& q = ec.patch_q.anchor;

  std::vector<PoseCandidate> out;
  out.reserve(4);
  for (int s = 0; s < 4; ++s) {
    // The constructor re-projects onto SO(3) if round-off drift exceeds 1e-9.
    const RigidTransform T(vq * sign_variant_matrix(s) * vp.transpose(), Vector3::Zero());
    out.push_back({RigidTransform(T.rotation(), q - T.rotation() * p), scale, ec.index, s});
  }
  return out;
}

std::vector<EnrichedCorrespondence> filter_solver_eligible(
    std::span<const EnrichedCorrespondence> ecs) {
  std::vector<EnrichedCorrespondence> out;
  for (const auto& ec : ecs) {
    if (ec.solver_eligible()) out.push_back(ec);
  }
  return out;
}

namespace {

/// Fits each distinct point index once; result maps point index -> slot.
struct PatchCache {
  std::vector<std::size_t> points;
  std::unordered_map<std::size_t, std::size_t> slot;
  std::vector<std::optional<QuadricPatch>> patches;

  void add(std::size_t point) {
    if (slot.emplace(point, points.size()).second) points.push_back(point);
  }
  void fit(const PointCloud& cloud, const PatchConfig& config) {
    if (points.empty()) return;
    const KdTree index(cloud);
    patches = build_patches(cloud, index, points, config);
  }
  const std::optional<QuadricPatch>& at(std::size_t point) const { return patches[slot.at(point)]; }
};

}  // namespace

Enrichment enrich_correspondences(std::span<const Correspondence> corrs, const PointCloud& source,
                                  const PointCloud& target, const PatchConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  validate_correspondences(corrs, source, target);

  PatchCache src_cache;
  PatchCache dst_cache;
  for (const auto& c : corrs) {
    src_cache.add(c.source_index);
    dst_cache.add(c.target_index);
  }
  src_cache.fit(source, config);
  dst_cache.fit(target, config);

  Enrichment result;
  result.correspondences.reserve(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& pp = src_cache.at(corrs[i].source_index);
    const auto& pq = dst_cache.at(corrs[i].target_index);
    if (!pp || !pq) {
      ++result.failed;
      continue;
    }
    result.correspondences.push_back({i, corrs[i], *pp, *pq});
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace qreg
