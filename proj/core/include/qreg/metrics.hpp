#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qreg/geometry.hpp"

namespace qreg {

/// Geodesic rotation distance in degrees, arccos(clamp((tr(R_estᵀ R_gt) − 1) / 2)),
/// evaluated through atan2 for accuracy at small angles.
double rre(const Matrix3& R_est, const Matrix3& R_gt);
inline double rre(const RigidTransform& est, const RigidTransform& gt) {
  return rre(est.rotation(), gt.rotation());
}

/// ‖t_est − t_gt‖₂ (unsquared).
double rte(const Vector3& t_est, const Vector3& t_gt);
inline double rte(const RigidTransform& est, const RigidTransform& gt) {
  return rte(est.translation(), gt.translation());
}

/// RMSE of ground-truth correspondences under `est`.
double rmse_gt_correspondences(const RigidTransform& est, std::span<const Correspondence> gt_corrs,
                               const PointCloud& source, const PointCloud& target);

/// Fraction of pairs with rmse < threshold.
double recall_3dmatch(std::span<const double> pair_rmse, double threshold = 0.2);

/// Fraction of pairs with rre < rre_max and rte < rte_max.
double recall_kitti(std::span<const double> rre_deg, std::span<const double> rte_units,
                    double rre_max = 5.0, double rte_max = 2.0);

/// Mean squared distance from T(P) to the nearest point of Q_raw plus mean
/// squared distance from Q to the nearest point of T(P_raw).
double chamfer_modified(const PointCloud& P, const PointCloud& P_raw, const PointCloud& Q,
                        const PointCloud& Q_raw, const RigidTransform& T);

enum class Protocol { ThreeDMatch, Kitti, ModelNet };

Protocol parse_protocol(std::string_view name);
std::string_view to_string(Protocol p);

struct PairEvaluation {
  double rre_degrees = 0.0;
  double rte_units = 0.0;
  std::optional<double> rmse_units;  ///< needs ground-truth correspondences
  std::optional<double> chamfer;     ///< ModelNet protocol only
  bool registered_3dmatch = false;
  bool registered_kitti = false;
};

struct EvaluationThresholds {
  double rmse_max = 0.2;
  double rre_max = 5.0;
  double rte_max = 2.0;
};

/// registered_3dmatch needs rmse; without gt correspondences it stays false.
PairEvaluation evaluate_pair(const RigidTransform& est, const RigidTransform& gt,
                             std::optional<double> rmse,
                             const EvaluationThresholds& thresholds = {});

struct BenchmarkSummary {
  std::size_t pairs = 0;
  double registration_recall = 0.0;
  double median_rre = 0.0;  ///< over registered pairs
  double median_rte = 0.0;  ///< over registered pairs
  double mean_rre = 0.0;    ///< over all pairs
  double mean_rte = 0.0;
  double mean_rmse = 0.0;   ///< over pairs that carry an rmse
};

/// Recall uses the protocol's registration flag: rmse for 3DMatch and
/// ModelNet, joint RRE/RTE for KITTI.
BenchmarkSummary summarize(std::span<const PairEvaluation> pairs, Protocol protocol);

double median(std::vector<double> values);

}  // namespace qreg
