#include "qreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qreg/errors.hpp"
#include "qreg/estimator.hpp"
#include "qreg/spatial.hpp"

namespace qreg {

double rre(const Matrix3& R_est, const Matrix3& R_gt) {
  // Same angle as the clamped arccos form, but well conditioned near 0 and 180.
  const Matrix3 D = R_est.transpose() * R_gt;
  const double c = std::clamp((D.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vector3 w(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return std::atan2(0.5 * w.norm(), c) * 180.0 / std::numbers::pi;
}

double rte(const Vector3& t_est, const Vector3& t_gt) { return (t_est - t_gt).norm(); }

double rmse_gt_correspondences(const RigidTransform& est, std::span<const Correspondence> gt_corrs,
                               const PointCloud& source, const PointCloud& target) {
  return pose_rmse(est, gt_corrs, source, target);
}

double recall_3dmatch(std::span<const double> pair_rmse, double threshold) {
  if (pair_rmse.empty()) return 0.0;
  const auto hits = std::count_if(pair_rmse.begin(), pair_rmse.end(),
                                  [&](double r) { return r < threshold; });
  return static_cast<double>(hits) / static_cast<double>(pair_rmse.size());
}

double recall_kitti(std::span<const double> rre_deg, std::span<const double> rte_units,
                    double rre_max, double rte_max) {
  if (rre_deg.size() != rte_units.size()) {
    throw InvalidArgument("recall_kitti: rre and rte lists differ in length");
  }
  if (rre_deg.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rre_deg.size(); ++i) {
    if (rre_deg[i] < rre_max && rte_units[i] < rte_max) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rre_deg.size());
}

namespace {

double mean_nearest_squared(const std::vector<Point3>& queries, const KdTree& tree) {
  double sum = 0.0;
  for (const auto& q : queries) {
    const double d = tree.knn(q, 1).front().distance;
    sum += d * d;
  }
  return sum / static_cast<double>(queries.size());
}

}  // namespace

double chamfer_modified(const PointCloud& P, const PointCloud& P_raw, const PointCloud& Q,
                        const PointCloud& Q_raw, const RigidTransform& T) {
  if (P.empty() || Q.empty() || P_raw.empty() || Q_raw.empty()) throw EmptyCloud();
  const KdTree q_raw_tree(Q_raw);
  const KdTree p_raw_tree(transform_cloud(T, P_raw));
  return mean_nearest_squared(transform_cloud(T, P).points(), q_raw_tree) +
         mean_nearest_squared(Q.points(), p_raw_tree);
}

Protocol parse_protocol(std::string_view name) {
  if (name == "threedmatch" || name == "3dmatch") return Protocol::ThreeDMatch;
  if (name == "kitti") return Protocol::Kitti;
  if (name == "modelnet") return Protocol::ModelNet;
  throw InvalidArgument("unknown protocol '" + std::string(name) + "'");
}

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::ThreeDMatch:
      return "threedmatch";
    case Protocol::Kitti:
      return "kitti";
    case Protocol::ModelNet:
      return "modelnet";
  }
  return "unknown";
}

PairEvaluation evaluate_pair(const RigidTransform& est, const RigidTransform& gt,
                             std::optional<double> rmse, const EvaluationThresholds& thresholds) {
  PairEvaluation e;
  e.rre_degrees = rre(est, gt);
  e.rte_units = rte(est, gt);
  e.rmse_units = rmse;
  e.registered_3dmatch = rmse && *rmse < thresholds.rmse_max;
  e.registered_kitti = e.rre_degrees < thresholds.rre_max && e.rte_units < thresholds.rte_max;
  return e;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BenchmarkSummary summarize(std::span<const PairEvaluation> pairs, Protocol protocol) {
  BenchmarkSummary s;
  s.pairs = pairs.size();
  if (pairs.empty()) return s;

  std::vector<double> reg_rre;
  std::vector<double> reg_rte;
  std::size_t registered = 0;
  std::size_t with_rmse = 0;
  for (const auto& p : pairs) {
    const bool ok = protocol == Protocol::Kitti ? p.registered_kitti : p.registered_3dmatch;
    if (ok) {
      ++registered;
      reg_rre.push_back(p.rre_degrees);
      reg_rte.push_back(p.rte_units);
    }
    s.mean_rre += p.rre_degrees;
    s.mean_rte += p.rte_units;
    if (p.rmse_units) {
      s.mean_rmse += *p.rmse_units;
      ++with_rmse;
    }
  }
  const auto n = static_cast<double>(pairs.size());
  s.registration_recall = static_cast<double>(registered) / n;
  s.median_rre = median(reg_rre);
  s.median_rte = median(reg_rte);
  s.mean_rre /= n;
  s.mean_rte /= n;
  if (with_rmse > 0) s.mean_rmse /= static_cast<double>(with_rmse);
  return s;
}

}  // namespace qreg
