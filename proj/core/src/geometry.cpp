#include "qreg/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "qreg/errors.hpp"

namespace qreg {

namespace {

constexpr double kReprojectDrift = 1e-9;
constexpr double kRejectDrift = 1e-4;

}  // namespace

PointCloud::PointCloud(std::vector<Point3> points, std::vector<Vector3> normals)
    : points_(std::move(points)), normals_(std::move(normals)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!is_finite(points_[i])) {
      throw InvalidArgument("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  if (normals_.empty()) return;
  if (normals_.size() != points_.size()) {
    throw InvalidArgument("normal count does not match point count");
  }
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    const double n = normals_[i].norm();
    if (!std::isfinite(n) || n == 0.0) {
      throw InvalidArgument("normal " + std::to_string(i) + " is zero or non-finite");
    }
    if (std::abs(n - 1.0) > 1e-9) normals_[i] /= n;
  }
}

RigidTransform::RigidTransform(const Matrix3& rotation, const Vector3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation_.allFinite() || !translation_.allFinite()) {
    throw InvalidArgument("rigid transform has non-finite entries");
  }
  const double drift = orthonormality_drift(rotation_);
  if (drift > kRejectDrift || rotation_.determinant() <= 0.0) {
    throw InvalidArgument("matrix is not a proper rotation");
  }
  if (drift > kReprojectDrift || std::abs(rotation_.determinant() - 1.0) > kReprojectDrift) {
    rotation_ = project_to_rotation(rotation_);
  }
}

RigidTransform RigidTransform::from_matrix(const Matrix4& m) {
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw InvalidArgument("homogeneous transform must end with row (0, 0, 0, 1)");
  }
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Matrix4 RigidTransform::matrix() const {
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Point3 apply_transform(const RigidTransform& T, const Point3& p) { return T(p); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

RigidTransform invert(const RigidTransform& T) {
  const Matrix3 rt = T.rotation().transpose();
  return {rt, -(rt * T.translation())};
}

PointCloud transform_cloud(const RigidTransform& T, const PointCloud& cloud) {
  std::vector<Point3> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points()) pts.push_back(T(p));
  std::vector<Vector3> normals;
  normals.reserve(cloud.normals().size());
  for (const auto& n : cloud.normals()) normals.push_back(T.rotation() * n);
  return PointCloud(std::move(pts), std::move(normals));
}

double orthonormality_drift(const Matrix3& R) {
  return (R.transpose() * R - Matrix3::Identity()).cwiseAbs().maxCoeff();
}

Matrix3 project_to_rotation(const Matrix3& M) {
  Eigen::JacobiSVD<Matrix3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3& U = svd.matrixU();
  const Matrix3& V = svd.matrixV();
  Matrix3 D = Matrix3::Identity();
  if ((U * V.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  return U * D * V.transpose();
}

RigidTransform kabsch_weighted(std::span<const Point3> src, std::span<const Point3> dst,
                               std::span<const double> weights) {
  if (src.size() != dst.size() || src.size() != weights.size()) {
    throw InvalidArgument("kabsch_weighted: src, dst and weights must have equal length");
  }
  if (src.size() < 3) {
    throw InvalidArgument("kabsch_weighted: needs at least 3 point pairs");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument("kabsch_weighted: weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0.0) throw DegenerateInput("kabsch_weighted: all weights are zero");

  Vector3 src_mean = Vector3::Zero();
  Vector3 dst_mean = Vector3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    src_mean += w * src[i];
    dst_mean += w * dst[i];
  }

  Matrix3 H = Matrix3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    if (w == 0.0) continue;
    H += w * (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
  }

  Eigen::JacobiSVD<Matrix3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3& s = svd.singularValues();
  // Rank < 2 leaves the rotation about the dominant axis unconstrained.
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0)) {
    throw DegenerateInput("kabsch_weighted: point sets are collinear or coincident");
  }
  const Matrix3& U = svd.matrixU();
  const Matrix3& V = svd.matrixV();
  Matrix3 D = Matrix3::Identity();
  if ((V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Matrix3 R = V * D * U.transpose();
  return {R, dst_mean - R * src_mean};
}

void validate_correspondences(std::span<const Correspondence> corrs, const PointCloud& source,
                              const PointCloud& target) {
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs[i];
    if (c.source_index >= source.size() || c.target_index >= target.size()) {
      throw InvalidArgument("correspondence " + std::to_string(i) + " index out of range");
    }
    if (!(c.score >= 0.0 && c.score <= 1.0)) {
      throw InvalidArgument("correspondence " + std::to_string(i) + " score outside [0, 1]");
    }
  }
}

}  // namespace qreg
