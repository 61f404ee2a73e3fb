#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

namespace qreg {

using Point3 = Eigen::Vector3d;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;

inline bool is_finite(const Eigen::Vector3d& v) { return v.allFinite(); }

/// Ordered set of 3D points with optional per-point unit normals.
///
/// Points are never reordered after construction. Non-finite coordinates are
/// rejected. Normals whose length deviates from one by more than 1e-9 are
/// renormalized; zero or non-finite normals are rejected.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points, std::vector<Vector3> normals = {});

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  bool has_normals() const noexcept { return !normals_.empty(); }

  const Point3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Point3>& points() const noexcept { return points_; }
  const std::vector<Vector3>& normals() const noexcept { return normals_; }

 private:
  std::vector<Point3> points_;
  std::vector<Vector3> normals_;
};

/// Proper rigid motion x -> R x + t.
///
/// The constructor accepts rotations whose orthonormality drift is at most
/// 1e-4 and re-projects onto SO(3) whenever the drift exceeds 1e-9. Anything
/// further from SO(3), or with negative determinant, throws InvalidArgument.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}
  RigidTransform(const Matrix3& rotation, const Vector3& translation);

  static RigidTransform identity() { return {}; }
  /// Builds from a homogeneous 4x4 matrix; the last row must be (0, 0, 0, 1).
  static RigidTransform from_matrix(const Matrix4& m);

  const Matrix3& rotation() const noexcept { return rotation_; }
  const Vector3& translation() const noexcept { return translation_; }
  Matrix4 matrix() const;

  Point3 operator()(const Point3& p) const { return rotation_ * p + translation_; }

  friend bool operator==(const RigidTransform& a, const RigidTransform& b) {
    return a.rotation_ == b.rotation_ && a.translation_ == b.translation_;
  }

 private:
  Matrix3 rotation_;
  Vector3 translation_;
};

/// A putative match between P[source_index] and Q[target_index].
struct Correspondence {
  std::size_t source_index = 0;
  std::size_t target_index = 0;
  double score = 1.0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

Point3 apply_transform(const RigidTransform& T, const Point3& p);

/// (a ∘ b)(p) = a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform invert(const RigidTransform& T);

PointCloud transform_cloud(const RigidTransform& T, const PointCloud& cloud);

/// max |RᵀR - I| entry.
double orthonormality_drift(const Matrix3& R);

/// Nearest rotation in the Frobenius sense (SVD with determinant correction).
Matrix3 project_to_rotation(const Matrix3& M);

/// Weighted Kabsch-Umeyama: minimizes Σ wᵢ ‖R srcᵢ + t − dstᵢ‖² over proper
/// rotations. Throws DegenerateInput when the weighted cross-covariance has
/// rank < 2 or all weights vanish, InvalidArgument on size/sign errors.
RigidTransform kabsch_weighted(std::span<const Point3> src, std::span<const Point3> dst,
                               std::span<const double> weights);

/// Throws InvalidArgument when any index is out of range or a score lies outside [0, 1].
void validate_correspondences(std::span<const Correspondence> corrs, const PointCloud& source,
                              const PointCloud& target);

}  // namespace qreg
