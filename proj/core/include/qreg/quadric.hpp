#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qreg/geometry.hpp"
#include "qreg/spatial.hpp"

namespace qreg {

/// Implicit quadric p̂ᵀ Q p̂ = 0 with
///
///       | A D E G |
///   Q = | D B F H |
///       | E F C I |
///       | G H I J |
///
/// Fitted quadrics are normalized so that A + B + C = -3.
struct QuadricCoefficients {
  double A = 0, B = 0, C = 0, D = 0, E = 0, F = 0, G = 0, H = 0, I = 0, J = 0;

  Matrix4 matrix() const;
  Matrix3 quadratic_block() const;
  Vector3 linear() const { return {G, H, I}; }
  std::array<double, 10> as_array() const { return {A, B, C, D, E, F, G, H, I, J}; }
  double norm() const;

  /// p̂ᵀ Q p̂.
  double evaluate(const Point3& p) const;
  /// ∇(p̂ᵀ Q p̂) = 2 (Q₃ₓ₃ p + (G, H, I)ᵀ).
  Vector3 gradient(const Point3& p) const;

  /// Same surface expressed in coordinates x' = x - offset.
  QuadricCoefficients shifted(const Vector3& offset) const;
  /// Coefficients divided by their 2-norm; the zero set is unchanged.
  QuadricCoefficients normalized() const;
};

enum class Degeneracy { Distinct, TwoEqual, AllEqual };

std::string_view to_string(Degeneracy d);

/// Principal axes of a fitted quadric, sorted by descending axis length.
struct LocalFrame {
  Matrix3 axes = Matrix3::Identity();       ///< columns v1, v2, v3; right-handed
  std::array<double, 3> axis_lengths{};     ///< l1 >= l2 >= l3 > 0
  std::array<double, 3> eigenvalues{};      ///< λ matching axis order, lᵢ = 1/√|λᵢ|
};

struct QuadricPatch {
  std::size_t point_index = 0;
  Point3 anchor = Point3::Zero();
  QuadricCoefficients coefficients;
  LocalFrame frame;
  Vector3 normal = Vector3::UnitZ();
  Degeneracy degeneracy = Degeneracy::AllEqual;
};

/// Least-squares quadric through `anchor` fitted to `neighborhood`.
///
/// The system is solved in anchor-centered, RMS-radius-scaled coordinates,
/// where passing through the anchor means J = 0, leaving eight unknowns
/// (A', B', D, E, F, G, H, I). The result is expressed in the input frame.
/// Throws TooFewPoints (< 8 points) or SingularSystem (normal matrix
/// condition number above 1e12).
QuadricCoefficients fit_quadric(const Point3& anchor, std::span<const Point3> neighborhood);

/// Eigen-decomposition of P = Q₃ₓ₃ · (‖Q₃ₓ₃‖_F / √3) / ‖½∇(p̂ᵀQp̂)(anchor)‖².
///
/// P has units of 1/length² and does not change when all coefficients are
/// multiplied by a constant, so axis lengths scale with the cloud (a sphere
/// of radius r yields lᵢ = r) and are invariant to rigid motion. Throws
/// DegenerateQuadric on a vanishing gradient or an eigenvalue with
/// |λ| <= 1e-12 · max|λ|.
LocalFrame extract_frame(const QuadricCoefficients& coeffs, const Point3& anchor);

/// Distinct iff every pairwise gap |lᵢ - lⱼ| / l_max exceeds tol; AllEqual
/// iff none does; TwoEqual otherwise. Input order does not matter.
Degeneracy classify_degeneracy(std::array<double, 3> axis_lengths, double tol = 1e-3);
inline Degeneracy classify_degeneracy(const LocalFrame& frame, double tol = 1e-3) {
  return classify_degeneracy(frame.axis_lengths, tol);
}

/// Unit surface normal at `at`. With `away_from` the sign makes the normal
/// point away from that point; without it, away from the quadric center when
/// the quadratic block is invertible. Throws ZeroGradient.
Vector3 quadric_normal(const QuadricCoefficients& coeffs, const Point3& at,
                       std::optional<Point3> away_from = std::nullopt);

struct PatchConfig {
  std::size_t neighbors = 50;
  double degeneracy_tolerance = 1e-3;
};

/// knn -> fit_quadric -> extract_frame -> classify_degeneracy -> quadric_normal.
/// Any fitting error is rethrown as PatchFailure carrying `point_index`.
QuadricPatch build_patch(const PointCloud& cloud, const KdTree& index, std::size_t point_index,
                         const PatchConfig& config = {});

/// Patches for many points, in parallel. Failed fits come back empty.
std::vector<std::optional<QuadricPatch>> build_patches(const PointCloud& cloud,
                                                       const KdTree& index,
                                                       std::span<const std::size_t> point_indices,
                                                       const PatchConfig& config = {});

}  // namespace qreg
