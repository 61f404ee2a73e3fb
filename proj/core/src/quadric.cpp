#include "qreg/quadric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "qreg/errors.hpp"
#include "qreg/parallel.hpp"

namespace qreg {

namespace {

using Vector8 = Eigen::Matrix<double, 8, 1>;
using Matrix8 = Eigen::Matrix<double, 8, 8>;

constexpr std::size_t kUnknowns = 8;
constexpr double kMaxCondition = 1e12;
constexpr double kRelativeEigenFloor = 1e-12;

}  // namespace

Matrix4 QuadricCoefficients::matrix() const {
  Matrix4 q;
  q << A, D, E, G,  //
      D, B, F, H,   //
      E, F, C, I,   //
      G, H, I, J;
  return q;
}

Matrix3 QuadricCoefficients::quadratic_block() const {
  Matrix3 m;
  m << A, D, E,  //
      D, B, F,   //
      E, F, C;
  return m;
}

double QuadricCoefficients::norm() const {
  const auto a = as_array();
  return std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
}

double QuadricCoefficients::evaluate(const Point3& p) const {
  return p.dot(quadratic_block() * p) + 2.0 * linear().dot(p) + J;
}

Vector3 QuadricCoefficients::gradient(const Point3& p) const {
  return 2.0 * (quadratic_block() * p + linear());
}

QuadricCoefficients QuadricCoefficients::shifted(const Vector3& offset) const {
  QuadricCoefficients out = *this;
  const Vector3 g = quadratic_block() * offset + linear();
  out.G = g.x();
  out.H = g.y();
  out.I = g.z();
  out.J = evaluate(offset);
  return out;
}

QuadricCoefficients QuadricCoefficients::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) return *this;
  QuadricCoefficients out = *this;
  for (double* v : {&out.A, &out.B, &out.C, &out.D, &out.E, &out.F, &out.G, &out.H, &out.I, &out.J}) {
    *v /= n;
  }
  return out;
}

std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::Distinct:
      return "distinct";
    case Degeneracy::TwoEqual:
      return "two_equal";
    case Degeneracy::AllEqual:
      return "all_equal";
  }
  return "unknown";
}

QuadricCoefficients fit_quadric(const Point3& anchor, std::span<const Point3> neighborhood) {
  if (neighborhood.size() < kUnknowns) throw TooFewPoints(neighborhood.size(), kUnknowns);
  if (!is_finite(anchor)) throw InvalidArgument("fit_quadric: anchor is not finite");

  double sum_sq = 0.0;
  for (const auto& p : neighborhood) {
    if (!is_finite(p)) throw InvalidArgument("fit_quadric: neighborhood point is not finite");
    sum_sq += (p - anchor).squaredNorm();
  }
  const double scale = std::sqrt(sum_sq / static_cast<double>(neighborhood.size()));
  if (!(scale > 0.0)) throw SingularSystem("fit_quadric: neighborhood collapses onto the anchor");

  Matrix8 normal = Matrix8::Zero();
  Vector8 rhs = Vector8::Zero();
  for (const auto& p : neighborhood) {
    const Vector3 v = (p - anchor) / scale;
    const double x = v.x(), y = v.y(), z = v.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    Vector8 k;
    k << xx + yy - 2.0 * zz, xx + zz - 2.0 * yy, 2.0 * x * y, 2.0 * x * z, 2.0 * y * z, 2.0 * x,
        2.0 * y, 2.0 * z;
    normal.selfadjointView<Eigen::Lower>().rankUpdate(k);
    rhs += k * (xx + yy + zz);
  }
  normal = normal.selfadjointView<Eigen::Lower>();

  const Vector8 spectrum = Eigen::SelfAdjointEigenSolver<Matrix8>(normal, Eigen::EigenvaluesOnly)
                               .eigenvalues();
  const double lo = spectrum(0);
  const double hi = spectrum(kUnknowns - 1);
  if (!(lo > 0.0) || hi / lo > kMaxCondition) {
    throw SingularSystem("fit_quadric: normal equations are rank deficient or ill-conditioned");
  }
  const Vector8 w = normal.ldlt().solve(rhs);

  // k·w = d  <=>  p̂ᵀQp̂ = 0 with A = A'+B'-1, B = A'-2B'-1, C = -3-A-B.
  QuadricCoefficients local;
  local.A = w(0) + w(1) - 1.0;
  local.B = w(0) - 2.0 * w(1) - 1.0;
  local.C = -3.0 - local.A - local.B;
  local.D = w(2);
  local.E = w(3);
  local.F = w(4);
  local.G = w(5) * scale;
  local.H = w(6) * scale;
  local.I = w(7) * scale;
  local.J = 0.0;
  return local.shifted(-anchor);
}

LocalFrame extract_frame(const QuadricCoefficients& coeffs, const Point3& anchor) {
  const Matrix3 block = coeffs.quadratic_block();
  const double gradient_sq = (block * anchor + coeffs.linear()).squaredNorm();
  if (!(gradient_sq > 0.0) || !std::isfinite(gradient_sq)) {
    throw DegenerateQuadric("extract_frame: quadric gradient vanishes at the anchor");
  }
  // ‖M‖ / ‖∇‖² cancels any overall factor on the coefficients and leaves 1/length².
  const Matrix3 P = block * (block.norm() / std::sqrt(3.0)) / gradient_sq;
  Eigen::SelfAdjointEigenSolver<Matrix3> eig(P);
  if (eig.info() != Eigen::Success) throw DegenerateQuadric("extract_frame: eigen solver failed");
  const Vector3 lambda = eig.eigenvalues();
  const double largest = lambda.cwiseAbs().maxCoeff();
  if (!(largest > 0.0) || lambda.cwiseAbs().minCoeff() <= kRelativeEigenFloor * largest) {
    throw DegenerateQuadric("extract_frame: an axis length is unbounded");
  }

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(lambda(a)) < std::abs(lambda(b)); });

  LocalFrame frame;
  for (int i = 0; i < 3; ++i) {
    const int src = order[static_cast<std::size_t>(i)];
    frame.axes.col(i) = eig.eigenvectors().col(src);
    frame.eigenvalues[static_cast<std::size_t>(i)] = lambda(src);
    frame.axis_lengths[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(std::abs(lambda(src)));
  }
  if (frame.axes.determinant() < 0.0) frame.axes.col(2) *= -1.0;
  return frame;
}

Degeneracy classify_degeneracy(std::array<double, 3> l, double tol) {
  std::sort(l.begin(), l.end(), std::greater<>());
  const double g12 = (l[0] - l[1]) / l[0];
  const double g23 = (l[1] - l[2]) / l[0];
  const double g13 = (l[0] - l[2]) / l[0];
  if (g12 > tol && g23 > tol && g13 > tol) return Degeneracy::Distinct;
  if (g12 <= tol && g23 <= tol && g13 <= tol) return Degeneracy::AllEqual;
  return Degeneracy::TwoEqual;
}

Vector3 quadric_normal(const QuadricCoefficients& coeffs, const Point3& at,
                       std::optional<Point3> away_from) {
  const Matrix3 block = coeffs.quadratic_block();
  Vector3 grad = coeffs.gradient(at);
  const double magnitude = grad.norm();
  const double reference = block.norm() * at.norm() + coeffs.linear().norm();
  if (!(magnitude > 1e-14 * reference) || !std::isfinite(magnitude)) {
    throw ZeroGradient("quadric_normal: gradient vanishes");
  }
  grad /= magnitude;

  if (!away_from) {
    Eigen::FullPivLU<Matrix3> lu(block);
    if (lu.isInvertible()) away_from = Point3(-lu.solve(coeffs.linear()));
  }
  if (away_from && grad.dot(at - *away_from) < 0.0) grad = -grad;
  return grad;
}

QuadricPatch build_patch(const PointCloud& cloud, const KdTree& index, std::size_t point_index,
                         const PatchConfig& config) {
  if (point_index >= cloud.size()) throw InvalidArgument("build_patch: point index out of range");
  const Point3& anchor = cloud[point_index];
  const auto neighbors = index.knn(anchor, config.neighbors);

  std::vector<Point3> pts;
  pts.reserve(neighbors.size());
  Point3 centroid = Point3::Zero();
  for (const auto& n : neighbors) {
    pts.push_back(index.point(n.index));
    centroid += pts.back();
  }
  centroid /= static_cast<double>(pts.size());

  using Cause = PatchFailure::Cause;
  QuadricPatch patch;
  patch.point_index = point_index;
  patch.anchor = anchor;
  try {
    patch.coefficients = fit_quadric(anchor, pts);
    patch.frame = extract_frame(patch.coefficients, anchor);
    patch.normal = quadric_normal(patch.coefficients, anchor, centroid);
  } catch (const TooFewPoints& e) {
    throw PatchFailure(point_index, Cause::TooFewPoints, e.what());
  } catch (const SingularSystem& e) {
    throw PatchFailure(point_index, Cause::SingularSystem, e.what());
  } catch (const DegenerateQuadric& e) {
    throw PatchFailure(point_index, Cause::DegenerateQuadric, e.what());
  } catch (const ZeroGradient& e) {
    throw PatchFailure(point_index, Cause::ZeroGradient, e.what());
  }
  patch.degeneracy = classify_degeneracy(patch.frame, config.degeneracy_tolerance);
  return patch;
}

std::vector<std::optional<QuadricPatch>> build_patches(const PointCloud& cloud,
                                                       const KdTree& index,
                                                       std::span<const std::size_t> point_indices,
                                                       const PatchConfig& config) {
  std::vector<std::optional<QuadricPatch>> out(point_indices.size());
  parallel_for(point_indices.size(), [&](std::size_t i) {
    try {
      out[i] = build_patch(cloud, index, point_indices[i], config);
    } catch (const PatchFailure&) {
      out[i].reset();
    }
  });
  return out;
}

}  // namespace qreg
