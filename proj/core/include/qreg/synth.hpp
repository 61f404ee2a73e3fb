#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qreg/geometry.hpp"

namespace qreg {

enum class SurfaceKind { Ellipsoid, Sphere, Saddle, Plane };
enum class OutlierModel { UniformBox, WrongMatch };

/// Recipe for a synthetic registration problem. Surfaces sit on a lattice
/// with spacing 3 * surface_size, each under its own random rotation.
struct SceneSpec {
  int ellipsoids = 3;
  int spheres = 0;
  int saddles = 0;
  int planes = 0;
  int points_per_surface = 2000;
  double surface_size = 0.25;  ///< largest semi-axis, radius, or patch half-extent
  /// Per-axis standard deviation of a planted inlier's residual gt(p) − q.
  /// Each cloud receives half of the variance.
  double noise_sigma = 0.0;
  std::optional<RigidTransform> gt;  ///< empty: random from seed
  double gt_max_angle_deg = 180.0;
  double gt_max_translation = 1.0;  ///< per-axis bound
  int n_correspondences = 100;
  double inlier_ratio = 1.0;
  OutlierModel outlier_model = OutlierModel::UniformBox;
  double outlier_min_residual = 0.15;
  double sphere_axis_gap = 0.0;  ///< relative semi-axis spread of "spheres"
  double target_scale = 1.0;     ///< uniform scale applied to the target cloud
  std::uint64_t seed = 0;

  /// Throws InvalidSpec.
  void validate() const;
};

struct Scene {
  PointCloud source;
  PointCloud target;
  std::vector<Correspondence> correspondences;
  RigidTransform gt;
  std::vector<std::size_t> planted_inliers;         ///< ascending positions in correspondences
  std::vector<Correspondence> gt_correspondences;  ///< the planted inliers themselves
  std::vector<int> source_surface;                  ///< surface id of each source point
  std::vector<SurfaceKind> surface_kinds;
};

/// Fully determined by spec (including its seed). Throws InvalidSpec.
Scene generate(const SceneSpec& spec);

/// T followed by a rotation of exactly angle_deg about a random axis and a
/// translation of exactly trans_units along a random direction.
RigidTransform perturb_transform(const RigidTransform& T, double angle_deg, double trans_units,
                                 std::uint64_t seed);

Matrix3 random_rotation(std::mt19937_64& rng);
Vector3 random_unit_vector(std::mt19937_64& rng);

std::string to_string(SurfaceKind k);
std::string to_string(OutlierModel m);
OutlierModel parse_outlier_model(const std::string& s);

/// Key/value view of a spec for config files. apply_scene_setting returns
/// false for keys it does not own and throws InvalidSpec on bad values.
std::vector<std::pair<std::string, std::string>> scene_settings(const SceneSpec& spec);
bool apply_scene_setting(SceneSpec& spec, const std::string& key, const std::string& value);

}  // namespace qreg
