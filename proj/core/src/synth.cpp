#include "qreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>

#include "qreg/errors.hpp"
#include "qreg/io.hpp"
#include "qreg/parallel.hpp"
#include "qreg/spatial.hpp"

namespace qreg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Independent streams so that e.g. changing the noise level leaves the
// sampled geometry untouched.
enum Stream : std::uint64_t { kGeometry = 1, kGt, kNoise, kPermutation, kMatches, kOutliers };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Area-uniform samples on the ellipsoid with semi-axes a, b, c (rejection on the
/// surface element of the sphere parameterization).
void sample_ellipsoid(double a, double b, double c, int n, std::mt19937_64& rng,
                      std::vector<Point3>& out) {
  const double gmax = std::max({b * c, a * c, a * b});
  int kept = 0;
  while (kept < n) {
    const Vector3 u = random_unit_vector(rng);
    const double g = std::sqrt(std::pow(b * c * u.x(), 2) + std::pow(a * c * u.y(), 2) +
                               std::pow(a * b * u.z(), 2));
    if (uniform(rng, 0.0, 1.0) * gmax > g) continue;
    out.emplace_back(a * u.x(), b * u.y(), c * u.z());
    ++kept;
  }
}

std::vector<Point3> sample_surface(SurfaceKind kind, const SceneSpec& spec, std::mt19937_64& rng) {
  const double s = spec.surface_size;
  const int n = spec.points_per_surface;
  std::vector<Point3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  switch (kind) {
    case SurfaceKind::Ellipsoid: {
      const double ratio = uniform(rng, 1.5, 3.0);
      const double a = s;
      const double c = a / ratio;
      const double b = c * std::pow(ratio, uniform(rng, 0.3, 0.7));
      sample_ellipsoid(a, b, c, n, rng, pts);
      break;
    }
    case SurfaceKind::Sphere: {
      const double r = 0.8 * s;
      const double g = spec.sphere_axis_gap;
      sample_ellipsoid(r * (1.0 + g), r, r * (1.0 - g), n, rng, pts);
      break;
    }
    case SurfaceKind::Saddle: {
      const double r1 = uniform(rng, 1.5, 3.0) * s;
      const double r2 = uniform(rng, 1.5, 3.0) * s;
      for (int i = 0; i < n; ++i) {
        const double x = uniform(rng, -s, s);
        const double y = uniform(rng, -s, s);
        pts.emplace_back(x, y, x * x / (2.0 * r1) - y * y / (2.0 * r2));
      }
      break;
    }
    case SurfaceKind::Plane:
      for (int i = 0; i < n; ++i) pts.emplace_back(uniform(rng, -s, s), uniform(rng, -s, s), 0.0);
      break;
  }
  return pts;
}

RigidTransform random_gt(const SceneSpec& spec, std::mt19937_64& rng) {
  Matrix3 R;
  if (spec.gt_max_angle_deg >= 180.0) {
    R = random_rotation(rng);
  } else {
    const Vector3 axis = random_unit_vector(rng);
    const double angle = uniform(rng, 0.0, spec.gt_max_angle_deg) * kDeg;
    R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  }
  const double m = spec.gt_max_translation;
  Vector3 t = Vector3::Zero();
  if (m > 0.0) t = Vector3(uniform(rng, -m, m), uniform(rng, -m, m), uniform(rng, -m, m));
  return {R, t};
}

int parse_count(const std::string& key, const std::string& value) {
  try {
    const auto v = parse_unsigned(value);
    if (v > 100'000'000) throw InvalidArgument("too large");
    return static_cast<int>(v);
  } catch (const InvalidArgument&) {
    throw InvalidSpec("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
}

double parse_number(const std::string& key, const std::string& value) {
  try {
    return parse_real(value);
  } catch (const InvalidArgument&) {
    throw InvalidSpec("'" + key + "' expects a number, got '" + value + "'");
  }
}

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw InvalidSpec(what); };
  if (ellipsoids < 0 || spheres < 0 || saddles < 0 || planes < 0) fail("surface counts must be >= 0");
  if (ellipsoids + spheres + saddles + planes <= 0) fail("scene needs at least one surface");
  if (points_per_surface <= 0) fail("points_per_surface must be positive");
  if (!(surface_size > 0.0) || !std::isfinite(surface_size)) fail("surface_size must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (!(gt_max_angle_deg >= 0.0 && gt_max_angle_deg <= 180.0)) {
    fail("gt_max_angle_deg must lie in [0, 180]");
  }
  if (!(gt_max_translation >= 0.0) || !std::isfinite(gt_max_translation)) {
    fail("gt_max_translation must be >= 0");
  }
  if (n_correspondences <= 0) fail("n_correspondences must be positive");
  if (!(inlier_ratio > 0.0 && inlier_ratio <= 1.0)) fail("inlier_ratio must lie in (0, 1]");
  if (!(outlier_min_residual >= 0.0) || !std::isfinite(outlier_min_residual)) {
    fail("outlier_min_residual must be >= 0");
  }
  if (!(sphere_axis_gap >= 0.0 && sphere_axis_gap < 1.0)) fail("sphere_axis_gap must lie in [0, 1)");
  if (!(target_scale > 0.0) || !std::isfinite(target_scale)) fail("target_scale must be positive");
  const long long total = static_cast<long long>(ellipsoids + spheres + saddles + planes) *
                          static_cast<long long>(points_per_surface);
  if (n_correspondences > total) fail("more correspondences than source points");
}

Matrix3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  while (q.norm() < 1e-12) q = Eigen::Quaterniond(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Vector3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  while (true) {
    const Vector3 v(gauss(rng), gauss(rng), gauss(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

RigidTransform perturb_transform(const RigidTransform& T, double angle_deg, double trans_units,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vector3 axis = random_unit_vector(rng);
  const Vector3 dir = random_unit_vector(rng);
  const Matrix3 dR = Eigen::AngleAxisd(angle_deg * kDeg, axis).toRotationMatrix();
  return {dR * T.rotation(), T.translation() + trans_units * dir};
}

Scene generate(const SceneSpec& spec) {
  spec.validate();
  Scene scene;

  std::vector<SurfaceKind> kinds;
  kinds.insert(kinds.end(), static_cast<std::size_t>(spec.ellipsoids), SurfaceKind::Ellipsoid);
  kinds.insert(kinds.end(), static_cast<std::size_t>(spec.spheres), SurfaceKind::Sphere);
  kinds.insert(kinds.end(), static_cast<std::size_t>(spec.saddles), SurfaceKind::Saddle);
  kinds.insert(kinds.end(), static_cast<std::size_t>(spec.planes), SurfaceKind::Plane);

  // Surfaces on a cubic lattice centred on the origin.
  std::mt19937_64 geo(mix_seed(spec.seed, kGeometry));
  const int side = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(kinds.size())) - 1e-9));
  const double spacing = 3.0 * spec.surface_size;
  const double centre = 0.5 * static_cast<double>(side - 1);
  std::vector<Point3> clean;
  clean.reserve(kinds.size() * static_cast<std::size_t>(spec.points_per_surface));
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const int i = static_cast<int>(k) % side;
    const int j = (static_cast<int>(k) / side) % side;
    const int l = static_cast<int>(k) / (side * side);
    const Vector3 offset = spacing * Vector3(i - centre, j - centre, l - centre);
    const Matrix3 R = random_rotation(geo);
    for (const auto& p : sample_surface(kinds[k], spec, geo)) {
      clean.push_back(R * p + offset);
      scene.source_surface.push_back(static_cast<int>(k));
    }
  }
  scene.surface_kinds = kinds;

  std::mt19937_64 gt_rng(mix_seed(spec.seed, kGt));
  scene.gt = spec.gt ? *spec.gt : random_gt(spec, gt_rng);

  const std::size_t n = clean.size();
  std::vector<std::size_t> perm(n);  // source i lands at target perm[i]
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 perm_rng(mix_seed(spec.seed, kPermutation));
  std::shuffle(perm.begin(), perm.end(), perm_rng);

  std::mt19937_64 noise_rng(mix_seed(spec.seed, kNoise));
  std::normal_distribution<double> noise(0.0, spec.noise_sigma / std::numbers::sqrt2);
  auto jitter = [&]() -> Vector3 {
    if (spec.noise_sigma == 0.0) return Vector3::Zero();
    return {noise(noise_rng), noise(noise_rng), noise(noise_rng)};
  };
  std::vector<Point3> src(n);
  std::vector<Point3> dst(n);
  for (std::size_t i = 0; i < n; ++i) src[i] = clean[i] + jitter();
  for (std::size_t i = 0; i < n; ++i) {
    dst[perm[i]] = spec.target_scale * scene.gt(clean[i]) + jitter();
  }
  scene.source = PointCloud(std::move(src));
  scene.target = PointCloud(std::move(dst));

  // Distinct source points: the first `inliers` become planted matches.
  std::mt19937_64 match_rng(mix_seed(spec.seed, kMatches));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto n_corr = static_cast<std::size_t>(spec.n_correspondences);
  for (std::size_t i = 0; i < n_corr; ++i) {
    std::swap(order[i], order[i + uniform_index(match_rng, n - i)]);
  }
  const auto n_in = static_cast<std::size_t>(
      std::llround(spec.inlier_ratio * static_cast<double>(spec.n_correspondences)));

  std::vector<std::pair<Correspondence, bool>> tagged;
  tagged.reserve(n_corr);
  for (std::size_t i = 0; i < n_in; ++i) {
    tagged.push_back({{order[i], perm[order[i]], 1.0}, true});
  }

  std::mt19937_64 out_rng(mix_seed(spec.seed, kOutliers));
  const auto& Q = scene.target;
  Point3 lo = Q[0];
  Point3 hi = Q[0];
  for (const auto& q : Q.points()) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  std::optional<KdTree> tree;
  if (spec.outlier_model == OutlierModel::UniformBox) tree.emplace(Q);
  for (std::size_t i = n_in; i < n_corr; ++i) {
    const std::size_t s = order[i];
    const Point3 mapped = spec.target_scale * scene.gt(scene.source[s]);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::size_t t = 0;
      if (tree) {
        const Point3 x(uniform(out_rng, lo.x(), hi.x()), uniform(out_rng, lo.y(), hi.y()),
                       uniform(out_rng, lo.z(), hi.z()));
        t = tree->knn(x, 1).front().index;
      } else {
        t = uniform_index(out_rng, n);
      }
      if ((mapped - Q[t]).norm() >= spec.outlier_min_residual) {
        tagged.push_back({{s, t, 1.0}, false});
        placed = true;
      }
    }
    if (!placed) throw InvalidSpec("cannot place an outlier beyond outlier_min_residual");
  }

  std::shuffle(tagged.begin(), tagged.end(), match_rng);
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    scene.correspondences.push_back(tagged[i].first);
    if (tagged[i].second) {
      scene.planted_inliers.push_back(i);
      scene.gt_correspondences.push_back(tagged[i].first);
    }
  }
  return scene;
}

std::string to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::Ellipsoid:
      return "ellipsoid";
    case SurfaceKind::Sphere:
      return "sphere";
    case SurfaceKind::Saddle:
      return "saddle";
    case SurfaceKind::Plane:
      return "plane";
  }
  return "unknown";
}

std::string to_string(OutlierModel m) {
  return m == OutlierModel::UniformBox ? "uniform_box" : "wrong_match";
}

OutlierModel parse_outlier_model(const std::string& s) {
  if (s == "uniform_box") return OutlierModel::UniformBox;
  if (s == "wrong_match") return OutlierModel::WrongMatch;
  throw InvalidSpec("unknown outlier model '" + s + "'");
}

std::vector<std::pair<std::string, std::string>> scene_settings(const SceneSpec& spec) {
  std::string gt = "random";
  if (spec.gt) {
    const Matrix4 m = spec.gt->matrix();
    gt.clear();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) gt += (gt.empty() ? "" : " ") + format_real(m(r, c));
    }
  }
  return {
      {"ellipsoids", std::to_string(spec.ellipsoids)},
      {"spheres", std::to_string(spec.spheres)},
      {"saddles", std::to_string(spec.saddles)},
      {"planes", std::to_string(spec.planes)},
      {"points_per_surface", std::to_string(spec.points_per_surface)},
      {"surface_size", format_real(spec.surface_size)},
      {"noise_sigma", format_real(spec.noise_sigma)},
      {"gt", gt},
      {"gt_max_angle_deg", format_real(spec.gt_max_angle_deg)},
      {"gt_max_translation", format_real(spec.gt_max_translation)},
      {"n_correspondences", std::to_string(spec.n_correspondences)},
      {"inlier_ratio", format_real(spec.inlier_ratio)},
      {"outlier_model", to_string(spec.outlier_model)},
      {"outlier_min_residual", format_real(spec.outlier_min_residual)},
      {"sphere_axis_gap", format_real(spec.sphere_axis_gap)},
      {"target_scale", format_real(spec.target_scale)},
      {"seed", std::to_string(spec.seed)},
  };
}

bool apply_scene_setting(SceneSpec& spec, const std::string& key, const std::string& value) {
  if (key == "ellipsoids") {
    spec.ellipsoids = parse_count(key, value);
  } else if (key == "spheres") {
    spec.spheres = parse_count(key, value);
  } else if (key == "saddles") {
    spec.saddles = parse_count(key, value);
  } else if (key == "planes") {
    spec.planes = parse_count(key, value);
  } else if (key == "points_per_surface") {
    spec.points_per_surface = parse_count(key, value);
  } else if (key == "surface_size") {
    spec.surface_size = parse_number(key, value);
  } else if (key == "noise_sigma") {
    spec.noise_sigma = parse_number(key, value);
  } else if (key == "gt") {
    if (value == "random") {
      spec.gt.reset();
      return true;
    }
    std::istringstream in(value);
    std::string tok;
    std::vector<double> v;
    while (in >> tok) v.push_back(parse_number(key, tok));
    if (v.size() != 12) throw InvalidSpec("'gt' expects 'random' or 12 numbers (3x4, row-major)");
    Matrix4 m = Matrix4::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(4 * r + c)];
    }
    try {
      spec.gt = RigidTransform::from_matrix(m);
    } catch (const InvalidArgument& e) {
      throw InvalidSpec(std::string("'gt': ") + e.what());
    }
  } else if (key == "gt_max_angle_deg") {
    spec.gt_max_angle_deg = parse_number(key, value);
  } else if (key == "gt_max_translation") {
    spec.gt_max_translation = parse_number(key, value);
  } else if (key == "n_correspondences") {
    spec.n_correspondences = parse_count(key, value);
  } else if (key == "inlier_ratio") {
    spec.inlier_ratio = parse_number(key, value);
  } else if (key == "outlier_model") {
    spec.outlier_model = parse_outlier_model(value);
  } else if (key == "outlier_min_residual") {
    spec.outlier_min_residual = parse_number(key, value);
  } else if (key == "sphere_axis_gap") {
    spec.sphere_axis_gap = parse_number(key, value);
  } else if (key == "target_scale") {
    spec.target_scale = parse_number(key, value);
  } else if (key == "seed") {
    try {
      spec.seed = parse_unsigned(value);
    } catch (const InvalidArgument&) {
      throw InvalidSpec("'seed' expects a non-negative integer, got '" + value + "'");
    }
  } else {
    return false;
  }
  return true;
}

}  // namespace qreg
