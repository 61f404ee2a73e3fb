#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <qreg/errors.hpp>
#include <qreg/estimator.hpp>
#include <qreg/metrics.hpp>
#include <qreg/quadric.hpp>
#include <qreg/spatial.hpp>
#include <qreg/synth.hpp>

namespace qreg {
namespace {

TEST(Generate, PlantsRequestedInliers) {
  SceneSpec spec;
  spec.n_correspondences = 200;
  spec.inlier_ratio = 0.3;
  spec.seed = 17;
  const Scene s = generate(spec);
  ASSERT_EQ(s.correspondences.size(), 200u);
  ASSERT_EQ(s.planted_inliers.size(), 60u);
  ASSERT_EQ(s.gt_correspondences.size(), 60u);
  EXPECT_TRUE(std::is_sorted(s.planted_inliers.begin(), s.planted_inliers.end()));
  std::set<std::size_t> sources;
  const std::set<std::size_t> planted(s.planted_inliers.begin(), s.planted_inliers.end());
  for (std::size_t i = 0; i < s.correspondences.size(); ++i) {
    const auto& c = s.correspondences[i];
    sources.insert(c.source_index);
    const double r = (s.gt(s.source[c.source_index]) - s.target[c.target_index]).norm();
    if (planted.count(i)) {
      EXPECT_LT(r, 1e-12);
    } else {
      EXPECT_GE(r, spec.outlier_min_residual);
    }
  }
  EXPECT_EQ(sources.size(), 200u);
  for (std::size_t k = 0; k < 60; ++k) {
    EXPECT_EQ(s.gt_correspondences[k], s.correspondences[s.planted_inliers[k]]);
  }
}

TEST(Generate, CloudSizesAndSurfaceLabels) {
  SceneSpec spec;
  spec.ellipsoids = 2;
  spec.spheres = 1;
  spec.saddles = 1;
  spec.planes = 1;
  spec.points_per_surface = 300;
  const Scene s = generate(spec);
  EXPECT_EQ(s.source.size(), 1500u);
  EXPECT_EQ(s.target.size(), 1500u);
  ASSERT_EQ(s.surface_kinds.size(), 5u);
  ASSERT_EQ(s.source_surface.size(), 1500u);
  std::vector<int> counts(5, 0);
  for (int id : s.source_surface) ++counts.at(static_cast<std::size_t>(id));
  for (int c : counts) EXPECT_EQ(c, 300);
}

TEST(Generate, DeterministicPerSeed) {
  SceneSpec spec;
  spec.inlier_ratio = 0.5;
  spec.noise_sigma = 0.01;
  spec.seed = 5;
  const Scene a = generate(spec);
  const Scene b = generate(spec);
  EXPECT_EQ(a.source.points(), b.source.points());
  EXPECT_EQ(a.target.points(), b.target.points());
  EXPECT_EQ(a.correspondences, b.correspondences);
  EXPECT_EQ(a.gt, b.gt);
  spec.seed = 6;
  EXPECT_NE(generate(spec).gt, a.gt);
}

TEST(Generate, NoiseChangesOnlyTheNoise) {
  SceneSpec spec;
  spec.seed = 8;
  const Scene clean = generate(spec);
  spec.noise_sigma = 0.01;
  const Scene noisy = generate(spec);
  EXPECT_EQ(clean.gt, noisy.gt);
  EXPECT_EQ(clean.correspondences, noisy.correspondences);
}

TEST(Generate, ZeroNoiseGivesZeroRmseAtGroundTruth) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.inlier_ratio = 0.4;
    const Scene s = generate(spec);
    EXPECT_LT(pose_rmse(s.gt, s.gt_correspondences, s.source, s.target), 1e-12);
  }
}

TEST(Generate, NoiseResidualsWithinBound) {
  SceneSpec spec;
  spec.noise_sigma = 0.01;
  spec.n_correspondences = 1000;
  const Scene s = generate(spec);
  double sum_sq = 0.0;
  for (const auto& c : s.gt_correspondences) {
    const Vector3 r = s.gt(s.source[c.source_index]) - s.target[c.target_index];
    EXPECT_LT(r.norm(), 6.0 * spec.noise_sigma * std::sqrt(3.0));
    sum_sq += r.squaredNorm();
  }
  // Per-axis standard deviation of the residual should be close to sigma.
  const double per_axis = std::sqrt(sum_sq / (3.0 * static_cast<double>(s.gt_correspondences.size())));
  EXPECT_NEAR(per_axis, spec.noise_sigma, 0.1 * spec.noise_sigma);
}

TEST(Generate, ExplicitGroundTruthAndBoundedRandomOne) {
  SceneSpec spec;
  const RigidTransform T(Matrix3::Identity(), Vector3(0.5, 0, 0));
  spec.gt = T;
  EXPECT_EQ(generate(spec).gt, T);
  spec.gt.reset();
  spec.gt_max_angle_deg = 20.0;
  spec.gt_max_translation = 0.3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const Scene s = generate(spec);
    EXPECT_LE(rre(s.gt, RigidTransform::identity()), 20.0 + 1e-9);
    EXPECT_LE(s.gt.translation().cwiseAbs().maxCoeff(), 0.3);
  }
}

TEST(Generate, EllipsoidPatchesAreMostlyDistinct) {
  SceneSpec spec;
  spec.seed = 3;
  const Scene s = generate(spec);
  const KdTree tree(s.source);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.source.size(); i += 10) idx.push_back(i);
  const auto patches = build_patches(s.source, tree, idx);
  std::size_t distinct = 0;
  for (const auto& p : patches) distinct += p && p->degeneracy == Degeneracy::Distinct;
  EXPECT_GE(static_cast<double>(distinct), 0.9 * static_cast<double>(idx.size()));
}

TEST(Generate, SpheresAreAllEqual) {
  SceneSpec spec;
  spec.ellipsoids = 0;
  spec.spheres = 2;
  const Scene s = generate(spec);
  const KdTree tree(s.source);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.source.size(); i += 40) idx.push_back(i);
  for (const auto& p : build_patches(s.source, tree, idx)) {
    ASSERT_TRUE(p.has_value());
    EXPECT_NE(p->degeneracy, Degeneracy::Distinct);
  }
}

TEST(Generate, TargetScale) {
  SceneSpec spec;
  spec.target_scale = 1.5;
  const Scene s = generate(spec);
  for (const auto& c : s.gt_correspondences) {
    const Point3 expected = 1.5 * s.gt(s.source[c.source_index]);
    EXPECT_LT((expected - s.target[c.target_index]).norm(), 1e-12);
  }
}

TEST(Generate, WrongMatchOutliersPointAtOtherSurfacePoints) {
  SceneSpec spec;
  spec.outlier_model = OutlierModel::WrongMatch;
  spec.inlier_ratio = 0.5;
  const Scene s = generate(spec);
  EXPECT_EQ(s.planted_inliers.size(), 50u);
  const auto inl = count_inliers(s.gt, s.correspondences, s.source, s.target, 0.1);
  EXPECT_EQ(inl.indices, s.planted_inliers);
}

TEST(SceneSpec, ValidationErrors) {
  auto expect_invalid = [](auto mutate) {
    SceneSpec spec;
    mutate(spec);
    EXPECT_THROW(spec.validate(), InvalidSpec);
    EXPECT_THROW(generate(spec), InvalidSpec);
  };
  expect_invalid([](SceneSpec& s) { s.ellipsoids = 0; });
  expect_invalid([](SceneSpec& s) { s.spheres = -1; });
  expect_invalid([](SceneSpec& s) { s.points_per_surface = 0; });
  expect_invalid([](SceneSpec& s) { s.surface_size = 0.0; });
  expect_invalid([](SceneSpec& s) { s.noise_sigma = -0.1; });
  expect_invalid([](SceneSpec& s) { s.inlier_ratio = 0.0; });
  expect_invalid([](SceneSpec& s) { s.inlier_ratio = 1.1; });
  expect_invalid([](SceneSpec& s) { s.gt_max_angle_deg = 200.0; });
  expect_invalid([](SceneSpec& s) { s.sphere_axis_gap = 1.0; });
  expect_invalid([](SceneSpec& s) { s.target_scale = 0.0; });
  expect_invalid([](SceneSpec& s) { s.n_correspondences = 7000; });
  // Only generation can tell that no outlier fits beyond the minimum residual.
  SceneSpec far;
  far.inlier_ratio = 0.5;
  far.outlier_min_residual = 1e6;
  EXPECT_NO_THROW(far.validate());
  EXPECT_THROW(generate(far), InvalidSpec);
}

TEST(PerturbTransform, ExactMagnitudes) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RigidTransform T(random_rotation(rng), Vector3(0.1, 0.2, 0.3));
    const double angle = 0.5 + static_cast<double>(seed) * 0.1;
    const RigidTransform P = perturb_transform(T, angle, 0.02, seed);
    EXPECT_NEAR(rre(P, T), angle, 1e-9);
    EXPECT_NEAR(rte(P, T), 0.02, 1e-12);
    EXPECT_EQ(P, perturb_transform(T, angle, 0.02, seed));
  }
}

TEST(RandomRotation, Proper) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Matrix3 R = random_rotation(rng);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    EXPECT_LT((R.transpose() * R - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(random_unit_vector(rng).norm(), 1.0, 1e-15);
  }
}

TEST(SceneSettings, RoundTrip) {
  SceneSpec spec;
  spec.spheres = 2;
  spec.noise_sigma = 0.0125;
  spec.outlier_model = OutlierModel::WrongMatch;
  std::mt19937_64 rng(4);
  spec.gt = RigidTransform(random_rotation(rng), Vector3(1, 2, 3));
  spec.seed = 123456789012345ULL;
  SceneSpec copy;
  for (const auto& [k, v] : scene_settings(spec)) EXPECT_TRUE(apply_scene_setting(copy, k, v)) << k;
  EXPECT_EQ(scene_settings(copy), scene_settings(spec));
  EXPECT_EQ(copy.gt, spec.gt);
  EXPECT_FALSE(apply_scene_setting(copy, "inlier_threshold", "0.1"));
  EXPECT_THROW(apply_scene_setting(copy, "spheres", "-2"), InvalidSpec);
  EXPECT_THROW(apply_scene_setting(copy, "noise_sigma", "abc"), InvalidSpec);
  EXPECT_THROW(apply_scene_setting(copy, "gt", "1 2 3"), InvalidSpec);
  EXPECT_THROW(apply_scene_setting(copy, "outlier_model", "box"), InvalidSpec);
  EXPECT_TRUE(apply_scene_setting(copy, "gt", "random"));
  EXPECT_FALSE(copy.gt.has_value());
}

TEST(OutlierModel, Names) {
  for (auto m : {OutlierModel::UniformBox, OutlierModel::WrongMatch}) {
    EXPECT_EQ(parse_outlier_model(to_string(m)), m);
  }
  EXPECT_EQ(to_string(SurfaceKind::Ellipsoid), "ellipsoid");
}

}  // namespace
}  // namespace qreg
