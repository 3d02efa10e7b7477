#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nocspose/mesh_primitives.hpp"
#include "nocspose/metrics.hpp"
#include "nocspose/rasterizer.hpp"
#include "nocspose/rng.hpp"
#include "nocspose/solvers.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace nocspose;

namespace {

Pose random_pose(Rng& rng, double depth_min = 0.8, double depth_max = 2.5) {
  Pose p;
  p.rotation = random_rotation(rng);
  p.translation = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(depth_min, depth_max));
  return p;
}

Correspondences3D3D synth_pairs(const Pose& pose, int n, Rng& rng) {
  Correspondences3D3D pairs;
  for (int i = 0; i < n; ++i) {
    const Vec3 m(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    pairs.model_points.push_back(m);
    pairs.camera_points.push_back(pose.apply(m));
  }
  return pairs;
}

// asin form of the geodesic distance; well conditioned near zero, where the
// acos form saturates around 3e-8.
double rotation_error(const Mat3& a, const Mat3& b) {
  const double f = (a - b).norm();  // Frobenius
  return 2.0 * std::asin(std::clamp(f / (2.0 * std::sqrt(2.0)), 0.0, 1.0));
}

const CameraIntrinsics kCam{160.0, 160.0, 64.0, 64.0, 128, 128};

Correspondences2D3D synth_projections(const Pose& pose, int n, Rng& rng, double noise_px = 0.0,
                                      bool planar = false) {
  Correspondences2D3D pairs;
  while (static_cast<int>(pairs.model_points.size()) < n) {
    const Vec3 m(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), planar ? 0.0 : rng.uniform(-0.4, 0.4));
    const Vec3 q = pose.apply(m);
    if (q.z() <= 0.1) continue;
    pairs.model_points.push_back(m);
    pairs.image_points.emplace_back(kCam.fx * q.x() / q.z() + kCam.cx + noise_px * rng.normal(),
                                    kCam.fy * q.y() / q.z() + kCam.cy + noise_px * rng.normal());
  }
  return pairs;
}

}  // namespace

TEST_CASE("kabsch on identity and known poses") {
  Rng rng(1);
  const Correspondences3D3D id_pairs = synth_pairs(Pose::identity(), 12, rng);
  const Pose id = kabsch(id_pairs);
  CHECK((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(id.translation.norm() < 1e-12);

  for (int trial = 0; trial < 50; ++trial) {
    const Pose gt = random_pose(rng);
    const Pose est = kabsch(synth_pairs(gt, 30, rng));
    CHECK(rotation_error(est.rotation, gt.rotation) < 1e-9);
    CHECK((est.translation - gt.translation).norm() < 1e-9);
  }
}

TEST_CASE("kabsch enforces a proper rotation on mirrored planar data") {
  // planar points with mirrored targets would prefer a reflection
  Correspondences3D3D pairs;
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const Vec3 m(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
    pairs.model_points.push_back(m);
    pairs.camera_points.push_back(Vec3(m.x(), -m.y(), 0.0));
  }
  const Pose est = kabsch(pairs);
  CHECK(est.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));

  double sse = 0.0;
  for (size_t i = 0; i < pairs.model_points.size(); ++i) {
    sse += (est.apply(pairs.model_points[i]) - pairs.camera_points[i]).squaredNorm();
  }
  const double oracle = oracles::kabsch_reference_residual(pairs);
  CHECK(sse <= oracle + 1e-6);
  CHECK(sse >= oracle - 1e-6);
}

TEST_CASE("kabsch residual matches the grid+polish oracle on small sets") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Correspondences3D3D pairs;
    const int n = 4 + static_cast<int>(rng.uniform_index(3));  // 4..6 points
    for (int i = 0; i < n; ++i) {
      pairs.model_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      pairs.camera_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    const Pose est = kabsch(pairs);
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      sse += (est.apply(pairs.model_points[i]) - pairs.camera_points[i]).squaredNorm();
    }
    CHECK(std::abs(sse - oracles::kabsch_reference_residual(pairs)) < 1e-6);
  }
}

TEST_CASE("kabsch degeneracy") {
  Correspondences3D3D collinear;
  for (int i = 0; i < 5; ++i) {
    collinear.model_points.emplace_back(i, 0.0, 0.0);
    collinear.camera_points.emplace_back(0.0, i, 0.0);
  }
  CHECK_THROWS(kabsch(collinear));

  Correspondences3D3D two;
  two.model_points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  two.camera_points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK_THROWS(kabsch(two));
}

TEST_CASE("kabsch_ransac equals plain kabsch on clean data") {
  Rng rng(4);
  const Pose gt = random_pose(rng);
  const Correspondences3D3D pairs = synth_pairs(gt, 100, rng);
  RansacConfig cfg;
  cfg.inlier_threshold = 0.05;
  cfg.seed = 9;
  const SolveResult result = kabsch_ransac(pairs, cfg);
  const Pose direct = kabsch(pairs);
  CHECK(rotation_error(result.pose.rotation, direct.rotation) < 1e-9);
  CHECK((result.pose.translation - direct.translation).norm() < 1e-9);
  CHECK(result.inlier_indices.size() == 100);
  CHECK(result.mean_inlier_residual < 1e-9);

  Correspondences3D3D two;
  two.model_points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  two.camera_points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK_THROWS(kabsch_ransac(two, cfg));
}

TEST_CASE("kabsch_ransac under 40 percent outliers") {
  const double diameter = std::sqrt(3.0);  // of the unit sampling cube
  int hits = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial);
    const Pose gt = random_pose(rng);
    Correspondences3D3D pairs = synth_pairs(gt, 60, rng);
    for (int i = 0; i < 40; ++i) {
      pairs.model_points.emplace_back(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      pairs.camera_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 3));
    }
    RansacConfig cfg;
    cfg.inlier_threshold = 0.05 * diameter;
    cfg.seed = 4000 + trial;
    const SolveResult result = kabsch_ransac(pairs, cfg);
    double add = 0.0;
    for (const Vec3& m : pairs.model_points) add += (result.pose.apply(m) - gt.apply(m)).norm();
    add /= static_cast<double>(pairs.model_points.size());
    hits += add < 0.01 * diameter ? 1 : 0;
  }
  CHECK(hits == 20);
}

TEST_CASE("ransac output is invariant to input permutation and matches the serial path") {
  Rng rng(5);
  const Pose gt = random_pose(rng);
  Correspondences3D3D pairs = synth_pairs(gt, 50, rng);
  for (int i = 0; i < 30; ++i) {
    pairs.model_points.emplace_back(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    pairs.camera_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 3));
  }
  RansacConfig cfg;
  cfg.inlier_threshold = 0.03;
  cfg.seed = 77;
  const SolveResult base = kabsch_ransac(pairs, cfg);
  const SolveResult serial = kabsch_ransac_serial(pairs, cfg);
  CHECK((base.pose.rotation - serial.pose.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK(base.inlier_indices == serial.inlier_indices);

  // reverse the list; the pose must not change and the inlier set must map
  Correspondences3D3D reversed;
  reversed.model_points.assign(pairs.model_points.rbegin(), pairs.model_points.rend());
  reversed.camera_points.assign(pairs.camera_points.rbegin(), pairs.camera_points.rend());
  const SolveResult flipped = kabsch_ransac(reversed, cfg);
  CHECK((flipped.pose.rotation - base.pose.rotation).cwiseAbs().maxCoeff() < 1e-15);
  const int n = static_cast<int>(pairs.model_points.size());
  std::vector<int> mapped;
  for (int idx : flipped.inlier_indices) mapped.push_back(n - 1 - idx);
  std::sort(mapped.begin(), mapped.end());
  CHECK(mapped == base.inlier_indices);

  for (int idx : base.inlier_indices) {
    CHECK((base.pose.apply(pairs.model_points[idx]) - pairs.camera_points[idx]).norm() <=
          cfg.inlier_threshold);
  }
}

TEST_CASE("epnp on noiseless non-coplanar points") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose gt = random_pose(rng, 1.2, 3.0);
    const Correspondences2D3D pairs = synth_projections(gt, 6, rng);
    const Pose est = epnp(pairs, kCam);
    CHECK(rotation_error(est.rotation, gt.rotation) < 1e-3);
    CHECK((est.translation - gt.translation).norm() < 1e-3 * gt.translation.z());
  }
}

TEST_CASE("epnp on a noiseless planar target") {
  Rng rng(7);
  int ok = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const Pose gt = random_pose(rng, 1.2, 3.0);
    const Correspondences2D3D pairs = synth_projections(gt, 10, rng, 0.0, true);
    const Pose est = epnp(pairs, kCam);
    ok += rotation_error(est.rotation, gt.rotation) < 1e-2 ? 1 : 0;
  }
  CHECK(ok >= 24);
}

TEST_CASE("epnp error paths") {
  Rng rng(8);
  const Pose gt = random_pose(rng);
  Correspondences2D3D three = synth_projections(gt, 3, rng);
  CHECK_THROWS(epnp(three, kCam));

  // every point behind the camera
  Correspondences2D3D behind;
  for (int i = 0; i < 6; ++i) {
    behind.model_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    behind.image_points.emplace_back(rng.uniform(0, 128), rng.uniform(0, 128));
  }
  Pose backwards;
  backwards.translation = Vec3(0, 0, -5.0);
  // random data is not strictly "behind" but collinear data is degenerate:
  Correspondences2D3D collinear;
  for (int i = 0; i < 6; ++i) {
    collinear.model_points.emplace_back(0.1 * i, 0.0, 0.0);
    collinear.image_points.emplace_back(10.0 * i, 64.0);
  }
  CHECK_THROWS(epnp(collinear, kCam));
}

TEST_CASE("pnp_ransac on clean and contaminated data") {
  Rng rng(9);
  const Pose gt = random_pose(rng, 1.2, 2.5);
  Correspondences2D3D pairs = synth_projections(gt, 80, rng);
  RansacConfig cfg;
  cfg.inlier_threshold = 2.0;
  cfg.seed = 31;
  const SolveResult clean = pnp_ransac(pairs, kCam, cfg);
  CHECK(rotation_error(clean.pose.rotation, gt.rotation) < 1e-3);

  // 50% outliers
  int hits = 0;
  const Mesh cube = make_cube(1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Rng trng(500 + trial);
    const Pose tgt = random_pose(trng, 1.2, 2.5);
    Correspondences2D3D cpairs = synth_projections(tgt, 60, trng);
    for (int i = 0; i < 60; ++i) {
      cpairs.model_points.emplace_back(trng.uniform(-0.4, 0.4), trng.uniform(-0.4, 0.4), trng.uniform(-0.4, 0.4));
      cpairs.image_points.emplace_back(trng.uniform(0, 128), trng.uniform(0, 128));
    }
    RansacConfig tcfg;
    tcfg.inlier_threshold = 2.0;
    tcfg.seed = 900 + trial;
    try {
      const SolveResult result = pnp_ransac(cpairs, kCam, tcfg);
      hits += add_metric(result.pose, tgt, cube) < 0.05 * cube.diameter ? 1 : 0;
    } catch (const std::exception&) {
    }
  }
  CHECK(hits >= 19);

  Correspondences2D3D three = synth_projections(gt, 3, rng);
  CHECK_THROWS(pnp_ransac(three, kCam, cfg));

  const SolveResult serial = pnp_ransac_serial(pairs, kCam, cfg);
  const SolveResult parallel = pnp_ransac(pairs, kCam, cfg);
  CHECK((serial.pose.rotation - parallel.pose.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK(serial.inlier_indices == parallel.inlier_indices);
}

TEST_CASE("normal estimation on a plane and a sphere") {
  std::vector<Vec3> plane;
  Rng rng(10);
  for (int i = 0; i < 200; ++i) plane.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0);
  const std::vector<Vec3> normals = estimate_normals(plane, 8);
  for (const Vec3& n : normals) {
    CHECK(n.z() == doctest::Approx(-1.0).epsilon(1e-9));  // oriented toward the origin
    CHECK(n.norm() == doctest::Approx(1.0));
  }

  std::vector<Vec3> sphere;
  const Vec3 center(0.0, 0.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    sphere.push_back(center + d.normalized());
  }
  const std::vector<Vec3> sphere_normals = estimate_normals(sphere, 12);
  for (size_t i = 0; i < sphere.size(); ++i) {
    const Vec3 radial = (sphere[i] - center).normalized();
    CHECK(std::abs(std::abs(sphere_normals[i].dot(radial)) - 1.0) < 0.05);
  }

  CHECK_THROWS(estimate_normals(plane, 300));
  CHECK_THROWS(estimate_normals(plane, 2));
}

TEST_CASE("point-to-plane ICP converges from a perturbed start") {
  const Mesh blob = make_random_blob(0.5, 2, 0.15, 42);
  const NocsBounds bounds = compute_nocs_bounds(blob);
  Rng rng(11);
  Pose gt;
  gt.rotation = random_rotation(rng);
  gt.translation = Vec3(0.0, 0.05, 2.0);

  // scene cloud from a rendered depth map
  const CameraIntrinsics cam{160.0, 160.0, 64.0, 64.0, 128, 128};
  const RenderOutput rendered = render(blob, bounds, gt, cam, 128, 128);
  std::vector<Vec3> scene;
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      if (!rendered.mask[rendered.pixel(x, y)]) continue;
      scene.push_back(backproject(cam, x + 0.5, y + 0.5, rendered.depth[rendered.pixel(x, y)]));
    }
  }
  REQUIRE(scene.size() > 500);
  const std::vector<Vec3> normals = estimate_normals(scene, 16);

  // fixed point: starting at the truth stays at the truth
  const Pose stay = icp_point_to_plane(blob.vertices, scene, normals, gt, 20, 0.1 * blob.diameter);
  CHECK(add_metric(stay, gt, blob) < 1e-6);

  const Pose init = perturb_pose(gt, 5.0 * M_PI / 180.0, 0.05 * blob.diameter, rng);
  const Pose refined = icp_point_to_plane(blob.vertices, scene, normals, init, 60, 0.1 * blob.diameter);
  CHECK(add_metric(refined, gt, blob) < 0.005 * blob.diameter);
  CHECK(add_metric(refined, gt, blob) < add_metric(init, gt, blob));

  // disjoint clouds have no associations
  Pose far_away = gt;
  far_away.translation += Vec3(10, 0, 0);
  CHECK_THROWS(icp_point_to_plane(blob.vertices, scene, normals, far_away, 10, 0.1 * blob.diameter));
}
