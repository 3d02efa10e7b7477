#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nocspose/geometry.hpp"
#include "nocspose/mesh_io.hpp"
#include "nocspose/mesh_primitives.hpp"
#include "nocspose/rng.hpp"
#include "nocspose/serialization.hpp"

#include <cstdio>
#include <filesystem>

using namespace nocspose;

namespace {

Mesh single_triangle() {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 3)};
  m.faces = {{0, 1, 2}};
  m.finalize();
  return m;
}

}  // namespace

TEST_CASE("nocs bounds of the unit cube") {
  const Mesh cube = make_cube(1.0);
  const NocsBounds b = compute_nocs_bounds(cube);
  CHECK(b.min.isApprox(Vec3(-0.5, -0.5, -0.5), 1e-15));
  CHECK(b.max.isApprox(Vec3(0.5, 0.5, 0.5), 1e-15));
  CHECK(cube.diameter == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("nocs bounds of a single triangle") {
  const NocsBounds b = compute_nocs_bounds(single_triangle());
  CHECK(b.min.isApprox(Vec3(0, 0, 0)));
  CHECK(b.max.isApprox(Vec3(1, 2, 3)));
}

TEST_CASE("flat mesh is rejected") {
  Mesh flat;
  flat.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  flat.faces = {{0, 1, 2}};
  flat.finalize();
  CHECK_THROWS_WITH_AS(compute_nocs_bounds(flat), "flat model", std::invalid_argument);
}

TEST_CASE("nocs projection hits the corners") {
  const NocsBounds b = compute_nocs_bounds(make_cube(1.0));
  CHECK(nocs_project(b.min, b).isApprox(Vec3(0, 0, 0), 1e-12));
  CHECK(nocs_project(b.max, b).norm() == doctest::Approx(std::sqrt(3.0)));
  CHECK(nocs_project(Vec3(0, 0, 0), b).isApprox(Vec3(0.5, 0.5, 0.5), 1e-12));
  CHECK(nocs_unproject(Vec3(0, 0, 0), b).isApprox(b.min, 1e-12));
  CHECK(nocs_unproject(Vec3(1, 1, 1), b).isApprox(b.max, 1e-12));
}

TEST_CASE("nocs project/unproject round trip") {
  const NocsBounds b = compute_nocs_bounds(single_triangle());
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 v(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK((nocs_unproject(nocs_project(v, b), b) - v).norm() < 1e-9);
  }
  // every mesh vertex lands in [0,1]^3 and both ends are attained per axis
  Vec3 lo(1, 1, 1), hi(0, 0, 0);
  for (const Vec3& v : single_triangle().vertices) {
    const Vec3 c = nocs_project(v, b);
    CHECK(c.minCoeff() >= -1e-12);
    CHECK(c.maxCoeff() <= 1.0 + 1e-12);
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  CHECK(lo.isApprox(Vec3(0, 0, 0), 1e-12));
  CHECK(hi.isApprox(Vec3(1, 1, 1), 1e-12));
}

TEST_CASE("rot6d of the identity") {
  Rot6d r;
  r << 1, 0, 0, 0, 1, 0;
  CHECK(rot6d_to_rotation(r).isApprox(Mat3::Identity(), 1e-12));
  CHECK(rot6d_to_rotation(2.0 * r).isApprox(Mat3::Identity(), 1e-12));

  const Mat3 rz90 = so3_exp(Vec3(0, 0, M_PI / 2));
  const Rot6d encoded = rotation_to_rot6d(rz90);
  CHECK(encoded[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(encoded[1] == doctest::Approx(1.0));
  CHECK(encoded[3] == doctest::Approx(-1.0));
}

TEST_CASE("rot6d round trip and scale invariance") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = random_rotation(rng);
    const Mat3 back = rot6d_to_rotation(rotation_to_rot6d(r));
    CHECK((back - r).cwiseAbs().maxCoeff() < 1e-9);

    const double s = rng.uniform(0.1, 10.0);
    const Mat3 scaled = rot6d_to_rotation(s * rotation_to_rot6d(r));
    CHECK((scaled - r).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rot6d orthonormalizes non-orthogonal input") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    Rot6d r;
    for (int k = 0; k < 6; ++k) r[k] = rng.uniform(-1, 1);
    const Vec3 a1 = r.head<3>(), a2 = r.tail<3>();
    if (a1.norm() < 1e-3 || a2.norm() < 1e-3 || a1.normalized().cross(a2.normalized()).norm() < 1e-3) continue;
    const Mat3 rot = rot6d_to_rotation(r);
    CHECK((rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(rot.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rot6d rejects parallel columns") {
  Rot6d r;
  r << 1, 0, 0, 2, 0, 0;
  CHECK_THROWS_AS(rot6d_to_rotation(r), std::invalid_argument);
  r << 0, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS(rot6d_to_rotation(r), std::invalid_argument);
}

TEST_CASE("pinhole projection") {
  CameraIntrinsics k{100.0, 100.0, 64.0, 64.0, 128, 128};
  const Pose id = Pose::identity();
  const ProjectedPoint on_axis = project_point(k, id, Vec3(0, 0, 1));
  CHECK(on_axis.u == doctest::Approx(64.0));
  CHECK(on_axis.v == doctest::Approx(64.0));

  const ProjectedPoint p = project_point(k, id, Vec3(0.1, 0, 1));
  CHECK(p.u == doctest::Approx(74.0));
  CHECK(p.v == doctest::Approx(64.0));

  CHECK_THROWS_AS(project_point(k, id, Vec3(0, 0, -1)), std::invalid_argument);
  CHECK_THROWS_AS(project_point(k, id, Vec3(0, 0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(backproject(k, 64, 64, 0.0), std::invalid_argument);

  CHECK(backproject(k, 64.0, 64.0, 2.0).isApprox(Vec3(0, 0, 2), 1e-12));
}

TEST_CASE("project/backproject round trip") {
  CameraIntrinsics k{150.0, 140.0, 63.0, 66.0, 128, 128};
  Rng rng(9);
  Pose pose;
  pose.rotation = random_rotation(rng);
  pose.translation = Vec3(0.1, -0.2, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double depth = rng.uniform(0.1, 10.0);
    const Vec3 cam_point = backproject(k, rng.uniform(0, 128), rng.uniform(0, 128), depth);
    const Vec3 model_point = pose_invert(pose).apply(cam_point);
    const ProjectedPoint proj = project_point(k, pose, model_point);
    const Vec3 back = backproject(k, proj.u, proj.v, proj.depth);
    CHECK((back - cam_point).norm() < 1e-9);
  }
}

TEST_CASE("pose group laws") {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    Pose a, b, c;
    a.rotation = random_rotation(rng);
    a.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    b.rotation = random_rotation(rng);
    b.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    c.rotation = random_rotation(rng);
    c.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));

    const Pose aa = pose_compose(a, pose_invert(a));
    CHECK((aa.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(aa.translation.norm() < 1e-12);

    const Pose ab_c = pose_compose(pose_compose(a, b), c);
    const Pose a_bc = pose_compose(a, pose_compose(b, c));
    CHECK((ab_c.rotation - a_bc.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ab_c.translation - a_bc.translation).norm() < 1e-9);

    const Pose ib = pose_compose(Pose::identity(), b);
    CHECK((ib.rotation - b.rotation).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("pose validation") {
  Pose bad;
  bad.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(validate_pose(bad), std::invalid_argument);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_FALSE(is_rotation(reflection));
}

TEST_CASE("obj save/load round trip") {
  const Mesh mesh = make_icosphere(0.4, 1);
  const std::string path = (std::filesystem::temp_directory_path() / "nocspose_test_sphere.obj").string();
  save_obj(mesh, path);
  const Mesh loaded = load_obj(path);
  REQUIRE(loaded.vertices.size() == mesh.vertices.size());
  REQUIRE(loaded.faces.size() == mesh.faces.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    CHECK((loaded.vertices[i] - mesh.vertices[i]).norm() < 1e-12);
  }
  CHECK(loaded.diameter == doctest::Approx(mesh.diameter));
  std::filesystem::remove(path);
}

TEST_CASE("obj parser handles slash syntax and quads") {
  const std::string path = (std::filesystem::temp_directory_path() / "nocspose_test_quad.obj").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 1\nf 1/1 2/2 3/3 4/4\n", f);
    std::fclose(f);
  }
  const Mesh mesh = load_obj(path);
  CHECK(mesh.vertices.size() == 4);
  CHECK(mesh.faces.size() == 2);  // quad fan-triangulated
  std::filesystem::remove(path);
}

TEST_CASE("ply parser") {
  const std::string path = (std::filesystem::temp_directory_path() / "nocspose_test.ply").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(
        "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 2\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0\n1 0 0\n1 1 0\n0 1 1\n3 0 1 2\n3 0 2 3\n",
        f);
    std::fclose(f);
  }
  const Mesh mesh = load_ply(path);
  CHECK(mesh.vertices.size() == 4);
  CHECK(mesh.faces.size() == 2);
  CHECK(mesh.vertices[3].isApprox(Vec3(0, 1, 1)));
  std::filesystem::remove(path);
}

TEST_CASE("mesh validation") {
  Mesh no_faces;
  no_faces.vertices = {Vec3(0, 0, 0)};
  CHECK_THROWS_AS(no_faces.finalize(), std::invalid_argument);

  Mesh bad_index;
  bad_index.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  bad_index.faces = {{0, 1, 3}};
  CHECK_THROWS_AS(bad_index.finalize(), std::invalid_argument);
}

TEST_CASE("pose and camera JSON round trip") {
  Rng rng(11);
  Pose pose;
  pose.rotation = random_rotation(rng);
  pose.translation = Vec3(0.3, -1.2, 2.5);
  const Pose back = pose_from_json(pose_to_json(pose));
  CHECK((back.rotation - pose.rotation).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.translation - pose.translation).norm() < 1e-15);

  CameraIntrinsics k{180.0, 175.0, 64.0, 63.0, 128, 127};
  const CameraIntrinsics kb = camera_from_json(camera_to_json(k));
  CHECK(kb.fx == k.fx);
  CHECK(kb.height == k.height);

  Json bad = camera_to_json(k);
  bad["fx"] = -1.0;
  CHECK_THROWS(camera_from_json(bad));
}

TEST_CASE("rig JSON round trip") {
  Rng rng(12);
  std::vector<RigEntry> rig;
  for (int i = 0; i < 3; ++i) {
    RigEntry e;
    e.id = "frame_" + std::to_string(i);
    e.camera = CameraIntrinsics{180.0, 180.0, 64.0, 64.0, 128, 128};
    e.pose.rotation = random_rotation(rng);
    e.pose.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    rig.push_back(std::move(e));
  }
  const std::vector<RigEntry> back = rig_from_json(rig_to_json(rig));
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == rig[i].id);
    CHECK((back[i].pose.rotation - rig[i].pose.rotation).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(back[i].camera.fx == rig[i].camera.fx);
  }
}

TEST_CASE("rng is reproducible and uniform helpers behave") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(124);
  CHECK(a.next_u64() != c.next_u64());

  Rng r(5);
  double mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += r.uniform(-2.0, 2.0);
  mean /= n;
  CHECK(std::abs(mean) < 0.02);

  double var = 0.0;
  Rng g(6);
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    var += x * x;
  }
  CHECK(var / n == doctest::Approx(1.0).epsilon(0.02));
}
