#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nocspose/mesh_primitives.hpp"
#include "nocspose/metrics.hpp"
#include "nocspose/rasterizer.hpp"
#include "nocspose/rng.hpp"

#include <cmath>

using namespace nocspose;

TEST_CASE("ADD of identical and translated poses") {
  const Mesh cube = make_cube(1.0);
  Rng rng(1);
  Pose gt;
  gt.rotation = random_rotation(rng);
  gt.translation = Vec3(0.2, -0.4, 1.0);
  CHECK(add_metric(gt, gt, cube) == 0.0);

  Pose moved = gt;
  moved.translation += Vec3(0.3, 0.4, 0.0);  // |t| = 0.5
  CHECK(add_metric(moved, gt, cube) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ADD of a 180 degree flip matches the direct vertex sum") {
  const Mesh cube = make_cube(1.0);
  const Pose gt = Pose::identity();
  Pose flipped;
  flipped.rotation = so3_exp(Vec3(0, 0, M_PI));

  double direct = 0.0;
  for (const Vec3& v : cube.vertices) direct += (flipped.rotation * v - v).norm();
  direct /= static_cast<double>(cube.vertices.size());
  CHECK(add_metric(flipped, gt, cube) == doctest::Approx(direct).epsilon(1e-12));
  // every cube corner moves by twice its XY radius under the Z flip
  CHECK(direct == doctest::Approx(2.0 * std::hypot(0.5, 0.5)));
}

TEST_CASE("add_recall counts successes under the threshold") {
  const Mesh cube = make_cube(1.0);
  auto rec = [](double add_sym, bool success = true) {
    EvalRecord r;
    r.success = success;
    r.add = add_sym;
    r.add_sym = add_sym;
    return r;
  };
  std::vector<EvalRecord> exact(5, rec(0.0));
  CHECK(add_recall(exact, cube) == 1.0);

  std::vector<EvalRecord> awful(4, rec(cube.diameter));
  CHECK(add_recall(awful, cube) == 0.0);

  // mixed set against a direct count at the 0.1 * diameter threshold
  std::vector<EvalRecord> mixed;
  const std::vector<double> values{0.01, 0.05, 0.3, 0.17, 0.002, 0.9, 0.12};
  int expected = 0;
  for (double v : values) {
    mixed.push_back(rec(v));
    expected += v < 0.1 * cube.diameter ? 1 : 0;
  }
  mixed.push_back(rec(0.0, false));  // failures never count as hits
  CHECK(add_recall(mixed, cube) == doctest::Approx(static_cast<double>(expected) / mixed.size()));
  CHECK_THROWS(add_recall({}, cube));
}

TEST_CASE("dice and iou") {
  std::vector<uint8_t> a(200, 0), b(200, 0);
  for (int i = 0; i < 100; ++i) a[i] = 1;
  for (int i = 50; i < 150; ++i) b[i] = 1;
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, b) == doctest::Approx(0.5));
  CHECK(iou(a, b) == doctest::Approx(50.0 / 150.0));
  CHECK(dice(a, b) == dice(b, a));
  CHECK(iou(a, b) == iou(b, a));
  CHECK(dice(a, b) >= iou(a, b));

  std::vector<uint8_t> disjoint(200, 0);
  for (int i = 150; i < 200; ++i) disjoint[i] = 1;
  CHECK(dice(a, disjoint) == 0.0);
  CHECK(iou(a, disjoint) == 0.0);

  // nested quarter-area mask inside the full mask
  std::vector<uint8_t> full(64, 1), quarter(64, 0);
  for (int i = 0; i < 16; ++i) quarter[i] = 1;
  CHECK(iou(full, quarter) == doctest::Approx(0.25));

  const std::vector<uint8_t> empty(200, 0);
  CHECK(dice(empty, empty) == 1.0);  // both empty
  CHECK(iou(empty, empty) == 0.0);   // degenerate, used by reference skipping
}

TEST_CASE("foreground cross entropy") {
  NocsMap gt = NocsMap::empty(4, 4);
  for (int i = 0; i < 8; ++i) gt.mask[i] = 1;
  for (size_t p = 0; p < gt.mask.size(); ++p) {
    for (int d = 0; d < 3; ++d) gt.bins[p * 3 + d] = static_cast<uint8_t>((p * 31 + d * 7) % 256);
  }

  std::vector<float> one_hot(4 * 4 * 3 * 256, 0.0f);
  for (size_t p = 0; p < gt.mask.size(); ++p) {
    for (int d = 0; d < 3; ++d) one_hot[(p * 3 + d) * 256 + gt.bins[p * 3 + d]] = 1.0f;
  }
  CHECK(nocs_ce_loss(one_hot, gt) == doctest::Approx(0.0));

  std::vector<float> uniform(4 * 4 * 3 * 256, 1.0f / 256.0f);
  CHECK(nocs_ce_loss(uniform, gt) == doctest::Approx(8.0 * 3.0 * std::log(256.0)).epsilon(1e-4));

  NocsMap empty_fg = NocsMap::empty(4, 4);
  CHECK(nocs_ce_loss(uniform, empty_fg) == 0.0);

  std::vector<float> bad = uniform;
  bad[0] = 0.5f;
  CHECK_THROWS(nocs_ce_loss(bad, gt));
}

TEST_CASE("total loss decomposition") {
  NocsMap gt = NocsMap::empty(4, 4);
  for (int i = 0; i < 8; ++i) gt.mask[i] = 1;
  std::vector<float> one_hot(4 * 4 * 3 * 256, 0.0f);
  for (size_t p = 0; p < gt.mask.size(); ++p) {
    for (int d = 0; d < 3; ++d) one_hot[(p * 3 + d) * 256 + gt.bins[p * 3 + d]] = 1.0f;
  }

  CHECK(total_loss(one_hot, gt.mask, gt) == doctest::Approx(0.0));

  // perfect NOCS with an imperfect mask isolates the dice term
  std::vector<uint8_t> half_mask(16, 0);
  for (int i = 0; i < 4; ++i) half_mask[i] = 1;
  const double d = dice(half_mask, gt.mask);
  CHECK(total_loss(one_hot, half_mask, gt, 5.0) == doctest::Approx(5.0 * (1.0 - d)));

  std::vector<float> uniform(4 * 4 * 3 * 256, 1.0f / 256.0f);
  CHECK(total_loss(uniform, half_mask, gt, 0.0) == doctest::Approx(nocs_ce_loss(uniform, gt)));
}

TEST_CASE("correspondence error of exact, offset and orbit-equivalent maps") {
  const Mesh cube = make_cube(0.8);
  const NocsBounds bounds = compute_nocs_bounds(cube);
  const CameraIntrinsics cam{120.0, 120.0, 48.0, 48.0, 96, 96};
  Rng rng(5);
  Pose gt;
  gt.rotation = random_rotation(rng);
  gt.translation = Vec3(0.0, 0.05, 2.0);
  const NocsMap gt_map = discretize_map(render(cube, bounds, gt, cam, 96, 96));
  const SymmetrySpec none = SymmetrySpec::none_spec();

  const double quant_bound = (bounds.extent() / 510.0).norm();
  CHECK(correspondence_error(gt_map, gt_map, cube, bounds, cam, gt, none) <= quant_bound);

  // shifting one channel by k bins moves the error by exactly k/255 * extent
  const int k_bins = 9;
  NocsMap offset = gt_map;
  for (size_t p = 0; p < offset.mask.size(); ++p) {
    if (!offset.mask[p]) continue;
    offset.bins[p * 3 + 0] = static_cast<uint8_t>(std::min(255, offset.bins[p * 3 + 0] + k_bins));
  }
  const double expected = k_bins / 255.0 * bounds.extent().x();
  CHECK(correspondence_error(offset, gt_map, cube, bounds, cam, gt, none) ==
        doctest::Approx(expected).epsilon(1e-9));

  // a prediction rendered from an orbit-equivalent pose scores near zero for
  // a symmetric object
  const Mesh cylinder = make_cylinder(0.3, 0.9, 128);
  const NocsBounds cyl_bounds = compute_nocs_bounds(cylinder);
  const SymmetrySpec cont = SymmetrySpec::continuous(Vec3(0, 0, 1));
  const NocsMap cyl_gt = discretize_map(render(cylinder, cyl_bounds, gt, cam, 96, 96));
  Pose orbited = gt;
  orbited.rotation = gt.rotation * so3_exp(Vec3(0, 0, 2.0 * M_PI * 10.0 / 36.0));
  const NocsMap pred = discretize_map(render(cylinder, cyl_bounds, orbited, cam, 96, 96));
  const double cyl_bound = 2.0 * (cyl_bounds.extent() / 510.0).norm();
  CHECK(correspondence_error(pred, cyl_gt, cylinder, cyl_bounds, cam, gt, cont, 36) <= cyl_bound);
  CHECK(correspondence_error(pred, cyl_gt, cylinder, cyl_bounds, cam, gt, none) > 10.0 * cyl_bound);

  NocsMap empty = NocsMap::empty(96, 96);
  CHECK_THROWS(correspondence_error(empty, gt_map, cube, bounds, cam, gt, none));
}
