// Benchmark comparing the OpenMP kernels against their serial references.
#include "nocspose/correspondence.hpp"
#include "nocspose/depth_aug.hpp"
#include "nocspose/mesh_primitives.hpp"
#include "nocspose/rasterizer.hpp"
#include "nocspose/rng.hpp"
#include "nocspose/solvers.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

namespace {

using namespace nocspose;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, equal ? "outputs equal" : "OUTPUTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", omp_get_max_threads());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {
    const Mesh mesh = make_icosphere(0.5, 4);  // 5120 triangles
    const NocsBounds bounds = compute_nocs_bounds(mesh);
    CameraIntrinsics k{600.0, 600.0, 256.0, 256.0, 512, 512};
    Pose pose;
    pose.translation = Vec3(0.0, 0.0, 1.6);
    RenderOutput a, b;
    const double serial = time_ms([&] { a = render_serial(mesh, bounds, pose, k, 512, 512); }, 5);
    const double parallel = time_ms([&] { b = render(mesh, bounds, pose, k, 512, 512); }, 5);
    const bool equal = a.mask == b.mask && a.nocs == b.nocs && a.depth == b.depth;
    report("render 512x512 5120 tris", serial, parallel, equal);
  }

  {
    DepthMap d = DepthMap::filled(512, 512, 2.0);
    Rng rng(3);
    for (size_t p = 0; p < d.values.size(); ++p) {
      d.values[p] += 0.1 * rng.uniform();
      if (rng.uniform() < 0.05) d.hole[p] = 1;
    }
    DepthMap a, b;
    const double serial = time_ms([&] { a = fill_holes_serial(d); }, 5);
    const double parallel = time_ms([&] { b = fill_holes(d); }, 5);
    report("fill_holes 512x512 (5%)", serial, parallel, a.values == b.values);
  }

  {
    DepthMap d = DepthMap::filled(512, 512, 2.0);
    Rng rng(4);
    for (double& v : d.values) v += 0.2 * rng.uniform();
    std::vector<double> a, b;
    const double serial = time_ms([&] { a = depth_parameterize_serial(d, 5); }, 5);
    const double parallel = time_ms([&] { b = depth_parameterize(d, 5); }, 5);
    report("depth_parameterize 512x512", serial, parallel, a == b);
  }

  {
    // 3D-3D registration with 40% outliers.
    Rng rng(5);
    Pose gt;
    gt.rotation = random_rotation(rng);
    gt.translation = Vec3(0.2, -0.1, 1.0);
    Correspondences3D3D pairs;
    for (int i = 0; i < 20000; ++i) {
      const Vec3 m(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      pairs.model_points.push_back(m);
      if (i % 5 < 2) {
        pairs.camera_points.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 2)));
      } else {
        pairs.camera_points.push_back(gt.apply(m));
      }
    }
    RansacConfig cfg;
    cfg.inlier_threshold = 0.02;
    cfg.max_iters = 200;
    cfg.confidence = 0.9999999;  // keep iterating so the benchmark is stable
    cfg.seed = 11;
    SolveResult a, b;
    const double serial = time_ms([&] { a = kabsch_ransac_serial(pairs, cfg); }, 3);
    const double parallel = time_ms([&] { b = kabsch_ransac(pairs, cfg); }, 3);
    const bool equal = a.inlier_indices == b.inlier_indices &&
                       (a.pose.rotation - b.pose.rotation).cwiseAbs().maxCoeff() == 0.0;
    report("kabsch_ransac 20k pairs", serial, parallel, equal);
  }

  return 0;
}
