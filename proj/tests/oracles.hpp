#pragma once

// Independent brute-force oracles used by the test suites. These deliberately
// avoid the library's rasterization / search code paths.

#include "nocspose/geometry.hpp"
#include "nocspose/solvers.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracles {

using nocspose::CameraIntrinsics;
using nocspose::Mesh;
using nocspose::Pose;
using nocspose::Vec3;

struct RayHit {
  double cam_depth = 0.0;
  Vec3 model_point = Vec3::Zero();
};

/// Moller-Trumbore intersection of the pixel-center ray with every triangle;
/// returns the nearest hit in camera depth.
inline std::optional<RayHit> ray_cast(const Mesh& mesh, const Pose& pose, const CameraIntrinsics& k,
                                      int px, int py) {
  const Vec3 dir_cam((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0);
  const Pose inv = nocspose::pose_invert(pose);
  const Vec3 origin = inv.translation;  // camera center in model frame
  const Vec3 dir = inv.rotation * dir_cam;

  std::optional<RayHit> best;
  for (const auto& f : mesh.faces) {
    const Vec3& v0 = mesh.vertices[f[0]];
    const Vec3 e1 = mesh.vertices[f[1]] - v0;
    const Vec3 e2 = mesh.vertices[f[2]] - v0;
    const Vec3 pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) continue;
    const Vec3 tvec = origin - v0;
    const double u = tvec.dot(pvec) / det;
    if (u < -1e-12 || u > 1.0 + 1e-12) continue;
    const Vec3 qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) / det;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
    const double t = e2.dot(qvec) / det;
    if (t <= 1e-9) continue;
    const Vec3 hit_model = origin + t * dir;
    const double cam_depth = pose.apply(hit_model).z();
    if (!best || cam_depth < best->cam_depth) best = RayHit{cam_depth, hit_model};
  }
  return best;
}

/// Closest distance from a point to a triangle (Ericson's region test).
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + (c - b) * w)).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

inline double point_to_mesh_distance(const Vec3& p, const Mesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                                  mesh.vertices[f[2]]));
  }
  return best;
}

/// Windowed-mean depth parameterization computed directly.
inline std::vector<double> windowed_mean_reference(const std::vector<double>& values, int width, int height,
                                                   int radius) {
  std::vector<double> out(values.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int yy = y - radius; yy <= y + radius; ++yy) {
        for (int xx = x - radius; xx <= x + radius; ++xx) {
          if (xx < 0 || xx >= width || yy < 0 || yy >= height) continue;
          sum += values[static_cast<size_t>(yy) * width + xx];
          ++count;
        }
      }
      out[static_cast<size_t>(y) * width + x] = values[static_cast<size_t>(y) * width + x] - sum / count;
    }
  }
  return out;
}

/// Exhaustive nearest-valid-pixel search with the row-major tie rule.
inline size_t nearest_valid_reference(const std::vector<uint8_t>& hole, int width, int height, int x, int y) {
  long long best_d2 = std::numeric_limits<long long>::max();
  size_t best = 0;
  for (int yy = 0; yy < height; ++yy) {
    for (int xx = 0; xx < width; ++xx) {
      const size_t p = static_cast<size_t>(yy) * width + xx;
      if (hole[p]) continue;
      const long long dx = xx - x, dy = yy - y;
      const long long d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = p;
      }
    }
  }
  return best;
}

/// Residual of the best rigid alignment found by a coarse SO(3) grid with
/// Gauss-Newton polish; translation is closed-form per rotation.
inline double kabsch_reference_residual(const nocspose::Correspondences3D3D& pairs) {
  using nocspose::Mat3;
  const size_t n = pairs.model_points.size();
  Vec3 mc = Vec3::Zero(), pc = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mc += pairs.model_points[i];
    pc += pairs.camera_points[i];
  }
  mc /= static_cast<double>(n);
  pc /= static_cast<double>(n);

  auto residual = [&](const Mat3& r) {
    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sse += (r * (pairs.model_points[i] - mc) - (pairs.camera_points[i] - pc)).squaredNorm();
    }
    return sse;
  };

  double best = std::numeric_limits<double>::infinity();
  Mat3 best_r = Mat3::Identity();
  const int steps = 12;
  for (int a = 0; a < steps; ++a) {
    for (int b = 0; b < steps; ++b) {
      for (int c = 0; c < steps; ++c) {
        const Mat3 r = nocspose::so3_exp(Vec3(0, 0, 2.0 * M_PI * a / steps)) *
                       nocspose::so3_exp(Vec3(0, M_PI * (b + 0.5) / steps, 0)) *
                       nocspose::so3_exp(Vec3(0, 0, 2.0 * M_PI * c / steps));
        const double sse = residual(r);
        if (sse < best) {
          best = sse;
          best_r = r;
        }
      }
    }
  }
  // local polish by coordinate descent over small axis rotations
  double step = 0.2;
  while (step > 1e-9) {
    bool improved = false;
    for (int axis = 0; axis < 3; ++axis) {
      for (double sign : {-1.0, 1.0}) {
        const Mat3 r = nocspose::so3_exp(sign * step * Vec3::Unit(axis)) * best_r;
        const double sse = residual(r);
        if (sse < best) {
          best = sse;
          best_r = r;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace oracles
