#pragma once

#include "nocspose/correspondence.hpp"
#include "nocspose/geometry.hpp"

#include <cstdint>
#include <vector>

namespace nocspose {

struct RansacConfig {
  int max_iters = 300;
  double inlier_threshold = 0.0;  // pixels for PnP, model units for Kabsch
  int min_inlier_count = 12;
  double confidence = 0.995;  // early-exit confidence
  uint64_t seed = 0;

  void validate() const;
};

struct SolveResult {
  Pose pose;
  std::vector<int> inlier_indices;  // positions in the input correspondence list
  double mean_inlier_residual = 0.0;
};

/// Least-squares rigid transform minimizing sum |R*m_i + t - p_i|^2 via the
/// cross-covariance SVD with reflection correction. Throws on collinear or
/// degenerate configurations.
Pose kabsch(const Correspondences3D3D& pairs);

/// RANSAC over 3-point minimal samples with a final Kabsch refit on the
/// inliers. Sampling is driven by the seed over a canonical content-sorted
/// order, so the result is invariant to permutations of the input list.
SolveResult kabsch_ransac(const Correspondences3D3D& pairs, const RansacConfig& cfg);
SolveResult kabsch_ransac_serial(const Correspondences3D3D& pairs, const RansacConfig& cfg);

/// EPnP: four control points (three in the planar case), null space of the
/// 2n x 12 system, beta-case selection with Gauss-Newton beta refinement,
/// pose from control points by Kabsch. Returns the candidate with the lowest
/// reprojection error.
Pose epnp(const Correspondences2D3D& pairs, const CameraIntrinsics& k);

/// RANSAC over 4-point EPnP samples, final EPnP refit on the inliers
/// followed by Gauss-Newton reprojection refinement.
SolveResult pnp_ransac(const Correspondences2D3D& pairs, const CameraIntrinsics& k, const RansacConfig& cfg);
SolveResult pnp_ransac_serial(const Correspondences2D3D& pairs, const CameraIntrinsics& k,
                              const RansacConfig& cfg);

/// Per-point PCA plane normals from the k nearest neighbors, unit length,
/// oriented toward the camera origin.
std::vector<Vec3> estimate_normals(const std::vector<Vec3>& cloud, int k);

/// Point-to-plane ICP of the model cloud onto the scene cloud. Associations
/// are nearest neighbors within corr_dist; iterations that do not reduce the
/// RMS point-to-plane residual are rejected and terminate the loop.
Pose icp_point_to_plane(const std::vector<Vec3>& model_cloud, const std::vector<Vec3>& scene_cloud,
                        const std::vector<Vec3>& scene_normals, const Pose& init, int max_iters,
                        double corr_dist);

}  // namespace nocspose
