#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace nocspose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Six reals holding the first two columns of a rotation matrix,
/// laid out as (col0, col1). The columns need not be orthonormal.
using Rot6d = Eigen::Matrix<double, 6, 1>;

/// Rigid transform p -> R*p + t. Translation is in model units.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Camera center expressed in the model frame, -R^T t.
  Vec3 camera_center() const { return -(rotation.transpose() * translation); }
};

/// Composition a*b: apply b first, then a (matrix-product order).
Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_invert(const Pose& a);

/// R^T R = I and det(R) = +1, both within tol.
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Throws std::invalid_argument if the pose violates the rotation invariants.
void validate_pose(const Pose& p, double tol = 1e-9);

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

/// Per-dimension min/max of the mesh vertices (model units).
struct NocsBounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

/// Triangle mesh in model units. Call finalize() after filling the fields;
/// it validates the topology and caches the diameter.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  double diameter = 0.0;

  void finalize();
};

/// Per-dimension min/max over all vertices. Throws "flat model" if a
/// dimension is degenerate (max == min).
NocsBounds compute_nocs_bounds(const Mesh& mesh);

/// (v_d - min_d) / (max_d - min_d) per dimension. Points outside the bounds
/// map outside [0,1]; callers clamp if they need to.
Vec3 nocs_project(const Vec3& v, const NocsBounds& bounds);

/// Exact inverse of nocs_project.
Vec3 nocs_unproject(const Vec3& c, const NocsBounds& bounds);

/// Gram-Schmidt on the two stored columns, third column by cross product.
/// Throws if the columns are near-parallel or near-zero.
Mat3 rot6d_to_rotation(const Rot6d& r);

Rot6d rotation_to_rot6d(const Mat3& r);

struct ProjectedPoint {
  double u = 0.0;  // continuous pixel coordinates; pixel (i,j) spans
  double v = 0.0;  // [i,i+1)x[j,j+1) with its center at (i+0.5, j+0.5)
  double depth = 0.0;  // camera-space z, model units
};

/// Pinhole projection of a model-frame point. Throws if the transformed
/// point is not strictly in front of the camera.
ProjectedPoint project_point(const CameraIntrinsics& k, const Pose& pose, const Vec3& v);

/// Inverse of project_point for a known depth (camera-space point out).
Vec3 backproject(const CameraIntrinsics& k, double u, double v, double depth);

/// Rodrigues' formula.
Mat3 so3_exp(const Vec3& axis_angle);

Mat3 skew(const Vec3& v);

class Rng;

/// Uniform random rotation (quaternion method).
Mat3 random_rotation(Rng& rng);

/// Rotates by `rot_rad` about a random axis and translates by `trans` in a
/// random direction.
Pose perturb_pose(const Pose& pose, double rot_rad, double trans, Rng& rng);

}  // namespace nocspose
