#include "nocspose/geometry.hpp"

#include "nocspose/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace nocspose {

Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose pose_invert(const Pose& a) {
  Pose out;
  out.rotation = a.rotation.transpose();
  out.translation = -(out.rotation * a.translation);
  return out;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 gram = r.transpose() * r;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

void validate_pose(const Pose& p, double tol) {
  if (!is_rotation(p.rotation, tol)) {
    throw std::invalid_argument("pose rotation is not a proper rotation matrix");
  }
}

void CameraIntrinsics::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("camera image size must be at least 1x1");
}

void Mesh::finalize() {
  if (faces.empty()) throw std::invalid_argument("mesh has no faces");
  const int n = static_cast<int>(vertices.size());
  for (const auto& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n) throw std::invalid_argument("mesh face index out of range");
    }
  }
  double max_sq = 0.0;
#pragma omp parallel for reduction(max : max_sq) schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      max_sq = std::max(max_sq, (vertices[i] - vertices[j]).squaredNorm());
    }
  }
  diameter = std::sqrt(max_sq);
  if (!(diameter > 0.0)) throw std::invalid_argument("mesh diameter is zero");
}

NocsBounds compute_nocs_bounds(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw std::invalid_argument("mesh has no vertices");
  NocsBounds b;
  b.min = mesh.vertices.front();
  b.max = mesh.vertices.front();
  for (const Vec3& v : mesh.vertices) {
    b.min = b.min.cwiseMin(v);
    b.max = b.max.cwiseMax(v);
  }
  for (int d = 0; d < 3; ++d) {
    if (!(b.max[d] > b.min[d])) throw std::invalid_argument("flat model");
  }
  return b;
}

Vec3 nocs_project(const Vec3& v, const NocsBounds& bounds) {
  return (v - bounds.min).cwiseQuotient(bounds.extent());
}

Vec3 nocs_unproject(const Vec3& c, const NocsBounds& bounds) {
  return bounds.min + c.cwiseProduct(bounds.extent());
}

Mat3 rot6d_to_rotation(const Rot6d& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const double n2 = a2.norm();
  if (n1 < 1e-12 || n2 < 1e-12) throw std::invalid_argument("rot6d column is zero");
  if ((a1 / n1).cross(a2 / n2).norm() < 1e-12) {
    throw std::invalid_argument("rot6d columns are parallel");
  }
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const Vec3 b2 = u2 / u2.norm();
  const Vec3 b3 = b1.cross(b2);
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b3;
  return out;
}

Rot6d rotation_to_rot6d(const Mat3& r) {
  Rot6d out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

ProjectedPoint project_point(const CameraIntrinsics& k, const Pose& pose, const Vec3& v) {
  const Vec3 p = pose.apply(v);
  if (!(p.z() > 0.0)) throw std::invalid_argument("point behind camera");
  ProjectedPoint out;
  out.u = k.fx * p.x() / p.z() + k.cx;
  out.v = k.fy * p.y() / p.z() + k.cy;
  out.depth = p.z();
  return out;
}

Vec3 backproject(const CameraIntrinsics& k, double u, double v, double depth) {
  if (!(depth > 0.0)) throw std::invalid_argument("depth must be positive");
  return Vec3((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(axis_angle);
  const Vec3 axis = axis_angle / theta;
  const Mat3 k = skew(axis);
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-9) q = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Pose perturb_pose(const Pose& pose, double rot_rad, double trans, Rng& rng) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  while (axis.norm() < 1e-9) axis = Vec3(rng.normal(), rng.normal(), rng.normal());
  Vec3 dir(rng.normal(), rng.normal(), rng.normal());
  while (dir.norm() < 1e-9) dir = Vec3(rng.normal(), rng.normal(), rng.normal());
  Pose out;
  out.rotation = so3_exp(axis.normalized() * rot_rad) * pose.rotation;
  out.translation = pose.translation + dir.normalized() * trans;
  return out;
}

}  // namespace nocspose
