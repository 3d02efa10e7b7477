#include "nocspose/symmetry.hpp"

#include "nocspose/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nocspose {

namespace {

Mat3 rotation_about_z(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

/// Shortest rotation taking `axis` onto +Z.
Mat3 align_axis_to_z(const Vec3& axis) {
  const Vec3 a = axis.normalized();
  const Vec3 z(0.0, 0.0, 1.0);
  const double c = a.dot(z);
  if (c > 1.0 - 1e-12) return Mat3::Identity();
  if (c < -1.0 + 1e-12) {
    Mat3 flip;
    flip << 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0;  // 180 deg about X
    return flip;
  }
  const Vec3 v = a.cross(z);
  Mat3 vx;
  vx << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return Mat3::Identity() + vx + vx * vx * (1.0 / (1.0 + c));
}

/// Rotation about the spec axis, expressed in the model frame.
Mat3 rotation_about_axis(const SymmetrySpec& spec, double angle) {
  return spec.axis_to_z.transpose() * rotation_about_z(angle) * spec.axis_to_z;
}

}  // namespace

SymmetrySpec SymmetrySpec::continuous(const Vec3& axis) {
  SymmetrySpec spec;
  spec.kind = SymmetryKind::continuous_axis;
  spec.axis = axis.normalized();
  spec.axis_to_z = align_axis_to_z(axis);
  spec.validate();
  return spec;
}

SymmetrySpec SymmetrySpec::discrete_about_axis(const Vec3& axis, const std::vector<double>& angles_deg) {
  SymmetrySpec spec;
  spec.kind = SymmetryKind::discrete;
  spec.axis = axis.normalized();
  spec.axis_to_z = align_axis_to_z(axis);
  bool has_identity = false;
  for (double deg : angles_deg) {
    const double rad = deg * M_PI / 180.0;
    spec.transforms.push_back(rotation_about_axis(spec, rad));
    if (std::abs(std::remainder(rad, 2.0 * M_PI)) < 1e-12) has_identity = true;
  }
  if (!has_identity) spec.transforms.insert(spec.transforms.begin(), Mat3::Identity());
  spec.validate();
  return spec;
}

void SymmetrySpec::validate() const {
  if (kind == SymmetryKind::none) return;
  if (std::abs(axis.norm() - 1.0) > 1e-9) throw std::invalid_argument("symmetry axis must be unit length");
  if (kind == SymmetryKind::discrete) {
    if (transforms.empty()) throw std::invalid_argument("discrete symmetry group is empty");
    bool has_identity = false;
    for (const Mat3& g : transforms) {
      if (!is_rotation(g, 1e-9)) throw std::invalid_argument("discrete symmetry element is not a rotation");
      if ((g - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9) has_identity = true;
    }
    if (!has_identity) throw std::invalid_argument("discrete symmetry group lacks the identity");
    for (const Mat3& a : transforms) {
      for (const Mat3& b : transforms) {
        const Mat3 ab = a * b;
        double best = 1e30;
        for (const Mat3& g : transforms) best = std::min(best, (ab - g).cwiseAbs().maxCoeff());
        if (best > 1e-9) throw std::invalid_argument("discrete symmetry group is not closed");
      }
    }
  }
}

Disambiguation disambiguate_continuous(const Pose& pose, const SymmetrySpec& spec) {
  if (spec.kind != SymmetryKind::continuous_axis) {
    throw std::invalid_argument("spec is not a continuous-axis symmetry");
  }
  const Vec3 cam = spec.axis_to_z * pose.camera_center();
  Disambiguation out;
  out.adjusted = pose;
  out.sym = Pose::identity();
  const double r = std::hypot(cam.x(), cam.y());
  if (r < 1e-9) return out;  // camera on the axis: every choice is equivalent

  // R_z rotating the camera's XY projection onto +Y: afterwards the camera
  // center has x = 0, y = r >= 0.
  const double angle = std::atan2(cam.x(), cam.y());
  const Mat3 rz = rotation_about_axis(spec, angle);
  out.sym.rotation = rz;
  out.adjusted.rotation = pose.rotation * rz.transpose();
  return out;
}

Disambiguation disambiguate_discrete(const Pose& pose, const SymmetrySpec& spec) {
  if (spec.kind != SymmetryKind::discrete) throw std::invalid_argument("spec is not a discrete symmetry");
  const Vec3 cam = pose.camera_center();
  const Vec3 base_dir = spec.axis_to_z.transpose() * Vec3(0.0, 1.0, 0.0);
  double best_score = -2.0;
  Mat3 best_g = Mat3::Identity();
  for (const Mat3& g : spec.transforms) {
    const Vec3 moved = g * cam;
    const double n = moved.norm();
    const double score = n < 1e-12 ? 1.0 : moved.dot(base_dir) / n;
    if (score > best_score + 1e-15) {
      best_score = score;
      best_g = g;
    }
  }
  Disambiguation out;
  out.sym.rotation = best_g;
  out.adjusted.rotation = pose.rotation * best_g.transpose();
  out.adjusted.translation = pose.translation;
  return out;
}

Disambiguation disambiguate(const Pose& pose, const SymmetrySpec& spec) {
  switch (spec.kind) {
    case SymmetryKind::none: {
      Disambiguation out;
      out.adjusted = pose;
      return out;
    }
    case SymmetryKind::continuous_axis:
      return disambiguate_continuous(pose, spec);
    case SymmetryKind::discrete:
      return disambiguate_discrete(pose, spec);
  }
  throw std::logic_error("unreachable");
}

std::vector<Pose> orbit_poses(const Pose& pose, const SymmetrySpec& spec, int n_samples) {
  std::vector<Pose> orbit;
  switch (spec.kind) {
    case SymmetryKind::none:
      orbit.push_back(pose);
      break;
    case SymmetryKind::discrete:
      for (const Mat3& g : spec.transforms) {
        Pose p = pose;
        p.rotation = pose.rotation * g;
        orbit.push_back(p);
      }
      break;
    case SymmetryKind::continuous_axis: {
      if (n_samples < 1) throw std::invalid_argument("orbit n_samples must be >= 1");
      for (int i = 0; i < n_samples; ++i) {
        Pose p = pose;
        p.rotation = pose.rotation * rotation_about_axis(spec, 2.0 * M_PI * i / n_samples);
        orbit.push_back(p);
      }
      break;
    }
  }
  return orbit;
}

double symmetry_min_add(const Pose& est, const Pose& gt, const Mesh& mesh, const SymmetrySpec& spec,
                        int n_samples) {
  double best = std::numeric_limits<double>::infinity();
  for (const Pose& p : orbit_poses(gt, spec, n_samples)) {
    best = std::min(best, add_metric(est, p, mesh));
  }
  return best;
}

}  // namespace nocspose
