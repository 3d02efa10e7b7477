#pragma once

#include "nocspose/geometry.hpp"

#include <vector>

namespace nocspose {

enum class SymmetryKind { none, continuous_axis, discrete };

/// Object symmetry description in the model frame. The axis is canonicalized
/// to model Z internally: axis_to_z rotates the stated axis onto +Z and all
/// closed forms are evaluated in that canonical frame.
struct SymmetrySpec {
  SymmetryKind kind = SymmetryKind::none;
  Vec3 axis = Vec3(0.0, 0.0, 1.0);
  std::vector<Mat3> transforms;  // discrete group, includes identity
  Mat3 axis_to_z = Mat3::Identity();

  static SymmetrySpec none_spec() { return {}; }
  static SymmetrySpec continuous(const Vec3& axis);
  /// Discrete rotations about the axis by the given angles; 0 (identity) is
  /// added if missing.
  static SymmetrySpec discrete_about_axis(const Vec3& axis, const std::vector<double>& angles_deg);

  void validate() const;
};

/// Result of symmetry disambiguation. `sym` is rotation-only and satisfies
/// input = pose_compose(adjusted, sym) exactly, so `adjusted` is the
/// canonical orbit representative used for rendering consistent NOCS maps.
struct Disambiguation {
  Pose adjusted;
  Pose sym;
};

/// Rotates the pose about the symmetry axis so the camera center lies in the
/// canonical YZ half-plane (x = 0, y >= 0). A camera on the axis yields the
/// identity correction.
Disambiguation disambiguate_continuous(const Pose& pose, const SymmetrySpec& spec);

/// Picks the group element bringing the camera direction closest to the +Y
/// base region.
Disambiguation disambiguate_discrete(const Pose& pose, const SymmetrySpec& spec);

/// Dispatch on spec.kind; kind=none returns the pose with an identity sym.
Disambiguation disambiguate(const Pose& pose, const SymmetrySpec& spec);

/// All orbit-equivalent poses: group elements for discrete symmetry,
/// n_samples equally spaced axis rotations for continuous, the pose itself
/// for none.
std::vector<Pose> orbit_poses(const Pose& pose, const SymmetrySpec& spec, int n_samples = 360);

/// min over orbit_poses(gt) of add_metric(est, orbit pose).
double symmetry_min_add(const Pose& est, const Pose& gt, const Mesh& mesh, const SymmetrySpec& spec,
                        int n_samples = 360);

}  // namespace nocspose
