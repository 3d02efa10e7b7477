#pragma once

#include "nocspose/correspondence.hpp"
#include "nocspose/geometry.hpp"
#include "nocspose/rasterizer.hpp"
#include "nocspose/symmetry.hpp"

#include <cstdint>
#include <vector>

namespace nocspose {

/// General robust distance (Barron). alpha is the shape, c the scale in the
/// same units as the argument.
struct RobustParams {
  double alpha = 1.0;
  double c = 1.0;

  void validate() const;
};

double robust_loss(double x, const RobustParams& p);
double robust_loss_grad(double x, const RobustParams& p);

/// rho(|unproject(pred) - unproject(rendered)|) in model units.
double pixel_loss(const Vec3& pred_nocs, const Vec3& rendered_nocs, const NocsBounds& bounds,
                  const RobustParams& robust);

/// One calibrated observation: the predicted map, the camera that renders its
/// viewport, and the absolute camera-to-world rig pose.
struct FrameObservation {
  NocsMap prediction;
  CameraIntrinsics camera;
  Pose rig_pose;
};

struct MultiViewSet {
  const Mesh* mesh = nullptr;
  NocsBounds bounds;
  SymmetrySpec symmetry;
  std::vector<FrameObservation> frames;
  std::vector<Pose> hypotheses;  // object pose per frame, in that frame's camera

  void validate() const;
  /// Relative camera transform from the reference frame to frame f.
  Pose relative_pose(int ref, int f) const;
};

enum class GradientMode { analytic, finite_diff };

struct RefinerConfig {
  GradientMode gradient_mode = GradientMode::analytic;
  double step_size = 1.0;  // fraction of the damped Gauss-Newton step
  int max_iters = 100;
  double convergence_tol = 1e-6;
  double fd_step = 1e-6;
};

/// Update parameterization: 6D rotation block then translation divided by the
/// mesh diameter, so a single step size serves both.
using RefineParams = Eigen::Matrix<double, 9, 1>;

/// Sum over frames and mutually-foreground pixels of the robust pixel loss,
/// rendering each frame at rel_pose * t_delta * t_pr with the symmetry
/// correction recomputed per frame for that pose. Frames without overlap
/// contribute zero.
double total_objective(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                       const RobustParams& robust);

/// Reference frame whose hypothesis re-projects best into the other frames:
/// per-frame masked loss divided by the mask IOU, averaged over the frames
/// with non-zero loss; candidates with zero loss everywhere are skipped.
int select_reference_frame(const MultiViewSet& set, const RobustParams& robust);

/// d(total objective)/d(params) at t_delta, with the per-frame symmetry
/// corrections frozen at the evaluation pose. The finite-difference mode is
/// the reference; the analytic mode freezes the pixel-to-model-point
/// association of the current render and chains through the screen-space
/// NOCS gradient.
RefineParams objective_gradient(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                                const RobustParams& robust, GradientMode mode, double fd_step = 1e-6);

struct RefineResult {
  Pose refined;  // object pose in the reference frame
  int reference = -1;
  Pose initial;
  std::vector<double> objective_history;
};

/// Gradient descent with backtracking line search over the pose update,
/// starting from the selected reference frame's hypothesis.
RefineResult refine(const MultiViewSet& set, const RefinerConfig& cfg, const RobustParams& robust);

enum class SamplingStrategy { closest, random, furthest };

/// Picks n views starting from index 0: greedy by angular distance between
/// viewing directions for closest/furthest, seed-deterministic for random.
/// Returned indices are sorted ascending.
std::vector<int> sample_views(const std::vector<Pose>& rig_poses, int n, SamplingStrategy strategy,
                              uint64_t seed);

}  // namespace nocspose
