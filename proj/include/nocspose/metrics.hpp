#pragma once

#include "nocspose/correspondence.hpp"
#include "nocspose/geometry.hpp"
#include "nocspose/symmetry.hpp"

#include <string>
#include <vector>

namespace nocspose {

/// Per-frame evaluation row.
struct EvalRecord {
  std::string object_id;
  std::string frame_id;
  std::string stage = "estimate";  // estimate | initial | refined
  bool success = false;
  std::string error;
  double add = 0.0;
  double add_sym = 0.0;
  double corr_err_median = 0.0;
  double dice_score = 0.0;
  double iou_score = 0.0;
  int inlier_count = 0;
  double mean_inlier_residual = 0.0;
  double solve_ms = 0.0;  // wall time; kept out of serialized records
};

/// Mean vertex displacement between the two poses.
double add_metric(const Pose& est, const Pose& gt, const Mesh& mesh);

/// Fraction of successful records with add_sym below threshold_frac of the
/// mesh diameter.
double add_recall(const std::vector<EvalRecord>& records, const Mesh& mesh, double threshold_frac = 0.1);

/// 2|A^B| / (|A|+|B|); two empty masks score 1.
double dice(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

/// |A^B| / |AvB|; two empty masks score 0.
double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

/// Symmetry-aware median per-correspondence L2 error in model units: the
/// orbit pose of gt_pose minimizing the median over mutually-foreground
/// pixels of |decode(pred) - decode(gt orbit render)| back-projected through
/// the bounds. Non-identity orbit elements are re-rendered with the given
/// camera. Throws if no orbit candidate shares foreground with pred.
double correspondence_error(const NocsMap& pred, const NocsMap& gt, const Mesh& mesh, const NocsBounds& bounds,
                            const CameraIntrinsics& k, const Pose& gt_pose, const SymmetrySpec& spec,
                            int n_orbit = 36);

/// Foreground cross entropy summed over the three NOCS dimensions.
/// probs is H*W*3*256 (innermost bins), normalized per pixel per dimension.
double nocs_ce_loss(const std::vector<float>& probs, const NocsMap& gt);

/// alpha * (1 - dice) + nocs_ce_loss.
double total_loss(const std::vector<float>& probs, const std::vector<uint8_t>& mask_pred, const NocsMap& gt,
                  double alpha = 5.0);

}  // namespace nocspose
