#include "nocspose/metrics.hpp"

#include "nocspose/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nocspose {

double add_metric(const Pose& est, const Pose& gt, const Mesh& mesh) {
  double sum = 0.0;
  for (const Vec3& v : mesh.vertices) sum += (est.apply(v) - gt.apply(v)).norm();
  return sum / static_cast<double>(mesh.vertices.size());
}

double add_recall(const std::vector<EvalRecord>& records, const Mesh& mesh, double threshold_frac) {
  if (records.empty()) throw std::invalid_argument("no records to score");
  const double threshold = threshold_frac * mesh.diameter;
  int hits = 0;
  for (const EvalRecord& r : records) {
    if (r.success && r.add_sym < threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

namespace {

void count_overlap(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b, size_t& na, size_t& nb,
                   size_t& both) {
  if (a.size() != b.size()) throw std::invalid_argument("mask size mismatch");
  na = nb = both = 0;
  for (size_t p = 0; p < a.size(); ++p) {
    const bool in_a = a[p] != 0;
    const bool in_b = b[p] != 0;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
}

}  // namespace

double dice(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  size_t na, nb, both;
  count_overlap(a, b, na, nb, both);
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  size_t na, nb, both;
  count_overlap(a, b, na, nb, both);
  const size_t uni = na + nb - both;
  if (uni == 0) return 0.0;
  return static_cast<double>(both) / static_cast<double>(uni);
}

namespace {

/// Median of |decode(pred) - decode(candidate)| over mutual foreground, back
/// projected to model units; NaN when there is no mutual foreground.
double median_pixel_error(const NocsMap& pred, const NocsMap& cand, const NocsBounds& bounds) {
  std::vector<double> errs;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const size_t p = pred.pixel(x, y);
      if (!pred.mask[p] || !cand.mask[p]) continue;
      const Vec3 a = nocs_unproject(decode_pixel(pred, x, y), bounds);
      const Vec3 b = nocs_unproject(decode_pixel(cand, x, y), bounds);
      errs.push_back((a - b).norm());
    }
  }
  if (errs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = errs.size() / 2;
  std::nth_element(errs.begin(), errs.begin() + mid, errs.end());
  double median = errs[mid];
  if (errs.size() % 2 == 0) {
    const double below = *std::max_element(errs.begin(), errs.begin() + mid);
    median = 0.5 * (median + below);
  }
  return median;
}

}  // namespace

double correspondence_error(const NocsMap& pred, const NocsMap& gt, const Mesh& mesh, const NocsBounds& bounds,
                            const CameraIntrinsics& k, const Pose& gt_pose, const SymmetrySpec& spec,
                            int n_orbit) {
  if (pred.width != gt.width || pred.height != gt.height) throw std::invalid_argument("map size mismatch");
  double best = std::numeric_limits<double>::infinity();
  const std::vector<Pose> orbit = orbit_poses(gt_pose, spec, n_orbit);
  for (size_t i = 0; i < orbit.size(); ++i) {
    // The supplied gt map already is the identity-orbit render.
    const NocsMap cand =
        i == 0 ? gt : discretize_map(render(mesh, bounds, orbit[i], k, gt.width, gt.height));
    const double med = median_pixel_error(pred, cand, bounds);
    if (!std::isnan(med)) best = std::min(best, med);
  }
  if (!std::isfinite(best)) throw std::runtime_error("no mutual foreground between prediction and ground truth");
  return best;
}

double nocs_ce_loss(const std::vector<float>& probs, const NocsMap& gt) {
  const size_t n_pixels = gt.mask.size();
  if (probs.size() != n_pixels * 3 * 256) throw std::invalid_argument("probability tensor size mismatch");
  double loss = 0.0;
  for (size_t p = 0; p < n_pixels; ++p) {
    if (!gt.mask[p]) continue;
    for (int d = 0; d < 3; ++d) {
      const float* dist = probs.data() + (p * 3 + d) * 256;
      double sum = 0.0;
      for (int b = 0; b < 256; ++b) sum += dist[b];
      if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("probabilities are not normalized");
      const double p_gt = dist[gt.bins[p * 3 + d]];
      loss += -std::log(std::max(p_gt, 1e-300));
    }
  }
  return loss;
}

double total_loss(const std::vector<float>& probs, const std::vector<uint8_t>& mask_pred, const NocsMap& gt,
                  double alpha) {
  return alpha * (1.0 - dice(mask_pred, gt.mask)) + nocs_ce_loss(probs, gt);
}

}  // namespace nocspose
