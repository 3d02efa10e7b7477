#include "nocspose/refine.hpp"

#include "nocspose/metrics.hpp"
#include "nocspose/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nocspose {

void RobustParams::validate() const {
  if (!(c > 0.0)) throw std::invalid_argument("robust scale c must be positive");
}

double robust_loss(double x, const RobustParams& p) {
  const double z = (x / p.c) * (x / p.c);
  if (std::abs(p.alpha - 2.0) < 1e-9) return 0.5 * z;
  if (std::abs(p.alpha) < 1e-9) return std::log(0.5 * z + 1.0);
  const double am2 = std::abs(p.alpha - 2.0);
  return am2 / p.alpha * (std::pow(z / am2 + 1.0, 0.5 * p.alpha) - 1.0);
}

double robust_loss_grad(double x, const RobustParams& p) {
  const double xc2 = x / (p.c * p.c);
  if (std::abs(p.alpha - 2.0) < 1e-9) return xc2;
  const double z = (x / p.c) * (x / p.c);
  const double am2 = std::abs(p.alpha - 2.0);
  return xc2 * std::pow(z / am2 + 1.0, 0.5 * p.alpha - 1.0);
}

double pixel_loss(const Vec3& pred_nocs, const Vec3& rendered_nocs, const NocsBounds& bounds,
                  const RobustParams& robust) {
  const Vec3 e = (pred_nocs - rendered_nocs).cwiseProduct(bounds.extent());
  return robust_loss(e.norm(), robust);
}

void MultiViewSet::validate() const {
  if (!mesh) throw std::invalid_argument("multi-view set has no mesh");
  if (frames.empty()) throw std::invalid_argument("multi-view set has no frames");
  if (frames.size() != hypotheses.size()) throw std::invalid_argument("frame/hypothesis count mismatch");
  for (const FrameObservation& f : frames) {
    f.camera.validate();
    validate_pose(f.rig_pose, 1e-6);
    if (f.prediction.width != f.camera.width || f.prediction.height != f.camera.height) {
      throw std::invalid_argument("prediction size does not match the frame camera");
    }
  }
  for (const Pose& h : hypotheses) validate_pose(h, 1e-6);
}

Pose MultiViewSet::relative_pose(int ref, int f) const {
  return pose_compose(pose_invert(frames[f].rig_pose), frames[ref].rig_pose);
}

namespace {

/// Masked robust loss of one frame against a render, summed row-by-row so the
/// accumulation order is independent of the thread count.
double frame_loss(const NocsMap& pred, const RenderOutput& rendered, const NocsBounds& bounds,
                  const RobustParams& robust, long* overlap = nullptr) {
  std::vector<double> row_loss(pred.height, 0.0);
  std::vector<long> row_overlap(pred.height, 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < pred.height; ++y) {
    double acc = 0.0;
    long count = 0;
    for (int x = 0; x < pred.width; ++x) {
      const size_t p = pred.pixel(x, y);
      if (!pred.mask[p] || !rendered.mask[p]) continue;
      const Vec3 pred_c = decode_pixel(pred, x, y);
      const Vec3 rend_c(rendered.nocs[p * 3 + 0], rendered.nocs[p * 3 + 1], rendered.nocs[p * 3 + 2]);
      acc += pixel_loss(pred_c, rend_c, bounds, robust);
      ++count;
    }
    row_loss[y] = acc;
    row_overlap[y] = count;
  }
  if (overlap) *overlap = std::accumulate(row_overlap.begin(), row_overlap.end(), 0L);
  return std::accumulate(row_loss.begin(), row_loss.end(), 0.0);
}

/// Object pose in frame f before symmetry adjustment.
Pose frame_raw_pose(const MultiViewSet& set, int ref, int f, const Pose& t_delta, const Pose& t_pr) {
  return pose_compose(set.relative_pose(ref, f), pose_compose(t_delta, t_pr));
}

struct FrameTerm {
  Pose render_pose;
  RenderOutput render;
  double loss = 0.0;
  long overlap = 0;
};

/// Renders frame f at the symmetry-adjusted pose and accumulates its loss.
/// When frozen_sym_inv is supplied the stored correction is used instead of
/// re-disambiguating, which keeps line search and gradients smooth.
FrameTerm evaluate_frame(const MultiViewSet& set, int f, const Pose& raw_pose, const RobustParams& robust,
                         const Pose* frozen_sym_inv) {
  FrameTerm term;
  if (set.symmetry.kind == SymmetryKind::none) {
    term.render_pose = raw_pose;
  } else if (frozen_sym_inv) {
    term.render_pose = pose_compose(raw_pose, *frozen_sym_inv);
  } else {
    term.render_pose = disambiguate(raw_pose, set.symmetry).adjusted;
  }
  const FrameObservation& obs = set.frames[f];
  term.render = render(*set.mesh, set.bounds, term.render_pose, obs.camera, obs.camera.width, obs.camera.height);
  term.loss = frame_loss(obs.prediction, term.render, set.bounds, robust, &term.overlap);
  return term;
}

RefineParams pack_params(const Pose& t_delta, double diameter) {
  RefineParams p;
  p.head<6>() = rotation_to_rot6d(t_delta.rotation);
  p.tail<3>() = t_delta.translation / diameter;
  return p;
}

Pose unpack_params(const RefineParams& p, double diameter) {
  Pose t_delta;
  t_delta.rotation = rot6d_to_rotation(p.head<6>());
  t_delta.translation = p.tail<3>() * diameter;
  return t_delta;
}

double objective_with_syms(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                           const RobustParams& robust, const std::vector<Pose>* frozen_sym_inv,
                           long* total_overlap = nullptr) {
  double total = 0.0;
  long overlap = 0;
  for (size_t f = 0; f < set.frames.size(); ++f) {
    const Pose raw = frame_raw_pose(set, ref, static_cast<int>(f), t_delta, t_pr);
    const Pose* sym = frozen_sym_inv ? &(*frozen_sym_inv)[f] : nullptr;
    const FrameTerm term = evaluate_frame(set, static_cast<int>(f), raw, robust, sym);
    total += term.loss;
    overlap += term.overlap;
  }
  if (total_overlap) *total_overlap = overlap;
  return total;
}

std::vector<Pose> freeze_sym_inverses(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr) {
  std::vector<Pose> out(set.frames.size());
  for (size_t f = 0; f < set.frames.size(); ++f) {
    if (set.symmetry.kind == SymmetryKind::none) continue;
    const Pose raw = frame_raw_pose(set, ref, static_cast<int>(f), t_delta, t_pr);
    out[f] = pose_invert(disambiguate(raw, set.symmetry).sym);
  }
  return out;
}

/// Derivative of the Gram-Schmidt rotation with respect to each of the six
/// raw parameters.
struct Rot6dJacobian {
  Mat3 d[6];
};

Rot6dJacobian rot6d_jacobian(const Rot6d& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const Vec3 b1 = a1 / n1;
  const Mat3 p1 = Mat3::Identity() - b1 * b1.transpose();
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double nu = u2.norm();
  const Vec3 b2 = u2 / nu;
  const Mat3 p2 = Mat3::Identity() - b2 * b2.transpose();

  Rot6dJacobian jac;
  for (int k = 0; k < 6; ++k) {
    const Vec3 da1 = k < 3 ? Vec3(Vec3::Unit(k)) : Vec3(Vec3::Zero());
    const Vec3 da2 = k >= 3 ? Vec3(Vec3::Unit(k - 3)) : Vec3(Vec3::Zero());
    const Vec3 db1 = p1 * da1 / n1;
    const Vec3 du2 = (Mat3::Identity() - b1 * b1.transpose()) * da2 -
                     (b1.dot(a2) * Mat3::Identity() + b1 * a2.transpose()) * db1;
    const Vec3 db2 = p2 * du2 / nu;
    const Vec3 db3 = -skew(b2) * db1 + skew(b1) * db2;
    jac.d[k].col(0) = db1;
    jac.d[k].col(1) = db2;
    jac.d[k].col(2) = db3;
  }
  return jac;
}

using NormalMatrix = Eigen::Matrix<double, 9, 9>;

/// Accumulates the robust-weighted gradient of the objective and, when
/// `normal` is given, the IRLS Gauss-Newton normal matrix over the same
/// frozen-association Jacobians.
RefineParams analytic_gradient(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                               const RobustParams& robust, const std::vector<Pose>& frozen_sym_inv,
                               NormalMatrix* normal = nullptr) {
  const double diameter = set.mesh->diameter;
  const Rot6d r6 = rotation_to_rot6d(t_delta.rotation);
  const Rot6dJacobian dr = rot6d_jacobian(r6);
  const Vec3 extent = set.bounds.extent();

  RefineParams grad = RefineParams::Zero();
  if (normal) normal->setZero();
  for (size_t f = 0; f < set.frames.size(); ++f) {
    const FrameObservation& obs = set.frames[f];
    const Pose raw = frame_raw_pose(set, ref, static_cast<int>(f), t_delta, t_pr);
    const Pose* sym = set.symmetry.kind == SymmetryKind::none ? nullptr : &frozen_sym_inv[f];
    const FrameTerm term = evaluate_frame(set, static_cast<int>(f), raw, robust, sym);
    // Per-triangle exact derivatives: finite differences would smear across
    // facet edges and bias the gradient on coarse meshes.
    const std::vector<double> sgrad =
        exact_screen_gradient(*set.mesh, set.bounds, term.render_pose, obs.camera, term.render);

    // Constant factors of the pose chain: render pose = Xi * T_delta * B.
    const Pose xi = set.relative_pose(ref, static_cast<int>(f));
    Pose b = t_pr;
    if (sym) b = pose_compose(t_pr, *sym);
    const Mat3& r_xi = xi.rotation;

    std::vector<RefineParams> row_grad(obs.camera.height, RefineParams::Zero());
    std::vector<NormalMatrix> row_normal;
    if (normal) row_normal.assign(obs.camera.height, NormalMatrix::Zero());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < obs.camera.height; ++y) {
      RefineParams acc = RefineParams::Zero();
      NormalMatrix acc_n = NormalMatrix::Zero();
      for (int x = 0; x < obs.camera.width; ++x) {
        const size_t p = obs.prediction.pixel(x, y);
        if (!obs.prediction.mask[p] || !term.render.mask[p]) continue;

        const Vec3 rend_c(term.render.nocs[p * 3 + 0], term.render.nocs[p * 3 + 1], term.render.nocs[p * 3 + 2]);
        const Vec3 e = (decode_pixel(obs.prediction, x, y) - rend_c).cwiseProduct(extent);
        const double xnorm = e.norm();
        const double weight = xnorm < 1e-30 ? 1.0 / (robust.c * robust.c)  // limit of rho'(x)/x
                                            : robust_loss_grad(xnorm, robust) / xnorm;

        // Frozen association: the model point currently seen by this pixel.
        const Vec3 m = nocs_unproject(rend_c, set.bounds);
        const Vec3 w = b.apply(m);
        const Vec3 q = term.render_pose.apply(m);
        if (q.z() <= 1e-9) continue;
        const double iz = 1.0 / q.z();
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << obs.camera.fx * iz, 0.0, -obs.camera.fx * q.x() * iz * iz,
                 0.0, obs.camera.fy * iz, -obs.camera.fy * q.y() * iz * iz;

        Eigen::Matrix<double, 2, 9> j_u;
        for (int kparam = 0; kparam < 6; ++kparam) {
          j_u.col(kparam) = dproj * (r_xi * (dr.d[kparam] * w));
        }
        j_u.rightCols<3>() = dproj * r_xi * diameter;

        // Per-channel residual Jacobian d(residual_c)/d(theta) stacked 3x9.
        Eigen::Matrix<double, 3, 9> j3;
        const size_t gbase = (p * 3) * 2;
        for (int c = 0; c < 3; ++c) {
          j3.row(c) = extent[c] * (sgrad[gbase + c * 2 + 0] * j_u.row(0) + sgrad[gbase + c * 2 + 1] * j_u.row(1));
        }
        acc += weight * (j3.transpose() * e);
        if (normal) acc_n += weight * (j3.transpose() * j3);
      }
      row_grad[y] = acc;
      if (normal) row_normal[y] = acc_n;
    }
    for (const RefineParams& rg : row_grad) grad += rg;
    if (normal) {
      for (const NormalMatrix& rn : row_normal) *normal += rn;
    }
  }
  return grad;
}

RefineParams finite_diff_gradient(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                                  const RobustParams& robust, const std::vector<Pose>& frozen_sym_inv,
                                  double fd_step) {
  const double diameter = set.mesh->diameter;
  const RefineParams at = pack_params(t_delta, diameter);
  RefineParams grad = RefineParams::Zero();
  for (int k = 0; k < 9; ++k) {
    RefineParams plus = at, minus = at;
    plus[k] += fd_step;
    minus[k] -= fd_step;
    const double f_plus =
        objective_with_syms(set, ref, unpack_params(plus, diameter), t_pr, robust, &frozen_sym_inv);
    const double f_minus =
        objective_with_syms(set, ref, unpack_params(minus, diameter), t_pr, robust, &frozen_sym_inv);
    grad[k] = (f_plus - f_minus) / (2.0 * fd_step);
  }
  return grad;
}

}  // namespace

double total_objective(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                       const RobustParams& robust) {
  set.validate();
  robust.validate();
  if (ref < 0 || ref >= static_cast<int>(set.frames.size())) throw std::invalid_argument("reference out of range");
  return objective_with_syms(set, ref, t_delta, t_pr, robust, nullptr);
}

int select_reference_frame(const MultiViewSet& set, const RobustParams& robust) {
  set.validate();
  if (set.frames.size() == 1) return 0;

  int best = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < set.frames.size(); ++r) {
    const Pose& t_ref = set.hypotheses[r];
    double score_sum = 0.0;
    int n_nonzero = 0;
    for (size_t f = 0; f < set.frames.size(); ++f) {
      const Pose raw = pose_compose(set.relative_pose(static_cast<int>(r), static_cast<int>(f)), t_ref);
      const FrameTerm term = evaluate_frame(set, static_cast<int>(f), raw, robust, nullptr);
      if (term.loss <= 0.0) continue;  // zero loss marks a degenerate re-projection
      const double overlap = iou(set.frames[f].prediction.mask, term.render.mask);
      if (overlap <= 0.0) continue;
      score_sum += term.loss / overlap;
      ++n_nonzero;
    }
    if (n_nonzero == 0) continue;
    const double score = score_sum / n_nonzero;
    if (score < best_score) {
      best_score = score;
      best = static_cast<int>(r);
    }
  }
  if (best < 0) throw std::runtime_error("all reference candidates are degenerate");
  return best;
}

RefineParams objective_gradient(const MultiViewSet& set, int ref, const Pose& t_delta, const Pose& t_pr,
                                const RobustParams& robust, GradientMode mode, double fd_step) {
  set.validate();
  robust.validate();
  const std::vector<Pose> syms = freeze_sym_inverses(set, ref, t_delta, t_pr);
  if (mode == GradientMode::analytic) {
    return analytic_gradient(set, ref, t_delta, t_pr, robust, syms);
  }
  return finite_diff_gradient(set, ref, t_delta, t_pr, robust, syms, fd_step);
}

RefineResult refine(const MultiViewSet& set, const RefinerConfig& cfg, const RobustParams& robust) {
  set.validate();
  robust.validate();
  if (cfg.max_iters < 1 || !(cfg.step_size > 0.0)) throw std::invalid_argument("invalid refiner config");

  RefineResult result;
  result.reference = select_reference_frame(set, robust);
  const Pose t_pr = set.hypotheses[result.reference];
  result.initial = t_pr;

  const double diameter = set.mesh->diameter;
  RefineParams params = pack_params(Pose::identity(), diameter);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Pose t_delta = unpack_params(params, diameter);
    // Per-frame symmetry corrections are recomputed here once per iteration
    // and held fixed through the gradient and line search.
    const std::vector<Pose> syms = freeze_sym_inverses(set, result.reference, t_delta, t_pr);
    long overlap0 = 0;
    const double f0 = objective_with_syms(set, result.reference, t_delta, t_pr, robust, &syms, &overlap0);
    if (iter == 0) result.objective_history.push_back(f0);
    if (overlap0 == 0) break;  // nothing constrains the pose

    // Robust-weighted Gauss-Newton direction. A plain gradient step points
    // almost orthogonally to the narrow depth/rotation valley of this
    // objective and stalls far from the optimum; the IRLS normal matrix
    // conditions it away.
    NormalMatrix normal;
    RefineParams grad = analytic_gradient(set, result.reference, t_delta, t_pr, robust, syms, &normal);
    if (cfg.gradient_mode == GradientMode::finite_diff) {
      grad = finite_diff_gradient(set, result.reference, t_delta, t_pr, robust, syms, cfg.fd_step);
    }
    if (grad.norm() < 1e-18) break;
    const double damping = 1e-3 * normal.trace() / 9.0 + 1e-12;
    const RefineParams direction =
        (normal + damping * NormalMatrix::Identity()).ldlt().solve(grad);

    // step_size scales the damped Gauss-Newton step (1 = full step) and is
    // halved until the objective decreases; trials that halve the mask
    // overlap are rejected as escapes toward the degenerate zero-overlap
    // minimum.
    bool accepted = false;
    RefineParams trial = params;
    double f_trial = f0;
    double step = cfg.step_size;
    for (int halving = 0; halving < 8; ++halving) {
      trial = params - step * direction;
      long overlap_trial = 0;
      f_trial = objective_with_syms(set, result.reference, unpack_params(trial, diameter), t_pr, robust, &syms,
                                    &overlap_trial);
      if (f_trial < f0 && 2 * overlap_trial >= overlap0) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    params = trial;
    result.objective_history.push_back(f_trial);
    if (f0 - f_trial < cfg.convergence_tol) break;
  }

  result.refined = pose_compose(unpack_params(params, diameter), t_pr);
  return result;
}

std::vector<int> sample_views(const std::vector<Pose>& rig_poses, int n, SamplingStrategy strategy,
                              uint64_t seed) {
  const int total = static_cast<int>(rig_poses.size());
  if (n < 1 || n > total) throw std::invalid_argument("sample_views: n out of range");

  std::vector<Vec3> dirs(total);
  for (int i = 0; i < total; ++i) dirs[i] = rig_poses[i].rotation * Vec3(0.0, 0.0, 1.0);
  auto angle = [&](int a, int b) { return std::acos(std::clamp(dirs[a].dot(dirs[b]), -1.0, 1.0)); };

  std::vector<int> selected{0};
  if (strategy == SamplingStrategy::random) {
    std::vector<int> rest;
    for (int i = 1; i < total; ++i) rest.push_back(i);
    Rng rng(seed);
    rng.shuffle(rest);
    for (int i = 0; i < n - 1; ++i) selected.push_back(rest[i]);
  } else {
    std::vector<bool> used(total, false);
    used[0] = true;
    while (static_cast<int>(selected.size()) < n) {
      int pick = -1;
      double pick_score = 0.0;
      for (int i = 0; i < total; ++i) {
        if (used[i]) continue;
        double min_angle = std::numeric_limits<double>::infinity();
        for (int s : selected) min_angle = std::min(min_angle, angle(i, s));
        const bool better = strategy == SamplingStrategy::closest ? min_angle < pick_score : min_angle > pick_score;
        if (pick < 0 || better) {
          pick = i;
          pick_score = min_angle;
        }
      }
      selected.push_back(pick);
      used[pick] = true;
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace nocspose
