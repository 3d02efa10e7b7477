#include "nocspose/solvers.hpp"

#include "nocspose/rng.hpp"
#include "kdtree.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace nocspose {

void RansacConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("ransac max_iters must be >= 1");
  if (!(inlier_threshold > 0.0)) throw std::invalid_argument("ransac inlier_threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("ransac confidence must be in (0,1)");
  if (min_inlier_count < 1) throw std::invalid_argument("ransac min_inlier_count must be >= 1");
}

Pose kabsch(const Correspondences3D3D& pairs) {
  const size_t n = pairs.model_points.size();
  if (n != pairs.camera_points.size()) throw std::invalid_argument("correspondence list size mismatch");
  if (n < 3) throw std::invalid_argument("kabsch needs at least 3 pairs");

  Vec3 mc = Vec3::Zero(), pc = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mc += pairs.model_points[i];
    pc += pairs.camera_points[i];
  }
  mc /= static_cast<double>(n);
  pc /= static_cast<double>(n);

  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    h += (pairs.model_points[i] - mc) * (pairs.camera_points[i] - pc).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  if (sigma[1] < 1e-12 * sigma[0] || sigma[0] == 0.0) {
    throw std::runtime_error("degenerate (collinear) point configuration");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Pose pose;
  pose.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  pose.translation = pc - pose.rotation * mc;
  return pose;
}

namespace {

/// Canonical processing order: indices sorted by correspondence content so
/// that seeded sampling is invariant to permutations of the input list.
template <typename LessFn>
std::vector<int> canonical_order(size_t n, LessFn&& less) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

template <int SampleSize>
void draw_sample(Rng& rng, size_t n, std::array<int, SampleSize>& sample) {
  for (int i = 0; i < SampleSize; ++i) {
    bool fresh = false;
    while (!fresh) {
      sample[i] = static_cast<int>(rng.uniform_index(n));
      fresh = true;
      for (int j = 0; j < i; ++j) fresh &= sample[j] != sample[i];
    }
  }
}

struct HypothesisScore {
  bool valid = false;
  Pose pose;
  int inliers = 0;
};

/// Shared RANSAC loop. Hypotheses are drawn sequentially from the seed, then
/// evaluated (optionally in parallel chunks) and replayed in draw order, so
/// the selected hypothesis always equals the sequential result.
template <int SampleSize, typename MakeFn, typename CountFn>
std::pair<Pose, int> ransac_best(size_t n, const RansacConfig& cfg, bool parallel, MakeFn&& make,
                                 CountFn&& count_inliers) {
  Rng rng(cfg.seed);
  constexpr int kChunk = 32;
  std::vector<std::array<int, SampleSize>> samples(kChunk);
  std::vector<HypothesisScore> scores(kChunk);

  HypothesisScore best;
  int done = 0;
  while (done < cfg.max_iters) {
    const int chunk = std::min(kChunk, cfg.max_iters - done);
    for (int i = 0; i < chunk; ++i) draw_sample<SampleSize>(rng, n, samples[i]);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int i = 0; i < chunk; ++i) {
      scores[i] = HypothesisScore{};
      if (std::optional<Pose> pose = make(samples[i])) {
        scores[i].valid = true;
        scores[i].pose = *pose;
        scores[i].inliers = count_inliers(*pose);
      }
    }

    bool stop = false;
    for (int i = 0; i < chunk && !stop; ++i) {
      const int iter = done + i;
      if (scores[i].valid && scores[i].inliers > best.inliers) best = scores[i];
      if (best.inliers >= cfg.min_inlier_count) {
        const double w = static_cast<double>(best.inliers) / static_cast<double>(n);
        const double p_good = std::pow(w, SampleSize);
        if (p_good >= 1.0) {
          stop = true;
        } else if (p_good > 0.0) {
          const double needed = std::log(1.0 - cfg.confidence) / std::log(1.0 - p_good);
          stop = static_cast<double>(iter + 1) >= needed;
        }
      }
    }
    done += chunk;
    if (stop) break;
  }
  if (!best.valid || best.inliers < cfg.min_inlier_count) throw std::runtime_error("no consensus");
  return {best.pose, best.inliers};
}

template <bool Parallel>
SolveResult kabsch_ransac_impl(const Correspondences3D3D& pairs, const RansacConfig& cfg) {
  cfg.validate();
  const size_t n = pairs.model_points.size();
  if (n != pairs.camera_points.size()) throw std::invalid_argument("correspondence list size mismatch");
  if (n < 3) throw std::invalid_argument("kabsch_ransac needs at least 3 pairs");

  const std::vector<int> order = canonical_order(n, [&](int a, int b) {
    if (lex_less(pairs.model_points[a], pairs.model_points[b])) return true;
    if (lex_less(pairs.model_points[b], pairs.model_points[a])) return false;
    return lex_less(pairs.camera_points[a], pairs.camera_points[b]);
  });

  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  auto residual2 = [&](const Pose& pose, int idx) {
    return (pose.apply(pairs.model_points[idx]) - pairs.camera_points[idx]).squaredNorm();
  };
  auto make = [&](const std::array<int, 3>& sample) -> std::optional<Pose> {
    Correspondences3D3D minimal;
    for (int s : sample) {
      const int idx = order[s];
      minimal.model_points.push_back(pairs.model_points[idx]);
      minimal.camera_points.push_back(pairs.camera_points[idx]);
    }
    try {
      return kabsch(minimal);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  auto count = [&](const Pose& pose) {
    int inliers = 0;
    for (size_t i = 0; i < n; ++i) inliers += residual2(pose, static_cast<int>(i)) <= thr2 ? 1 : 0;
    return inliers;
  };

  const Pose hypothesis = ransac_best<3>(n, cfg, Parallel, make, count).first;

  Correspondences3D3D inliers;
  for (size_t i = 0; i < n; ++i) {
    if (residual2(hypothesis, static_cast<int>(i)) <= thr2) {
      inliers.model_points.push_back(pairs.model_points[i]);
      inliers.camera_points.push_back(pairs.camera_points[i]);
    }
  }
  SolveResult result;
  result.pose = kabsch(inliers);
  double residual_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r2 = residual2(result.pose, static_cast<int>(i));
    if (r2 <= thr2) {
      result.inlier_indices.push_back(static_cast<int>(i));
      residual_sum += std::sqrt(r2);
    }
  }
  if (static_cast<int>(result.inlier_indices.size()) < cfg.min_inlier_count) {
    throw std::runtime_error("no consensus");
  }
  result.mean_inlier_residual = residual_sum / static_cast<double>(result.inlier_indices.size());
  return result;
}

}  // namespace

SolveResult kabsch_ransac(const Correspondences3D3D& pairs, const RansacConfig& cfg) {
  return kabsch_ransac_impl<true>(pairs, cfg);
}
SolveResult kabsch_ransac_serial(const Correspondences3D3D& pairs, const RansacConfig& cfg) {
  return kabsch_ransac_impl<false>(pairs, cfg);
}

// ---------------------------------------------------------------------------
// EPnP
// ---------------------------------------------------------------------------

namespace {

struct EpnpSetup {
  int n_cp = 4;
  std::array<Vec3, 4> cp_world;
  Eigen::MatrixXd alphas;  // n x n_cp
};

EpnpSetup epnp_setup(const std::vector<Vec3>& pts) {
  const int n = static_cast<int>(pts.size());
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pts) centroid += p;
  centroid /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - centroid) * (p - centroid).transpose();
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);  // ascending eigenvalues
  const Vec3 evals = es.eigenvalues().cwiseMax(0.0);
  if (evals[2] <= 0.0 || evals[1] < 1e-10 * evals[2]) {
    throw std::runtime_error("degenerate (collinear) point configuration");
  }
  const bool planar = evals[0] < 1e-8 * evals[2];

  EpnpSetup setup;
  setup.n_cp = planar ? 3 : 4;
  setup.cp_world[0] = centroid;
  int k = 1;
  for (int axis = 2; axis >= (planar ? 1 : 0); --axis) {
    setup.cp_world[k] = centroid + std::sqrt(evals[axis]) * es.eigenvectors().col(axis);
    ++k;
  }

  Eigen::MatrixXd basis(3, setup.n_cp - 1);
  for (int j = 1; j < setup.n_cp; ++j) basis.col(j - 1) = setup.cp_world[j] - setup.cp_world[0];
  const Eigen::MatrixXd pinv = (basis.transpose() * basis).ldlt().solve(basis.transpose()).eval();

  setup.alphas.resize(n, setup.n_cp);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = pinv * (pts[i] - setup.cp_world[0]);
    double a0 = 1.0;
    for (int j = 1; j < setup.n_cp; ++j) {
      setup.alphas(i, j) = a[j - 1];
      a0 -= a[j - 1];
    }
    setup.alphas(i, 0) = a0;
  }
  return setup;
}

/// Distance residuals between control-point candidates scaled by beta and
/// the world-frame control distances; used for the beta cases.
struct BetaSystem {
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> world_d2;
  const Eigen::MatrixXd* kernel = nullptr;  // 3*n_cp x 4, columns = candidates
  int n_cp = 4;

  Vec3 kernel_segment(int candidate, int cp) const {
    return kernel->col(candidate).segment<3>(3 * cp);
  }
  Vec3 diff(int candidate, int pair_idx) const {
    return kernel_segment(candidate, pairs[pair_idx].first) - kernel_segment(candidate, pairs[pair_idx].second);
  }
};

Eigen::VectorXd refine_betas(const BetaSystem& sys, Eigen::VectorXd betas, int iters = 10) {
  const int nb = static_cast<int>(betas.size());
  const int np = static_cast<int>(sys.pairs.size());
  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd jac(np, nb);
    Eigen::VectorXd res(np);
    for (int p = 0; p < np; ++p) {
      Vec3 v = Vec3::Zero();
      for (int k = 0; k < nb; ++k) v += betas[k] * sys.diff(k, p);
      res[p] = v.squaredNorm() - sys.world_d2[p];
      for (int k = 0; k < nb; ++k) jac(p, k) = 2.0 * v.dot(sys.diff(k, p));
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd delta = (jtj + 1e-12 * Eigen::MatrixXd::Identity(nb, nb))
                                      .ldlt()
                                      .solve(-jac.transpose() * res);
    betas += delta;
    if (delta.norm() < 1e-14) break;
  }
  return betas;
}

double reprojection_sse(const std::vector<Vec2>& obs, const std::vector<Vec3>& pts, const CameraIntrinsics& k,
                        const Pose& pose) {
  double sse = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3 q = pose.apply(pts[i]);
    if (q.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    const double du = k.fx * q.x() / q.z() + k.cx - obs[i].x();
    const double dv = k.fy * q.y() / q.z() + k.cy - obs[i].y();
    sse += du * du + dv * dv;
  }
  return sse;
}

}  // namespace

Pose epnp(const Correspondences2D3D& pairs, const CameraIntrinsics& k) {
  const size_t n = pairs.model_points.size();
  if (n != pairs.image_points.size()) throw std::invalid_argument("correspondence list size mismatch");
  if (n < 4) throw std::invalid_argument("epnp needs at least 4 pairs");

  const EpnpSetup setup = epnp_setup(pairs.model_points);
  const int n_cp = setup.n_cp;

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 3 * n_cp);
  for (size_t i = 0; i < n; ++i) {
    for (int j = 0; j < n_cp; ++j) {
      const double a = setup.alphas(i, j);
      m(2 * i, 3 * j + 0) = a * k.fx;
      m(2 * i, 3 * j + 2) = a * (k.cx - pairs.image_points[i].x());
      m(2 * i + 1, 3 * j + 1) = a * k.fy;
      m(2 * i + 1, 3 * j + 2) = a * (k.cy - pairs.image_points[i].y());
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
  Eigen::MatrixXd kernel(3 * n_cp, 4);
  for (int c = 0; c < 4; ++c) kernel.col(c) = es.eigenvectors().col(std::min(c, 3 * n_cp - 1));

  BetaSystem sys;
  sys.kernel = &kernel;
  sys.n_cp = n_cp;
  for (int j = 0; j < n_cp; ++j) {
    for (int l = j + 1; l < n_cp; ++l) {
      sys.pairs.emplace_back(j, l);
      sys.world_d2.push_back((setup.cp_world[j] - setup.cp_world[l]).squaredNorm());
    }
  }
  const int np = static_cast<int>(sys.pairs.size());

  std::vector<Eigen::VectorXd> beta_cases;
  {
    // Case N=1: single kernel vector, scale from the distance ratio.
    double num = 0.0, den = 0.0;
    for (int p = 0; p < np; ++p) {
      const double dv = sys.diff(0, p).norm();
      num += dv * std::sqrt(sys.world_d2[p]);
      den += dv * dv;
    }
    Eigen::VectorXd b(1);
    b[0] = den > 0.0 ? num / den : 0.0;
    beta_cases.push_back(b);
  }
  {
    // Case N=2: solve for (b11, b12, b22) in least squares.
    Eigen::MatrixXd l(np, 3);
    Eigen::VectorXd rho(np);
    for (int p = 0; p < np; ++p) {
      const Vec3 d0 = sys.diff(0, p);
      const Vec3 d1 = sys.diff(1, p);
      l(p, 0) = d0.squaredNorm();
      l(p, 1) = 2.0 * d0.dot(d1);
      l(p, 2) = d1.squaredNorm();
      rho[p] = sys.world_d2[p];
    }
    const Eigen::Vector3d b = l.colPivHouseholderQr().solve(rho);
    Eigen::VectorXd betas(2);
    betas[0] = std::sqrt(std::abs(b[0]));
    betas[1] = std::sqrt(std::abs(b[2])) * (b[1] < 0.0 ? -1.0 : 1.0);
    beta_cases.push_back(betas);
  }
  if (np >= 6) {
    // Case N=3: six unknowns, six distance equations.
    Eigen::MatrixXd l(np, 6);
    Eigen::VectorXd rho(np);
    for (int p = 0; p < np; ++p) {
      const Vec3 d0 = sys.diff(0, p);
      const Vec3 d1 = sys.diff(1, p);
      const Vec3 d2 = sys.diff(2, p);
      l(p, 0) = d0.squaredNorm();
      l(p, 1) = 2.0 * d0.dot(d1);
      l(p, 2) = d1.squaredNorm();
      l(p, 3) = 2.0 * d0.dot(d2);
      l(p, 4) = 2.0 * d1.dot(d2);
      l(p, 5) = d2.squaredNorm();
      rho[p] = sys.world_d2[p];
    }
    const Eigen::VectorXd b = l.colPivHouseholderQr().solve(rho);
    Eigen::VectorXd betas(3);
    betas[0] = std::sqrt(std::abs(b[0]));
    betas[1] = std::sqrt(std::abs(b[2])) * (b[1] < 0.0 ? -1.0 : 1.0);
    betas[2] = std::sqrt(std::abs(b[5])) * (b[3] < 0.0 ? -1.0 : 1.0);
    beta_cases.push_back(betas);
  }

  // With few correspondences the null space is genuinely multi-dimensional
  // and the truth has components on all four kernel vectors, so every case
  // init is also re-optimized over the full beta vector.
  if (n_cp == 4) {
    const size_t n_cases = beta_cases.size();
    for (size_t c = 0; c < n_cases; ++c) {
      Eigen::VectorXd full = Eigen::VectorXd::Zero(4);
      full.head(beta_cases[c].size()) = beta_cases[c];
      beta_cases.push_back(full);
    }
  }

  Pose best_pose;
  double best_err = std::numeric_limits<double>::infinity();
  for (Eigen::VectorXd betas : beta_cases) {
    betas = refine_betas(sys, betas, 15);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * n_cp);
    for (int c = 0; c < betas.size(); ++c) x += betas[c] * kernel.col(c);

    Correspondences3D3D cp_pairs;
    cp_pairs.model_points = pairs.model_points;
    cp_pairs.camera_points.resize(n);
    double depth_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      Vec3 pc = Vec3::Zero();
      for (int j = 0; j < n_cp; ++j) pc += setup.alphas(i, j) * x.segment<3>(3 * j);
      cp_pairs.camera_points[i] = pc;
      depth_sum += pc.z();
    }
    if (depth_sum < 0.0) {
      for (Vec3& pc : cp_pairs.camera_points) pc = -pc;
    }
    try {
      const Pose candidate = kabsch(cp_pairs);
      const double err = reprojection_sse(pairs.image_points, pairs.model_points, k, candidate);
      if (err < best_err) {
        best_err = err;
        best_pose = candidate;
      }
    } catch (const std::exception&) {
      continue;
    }
  }
  if (!std::isfinite(best_err)) throw std::runtime_error("epnp failed: degenerate configuration or points behind camera");
  return best_pose;
}

namespace {

/// Gauss-Newton on the reprojection error over an SE(3) increment.
Pose refine_pose_gauss_newton(const Correspondences2D3D& pairs, const CameraIntrinsics& k, Pose pose,
                              int max_iters = 10) {
  const size_t n = pairs.model_points.size();
  for (int it = 0; it < max_iters; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    int used = 0;
    for (size_t i = 0; i < n; ++i) {
      const Vec3 q = pose.apply(pairs.model_points[i]);
      if (q.z() <= 1e-9) continue;
      ++used;
      const double iz = 1.0 / q.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * q.x() * iz * iz, 0.0, k.fy * iz, -k.fy * q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dq;
      dq.leftCols<3>() = -skew(q - pose.translation);  // d(exp(w) R m)/dw = -[R m]x
      dq.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> jac = dproj * dq;
      const Vec2 res(k.fx * q.x() * iz + k.cx - pairs.image_points[i].x(),
                     k.fy * q.y() * iz + k.cy - pairs.image_points[i].y());
      jtj += jac.transpose() * jac;
      jtr += jac.transpose() * res;
    }
    if (used < 3) break;
    const Eigen::Matrix<double, 6, 1> delta =
        (jtj + 1e-12 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(-jtr);
    pose.rotation = so3_exp(delta.head<3>()) * pose.rotation;
    pose.translation += delta.tail<3>();
    if (delta.norm() < 1e-12) break;
  }
  return pose;
}

template <bool Parallel>
SolveResult pnp_ransac_impl(const Correspondences2D3D& pairs, const CameraIntrinsics& k,
                            const RansacConfig& cfg) {
  cfg.validate();
  const size_t n = pairs.model_points.size();
  if (n != pairs.image_points.size()) throw std::invalid_argument("correspondence list size mismatch");
  if (n < 4) throw std::invalid_argument("pnp_ransac needs at least 4 pairs");

  const std::vector<int> order = canonical_order(n, [&](int a, int b) {
    if (lex_less(pairs.model_points[a], pairs.model_points[b])) return true;
    if (lex_less(pairs.model_points[b], pairs.model_points[a])) return false;
    const Vec2& pa = pairs.image_points[a];
    const Vec2& pb = pairs.image_points[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    return pa.y() < pb.y();
  });

  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  auto residual2 = [&](const Pose& pose, int idx) {
    const Vec3 q = pose.apply(pairs.model_points[idx]);
    if (q.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    const double du = k.fx * q.x() / q.z() + k.cx - pairs.image_points[idx].x();
    const double dv = k.fy * q.y() / q.z() + k.cy - pairs.image_points[idx].y();
    return du * du + dv * dv;
  };
  auto make = [&](const std::array<int, 4>& sample) -> std::optional<Pose> {
    Correspondences2D3D minimal;
    for (int s : sample) {
      const int idx = order[s];
      minimal.model_points.push_back(pairs.model_points[idx]);
      minimal.image_points.push_back(pairs.image_points[idx]);
    }
    try {
      return epnp(minimal, k);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  auto count = [&](const Pose& pose) {
    int inliers = 0;
    for (size_t i = 0; i < n; ++i) inliers += residual2(pose, static_cast<int>(i)) <= thr2 ? 1 : 0;
    return inliers;
  };

  const Pose hypothesis = ransac_best<4>(n, cfg, Parallel, make, count).first;

  Correspondences2D3D inliers;
  for (size_t i = 0; i < n; ++i) {
    if (residual2(hypothesis, static_cast<int>(i)) <= thr2) {
      inliers.model_points.push_back(pairs.model_points[i]);
      inliers.image_points.push_back(pairs.image_points[i]);
    }
  }
  Pose refit = hypothesis;
  if (inliers.model_points.size() >= 4) {
    try {
      refit = epnp(inliers, k);
    } catch (const std::exception&) {
      refit = hypothesis;
    }
  }
  refit = refine_pose_gauss_newton(inliers, k, refit);
  if (reprojection_sse(inliers.image_points, inliers.model_points, k, refit) >
      reprojection_sse(inliers.image_points, inliers.model_points, k, hypothesis)) {
    refit = refine_pose_gauss_newton(inliers, k, hypothesis);
  }

  SolveResult result;
  result.pose = refit;
  double residual_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r2 = residual2(result.pose, static_cast<int>(i));
    if (r2 <= thr2) {
      result.inlier_indices.push_back(static_cast<int>(i));
      residual_sum += std::sqrt(r2);
    }
  }
  if (static_cast<int>(result.inlier_indices.size()) < cfg.min_inlier_count) {
    throw std::runtime_error("no consensus");
  }
  result.mean_inlier_residual = residual_sum / static_cast<double>(result.inlier_indices.size());
  return result;
}

}  // namespace

SolveResult pnp_ransac(const Correspondences2D3D& pairs, const CameraIntrinsics& k, const RansacConfig& cfg) {
  return pnp_ransac_impl<true>(pairs, k, cfg);
}
SolveResult pnp_ransac_serial(const Correspondences2D3D& pairs, const CameraIntrinsics& k,
                              const RansacConfig& cfg) {
  return pnp_ransac_impl<false>(pairs, k, cfg);
}

// ---------------------------------------------------------------------------
// Normals and point-to-plane ICP
// ---------------------------------------------------------------------------

std::vector<Vec3> estimate_normals(const std::vector<Vec3>& cloud, int k) {
  if (k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
  if (static_cast<int>(cloud.size()) < k) throw std::invalid_argument("cloud smaller than neighbor count");
  const KdTree3 tree(cloud);
  std::vector<Vec3> normals(cloud.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const std::vector<int> nn = tree.knn(cloud[i], k);
    Vec3 centroid = Vec3::Zero();
    for (int j : nn) centroid += cloud[j];
    centroid /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (int j : nn) cov += (cloud[j] - centroid) * (cloud[j] - centroid).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 normal = es.eigenvectors().col(0);  // smallest eigenvalue
    if (normal.dot(cloud[i]) > 0.0) normal = -normal;  // face the camera origin
    normals[i] = normal.normalized();
  }
  return normals;
}

namespace {

double icp_rms(const std::vector<Vec3>& model, const KdTree3& tree, const std::vector<Vec3>& scene,
               const std::vector<Vec3>& normals, const Pose& pose, double corr_dist, int* n_matches) {
  double sum = 0.0;
  int matches = 0;
  for (const Vec3& m : model) {
    const Vec3 p = pose.apply(m);
    const int j = tree.nearest(p, corr_dist);
    if (j < 0) continue;
    const double r = normals[j].dot(p - scene[j]);
    sum += r * r;
    ++matches;
  }
  if (n_matches) *n_matches = matches;
  return matches > 0 ? std::sqrt(sum / matches) : std::numeric_limits<double>::infinity();
}

}  // namespace

Pose icp_point_to_plane(const std::vector<Vec3>& model_cloud, const std::vector<Vec3>& scene_cloud,
                        const std::vector<Vec3>& scene_normals, const Pose& init, int max_iters,
                        double corr_dist) {
  if (scene_cloud.size() != scene_normals.size()) throw std::invalid_argument("normals size mismatch");
  if (model_cloud.empty() || scene_cloud.empty()) throw std::invalid_argument("empty point cloud");
  if (!(corr_dist > 0.0)) throw std::invalid_argument("corr_dist must be positive");

  const KdTree3 tree(scene_cloud);
  Pose pose = init;
  int matches = 0;
  double best_rms = icp_rms(model_cloud, tree, scene_cloud, scene_normals, pose, corr_dist, &matches);
  if (matches == 0) throw std::runtime_error("icp: no associations within corr_dist at the initial pose");

  for (int it = 0; it < max_iters; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    int used = 0;
    for (const Vec3& m : model_cloud) {
      const Vec3 p = pose.apply(m);
      const int j = tree.nearest(p, corr_dist);
      if (j < 0) continue;
      const Vec3& nrm = scene_normals[j];
      const double r = nrm.dot(p - scene_cloud[j]);
      Eigen::Matrix<double, 6, 1> jac;
      jac.head<3>() = p.cross(nrm);
      jac.tail<3>() = nrm;
      jtj += jac * jac.transpose();
      jtr += jac * r;
      ++used;
    }
    if (used == 0) break;
    const Eigen::Matrix<double, 6, 1> delta =
        (jtj + 1e-12 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(-jtr);

    Pose trial;
    trial.rotation = so3_exp(delta.head<3>()) * pose.rotation;
    trial.translation = so3_exp(delta.head<3>()) * pose.translation + delta.tail<3>();
    const double trial_rms = icp_rms(model_cloud, tree, scene_cloud, scene_normals, trial, corr_dist, nullptr);
    if (trial_rms > best_rms) break;  // residual is monotone over accepted iterations
    pose = trial;
    best_rms = trial_rms;
    if (delta.norm() < 1e-6) break;
  }
  return pose;
}

}  // namespace nocspose
