#include "nocspose/pipeline.hpp"

#include "nocspose/mesh_io.hpp"
#include "nocspose/mesh_primitives.hpp"
#include "nocspose/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace nocspose {

namespace {

constexpr uint64_t kJitterSalt = 0x6a69747465720000ULL;
constexpr uint64_t kRansacSalt = 0x72616e7361630000ULL;
constexpr uint64_t kGroupSalt = 0x67726f7570000000ULL;

Json bbox_to_json(const BoundingBox& b) { return Json{b.x, b.y, b.w, b.h}; }

BoundingBox bbox_from_json(const Json& j) {
  if (j.size() != 4) throw DataError("bbox must have 4 entries");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

Json manifest_to_json(const SceneManifest& m) {
  Json frames = Json::array();
  for (const FrameEntry& f : m.frames) {
    frames.push_back(Json{{"id", f.id},
                          {"gt_pose", pose_to_json(f.gt_pose)},
                          {"rig_pose", pose_to_json(f.rig_pose)},
                          {"bbox", bbox_to_json(f.bbox)},
                          {"nocs", f.nocs_path},
                          {"mask", f.mask_path},
                          {"depth", f.depth_path}});
  }
  Json j{{"object_id", m.object_id},
         {"mesh", m.mesh_path},
         {"camera", camera_to_json(m.camera)},
         {"units_per_count", m.units_per_count},
         {"frames", frames}};
  if (!m.symmetry_path.empty()) j["symmetry"] = m.symmetry_path;
  return j;
}

SceneManifest manifest_from_json(const Json& j) {
  SceneManifest m;
  m.object_id = j.at("object_id").get<std::string>();
  m.mesh_path = j.at("mesh").get<std::string>();
  if (j.contains("symmetry")) m.symmetry_path = j.at("symmetry").get<std::string>();
  m.camera = camera_from_json(j.at("camera"));
  m.units_per_count = j.at("units_per_count").get<double>();
  for (const Json& f : j.at("frames")) {
    FrameEntry e;
    e.id = f.at("id").get<std::string>();
    e.gt_pose = pose_from_json(f.at("gt_pose"));
    e.rig_pose = pose_from_json(f.at("rig_pose"));
    e.bbox = bbox_from_json(f.at("bbox"));
    e.nocs_path = f.at("nocs").get<std::string>();
    e.mask_path = f.at("mask").get<std::string>();
    e.depth_path = f.at("depth").get<std::string>();
    m.frames.push_back(std::move(e));
  }
  std::sort(m.frames.begin(), m.frames.end(), [](const FrameEntry& a, const FrameEntry& b) { return a.id < b.id; });
  for (size_t i = 1; i < m.frames.size(); ++i) {
    if (m.frames[i].id == m.frames[i - 1].id) throw DataError("duplicate frame id: " + m.frames[i].id);
  }
  return m;
}

std::string Scene::resolve(const std::string& relative) const {
  const fs::path p(relative);
  if (p.is_absolute()) return relative;
  return (fs::path(dir) / p).string();
}

Scene load_scene(const std::string& manifest_path) {
  Scene scene;
  scene.dir = fs::path(manifest_path).parent_path().string();
  if (scene.dir.empty()) scene.dir = ".";
  Json j;
  try {
    j = load_json_file(manifest_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  scene.manifest = manifest_from_json(j);
  try {
    scene.mesh = load_mesh(scene.resolve(scene.manifest.mesh_path));
  } catch (const std::exception& e) {
    throw DataError(std::string("mesh: ") + e.what());
  }
  scene.bounds = compute_nocs_bounds(scene.mesh);
  if (!scene.manifest.symmetry_path.empty()) {
    scene.symmetry = symmetry_from_json(load_json_file(scene.resolve(scene.manifest.symmetry_path)));
  }
  for (const FrameEntry& f : scene.manifest.frames) {
    for (const std::string& p : {f.nocs_path, f.mask_path, f.depth_path}) {
      if (!fs::exists(scene.resolve(p))) throw DataError("missing frame file: " + p);
    }
  }
  return scene;
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "rgb") return PipelineMode::rgb;
  if (s == "rgbd") return PipelineMode::rgbd;
  if (s == "rgb+d-kabsch") return PipelineMode::rgb_d_kabsch;
  throw ConfigError("unknown mode: " + s);
}

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::rgb:
      return "rgb";
    case PipelineMode::rgbd:
      return "rgbd";
    case PipelineMode::rgb_d_kabsch:
      return "rgb+d-kabsch";
  }
  return "?";
}

SamplingStrategy sampling_from_string(const std::string& s) {
  if (s == "closest") return SamplingStrategy::closest;
  if (s == "random") return SamplingStrategy::random;
  if (s == "furthest") return SamplingStrategy::furthest;
  throw ConfigError("unknown sampling strategy: " + s);
}

std::string to_string(SamplingStrategy strategy) {
  switch (strategy) {
    case SamplingStrategy::closest:
      return "closest";
    case SamplingStrategy::random:
      return "random";
    case SamplingStrategy::furthest:
      return "furthest";
  }
  return "?";
}

PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig cfg;
  try {
    if (j.contains("mode")) cfg.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("bbox")) {
      const std::string b = j.at("bbox").get<std::string>();
      if (b == "gt") {
        cfg.bbox_source = BboxSource::gt;
      } else if (b == "jitter") {
        cfg.bbox_source = BboxSource::jitter;
      } else {
        throw ConfigError("unknown bbox source: " + b);
      }
    }
    cfg.jitter_max_frac = j.value("jitter_max_frac", cfg.jitter_max_frac);
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("noise")) {
      const Json& n = j.at("noise");
      cfg.noise.bin_sigma = n.value("bin_sigma", 0.0);
      cfg.noise.outlier_frac = n.value("outlier_frac", 0.0);
      cfg.noise.dropout_frac = n.value("dropout_frac", 0.0);
      cfg.noise.occluder_frac = n.value("occluder_frac", 0.0);
      cfg.noise.seed = n.value("seed", cfg.seed);
      cfg.noise.validate();
    } else {
      cfg.noise.seed = cfg.seed;
    }
    if (j.contains("ransac")) {
      const Json& r = j.at("ransac");
      cfg.pnp_threshold_px = r.value("pnp_threshold_px", cfg.pnp_threshold_px);
      cfg.kabsch_threshold_frac = r.value("kabsch_threshold_frac", cfg.kabsch_threshold_frac);
      cfg.ransac_max_iters = r.value("max_iters", cfg.ransac_max_iters);
      cfg.ransac_min_inliers = r.value("min_inlier_count", cfg.ransac_min_inliers);
      cfg.ransac_confidence = r.value("confidence", cfg.ransac_confidence);
    }
    if (j.contains("icp")) {
      const Json& icp = j.at("icp");
      cfg.icp_enabled = icp.value("enabled", cfg.icp_enabled);
      cfg.icp_max_iters = icp.value("max_iters", cfg.icp_max_iters);
      cfg.icp_corr_dist_frac = icp.value("corr_dist_frac", cfg.icp_corr_dist_frac);
    }
    if (j.contains("refiner")) {
      const Json& r = j.at("refiner");
      const std::string mode = r.value("gradient_mode", std::string("analytic"));
      if (mode == "analytic") {
        cfg.refiner.gradient_mode = GradientMode::analytic;
      } else if (mode == "finite-diff") {
        cfg.refiner.gradient_mode = GradientMode::finite_diff;
      } else {
        throw ConfigError("unknown gradient mode: " + mode);
      }
      cfg.refiner.step_size = r.value("step_size", cfg.refiner.step_size);
      cfg.refiner.max_iters = r.value("max_iters", cfg.refiner.max_iters);
      cfg.refiner.convergence_tol = r.value("convergence_tol", cfg.refiner.convergence_tol);
      cfg.refiner.fd_step = r.value("fd_step", cfg.refiner.fd_step);
    }
    if (j.contains("robust")) {
      cfg.robust_alpha = j.at("robust").value("alpha", cfg.robust_alpha);
      cfg.robust_c_frac = j.at("robust").value("c_frac", cfg.robust_c_frac);
    }
    cfg.n_views = j.value("views", cfg.n_views);
    if (j.contains("sampling")) cfg.sampling = sampling_from_string(j.at("sampling").get<std::string>());
    cfg.orbit_samples = j.value("orbit_samples", cfg.orbit_samples);
    cfg.corr_err_orbit_samples = j.value("corr_err_orbit_samples", cfg.corr_err_orbit_samples);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad pipeline config: ") + e.what());
  }
  if (cfg.n_views < 1) throw ConfigError("views must be >= 1");
  if (cfg.patch_size < 8) throw ConfigError("patch_size must be >= 8");
  return cfg;
}

Json pipeline_config_to_json(const PipelineConfig& cfg) {
  return Json{
      {"mode", to_string(cfg.mode)},
      {"bbox", cfg.bbox_source == BboxSource::gt ? "gt" : "jitter"},
      {"jitter_max_frac", cfg.jitter_max_frac},
      {"patch_size", cfg.patch_size},
      {"seed", cfg.seed},
      {"noise",
       {{"bin_sigma", cfg.noise.bin_sigma},
        {"outlier_frac", cfg.noise.outlier_frac},
        {"dropout_frac", cfg.noise.dropout_frac},
        {"occluder_frac", cfg.noise.occluder_frac},
        {"seed", cfg.noise.seed}}},
      {"ransac",
       {{"pnp_threshold_px", cfg.pnp_threshold_px},
        {"kabsch_threshold_frac", cfg.kabsch_threshold_frac},
        {"max_iters", cfg.ransac_max_iters},
        {"min_inlier_count", cfg.ransac_min_inliers},
        {"confidence", cfg.ransac_confidence}}},
      {"icp", {{"enabled", cfg.icp_enabled}, {"max_iters", cfg.icp_max_iters}, {"corr_dist_frac", cfg.icp_corr_dist_frac}}},
      {"refiner",
       {{"gradient_mode", cfg.refiner.gradient_mode == GradientMode::analytic ? "analytic" : "finite-diff"},
        {"step_size", cfg.refiner.step_size},
        {"max_iters", cfg.refiner.max_iters},
        {"convergence_tol", cfg.refiner.convergence_tol},
        {"fd_step", cfg.refiner.fd_step}}},
      {"robust", {{"alpha", cfg.robust_alpha}, {"c_frac", cfg.robust_c_frac}}},
      {"views", cfg.n_views},
      {"sampling", to_string(cfg.sampling)},
      {"orbit_samples", cfg.orbit_samples},
      {"corr_err_orbit_samples", cfg.corr_err_orbit_samples},
  };
}

Mesh mesh_from_config(const Json& j) {
  try {
    if (j.contains("path")) return load_mesh(j.at("path").get<std::string>());
    const std::string builtin = j.at("builtin").get<std::string>();
    if (builtin == "cube") return make_cube(j.value("size", 1.0));
    if (builtin == "box") {
      return make_box(j.value("size_x", 1.0), j.value("size_y", 0.8), j.value("size_z", 0.6));
    }
    if (builtin == "cylinder") {
      return make_cylinder(j.value("radius", 0.4), j.value("height", 1.0), j.value("segments", 48));
    }
    if (builtin == "icosphere") return make_icosphere(j.value("radius", 0.5), j.value("subdivisions", 2));
    if (builtin == "blob") {
      return make_random_blob(j.value("radius", 0.5), j.value("subdivisions", 2), j.value("jitter", 0.2),
                              j.value("seed", uint64_t{7}));
    }
    throw ConfigError("unknown builtin mesh: " + builtin);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad mesh config: ") + e.what());
  }
}

SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig cfg;
  try {
    cfg.mesh = j.at("mesh");
    if (j.contains("symmetry")) cfg.symmetry = j.at("symmetry");
    cfg.object_id = j.value("object_id", cfg.object_id);
    if (j.contains("camera")) cfg.camera = camera_from_json(j.at("camera"));
    cfg.n_frames = j.value("n_frames", cfg.n_frames);
    cfg.min_distance_diameters = j.value("min_distance_diameters", cfg.min_distance_diameters);
    cfg.max_distance_diameters = j.value("max_distance_diameters", cfg.max_distance_diameters);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad synth config: ") + e.what());
  }
  if (cfg.n_frames < 0) throw ConfigError("n_frames must be >= 0");
  if (!(cfg.min_distance_diameters > 0.0) || cfg.max_distance_diameters < cfg.min_distance_diameters) {
    throw ConfigError("invalid view distance range");
  }
  return cfg;
}

namespace {

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

Pose sample_view_pose(Rng& rng, const Vec3& center, double diameter, double min_d, double max_d) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
  const double dist = rng.uniform(min_d, max_d) * diameter;
  const Vec3 campos = center + dist * dir;

  const Vec3 forward = (center - campos).normalized();
  const Vec3 up0 = std::abs(forward.z()) < 0.9 ? Vec3(0.0, 0.0, 1.0) : Vec3(0.0, 1.0, 0.0);
  const Vec3 x_cam = up0.cross(forward).normalized();
  const Vec3 y_cam = forward.cross(x_cam);
  const double roll = rng.uniform(0.0, 2.0 * M_PI);
  const Vec3 xr = std::cos(roll) * x_cam + std::sin(roll) * y_cam;
  const Vec3 yr = -std::sin(roll) * x_cam + std::cos(roll) * y_cam;

  Pose cam_to_world;
  cam_to_world.rotation.col(0) = xr;
  cam_to_world.rotation.col(1) = yr;
  cam_to_world.rotation.col(2) = forward;
  cam_to_world.translation = campos;
  return cam_to_world;
}

}  // namespace

SceneManifest run_synth(const SynthConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Mesh mesh = mesh_from_config(cfg.mesh);
  const NocsBounds bounds = compute_nocs_bounds(mesh);
  SymmetrySpec symmetry;
  if (!cfg.symmetry.is_null() && !cfg.symmetry.empty()) symmetry = symmetry_from_json(cfg.symmetry);

  SceneManifest manifest;
  manifest.object_id = cfg.object_id;
  manifest.camera = cfg.camera;
  manifest.units_per_count = (cfg.max_distance_diameters + 1.0) * mesh.diameter / 65000.0;

  if (cfg.mesh.contains("path")) {
    manifest.mesh_path = fs::absolute(cfg.mesh.at("path").get<std::string>()).string();
  } else {
    manifest.mesh_path = "mesh.obj";
    save_obj(mesh, (fs::path(out_dir) / "mesh.obj").string());
  }
  if (symmetry.kind != SymmetryKind::none) {
    manifest.symmetry_path = "symmetry.json";
    save_json_file(symmetry_to_json(symmetry), (fs::path(out_dir) / "symmetry.json").string());
  }

  for (int i = 0; i < cfg.n_frames; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    RenderOutput rendered;
    Pose gt, rig;
    bool visible = false;
    for (int attempt = 0; attempt < 32 && !visible; ++attempt) {
      rig = sample_view_pose(rng, bounds.center(), mesh.diameter, cfg.min_distance_diameters,
                             cfg.max_distance_diameters);
      gt = pose_invert(rig);  // world frame == model frame
      const Pose render_pose = disambiguate(gt, symmetry).adjusted;
      rendered = render(mesh, bounds, render_pose, cfg.camera, cfg.camera.width, cfg.camera.height);
      int fg = 0;
      for (uint8_t m : rendered.mask) fg += m;
      visible = fg >= 32;
    }
    if (!visible) throw DataError("could not sample a visible pose; widen the camera or distance range");

    FrameEntry frame;
    frame.id = frame_name(i);
    frame.gt_pose = gt;
    frame.rig_pose = rig;
    frame.bbox = mask_bbox(rendered.mask, rendered.width, rendered.height);
    frame.nocs_path = frame.id + "_nocs.png";
    frame.mask_path = frame.id + "_mask.png";
    frame.depth_path = frame.id + "_depth.png";

    const NocsMap gt_map = discretize_map(rendered);
    save_nocs_map(gt_map, (fs::path(out_dir) / frame.nocs_path).string(),
                  (fs::path(out_dir) / frame.mask_path).string());
    DepthMap depth;
    depth.width = rendered.width;
    depth.height = rendered.height;
    depth.values = rendered.depth;
    depth.hole.assign(rendered.mask.size(), 0);
    for (size_t p = 0; p < rendered.mask.size(); ++p) depth.hole[p] = rendered.mask[p] ? 0 : 1;
    write_depth_png((fs::path(out_dir) / frame.depth_path).string(), depth, manifest.units_per_count);

    manifest.frames.push_back(std::move(frame));
  }

  save_json_file(manifest_to_json(manifest), (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

namespace {

struct FrameEstimate {
  EvalRecord record;
  std::optional<Pose> pose;
  NocsMap pred_patch;
  BoundingBox bbox;
  CameraIntrinsics patch_cam;
};

RansacConfig make_ransac_config(const PipelineConfig& cfg, const Scene& scene, int frame_index, bool pnp) {
  RansacConfig r;
  r.max_iters = cfg.ransac_max_iters;
  r.min_inlier_count = cfg.ransac_min_inliers;
  r.confidence = cfg.ransac_confidence;
  r.inlier_threshold = pnp ? cfg.pnp_threshold_px : cfg.kabsch_threshold_frac * scene.mesh.diameter;
  r.seed = derive_seed(cfg.seed ^ kRansacSalt, frame_index);
  return r;
}

FrameEstimate estimate_frame(const Scene& scene, const PipelineConfig& cfg, int frame_index) {
  const FrameEntry& frame = scene.manifest.frames[frame_index];
  FrameEstimate est;
  est.record.object_id = scene.manifest.object_id;
  est.record.frame_id = frame.id;
  est.record.stage = "estimate";

  try {
    const NocsMap full_map = load_nocs_map(scene.resolve(frame.nocs_path), scene.resolve(frame.mask_path));
    est.bbox = frame.bbox;
    if (cfg.bbox_source == BboxSource::jitter) {
      est.bbox = jitter_bbox(frame.bbox, cfg.jitter_max_frac, derive_seed(cfg.seed ^ kJitterSalt, frame_index),
                             scene.manifest.camera.width, scene.manifest.camera.height);
    }
    const NocsMap gt_patch = extract_patch(full_map, est.bbox, cfg.patch_size);

    NoiseConfig noise = cfg.noise;
    noise.seed = derive_seed(cfg.noise.seed, frame_index);
    est.pred_patch = simulate_prediction(gt_patch, noise);

    const PatchTransform transform =
        make_patch_transform(est.bbox, scene.manifest.camera.width, scene.manifest.camera.height, cfg.patch_size);
    est.patch_cam = patch_camera(scene.manifest.camera, transform);

    est.record.dice_score = dice(est.pred_patch.mask, gt_patch.mask);
    est.record.iou_score = iou(est.pred_patch.mask, gt_patch.mask);
    try {
      est.record.corr_err_median =
          correspondence_error(est.pred_patch, gt_patch, scene.mesh, scene.bounds, est.patch_cam, frame.gt_pose,
                               scene.symmetry, cfg.corr_err_orbit_samples);
    } catch (const std::exception&) {
      est.record.corr_err_median = std::numeric_limits<double>::quiet_NaN();
    }

    const auto t0 = std::chrono::steady_clock::now();
    SolveResult solved;
    if (cfg.mode == PipelineMode::rgb) {
      const Correspondences2D3D corr = extract_2d3d(est.pred_patch, scene.bounds, est.bbox,
                                                    scene.manifest.camera.width, scene.manifest.camera.height);
      solved = pnp_ransac(corr, scene.manifest.camera, make_ransac_config(cfg, scene, frame_index, true));
    } else {
      const DepthMap full_depth = read_depth_png(scene.resolve(frame.depth_path));
      const DepthMap depth_patch = extract_patch(full_depth, est.bbox, cfg.patch_size);
      const Correspondences3D3D corr =
          extract_3d3d(est.pred_patch, depth_patch, scene.manifest.camera, scene.bounds, est.bbox);
      solved = kabsch_ransac(corr, make_ransac_config(cfg, scene, frame_index, false));
      if (cfg.icp_enabled && corr.camera_points.size() >= 16) {
        // Align only the currently visible surface: occluded vertices would
        // associate to the front surface and drag the pose.
        const RenderOutput visible = render(scene.mesh, scene.bounds, solved.pose, scene.manifest.camera,
                                            scene.manifest.camera.width, scene.manifest.camera.height);
        std::vector<uint8_t> used(scene.mesh.vertices.size(), 0);
        for (size_t p = 0; p < visible.mask.size(); ++p) {
          if (!visible.mask[p]) continue;
          for (int idx : scene.mesh.faces[visible.tri_index[p]]) used[idx] = 1;
        }
        std::vector<Vec3> model_cloud;
        for (size_t v = 0; v < used.size(); ++v) {
          if (used[v]) model_cloud.push_back(scene.mesh.vertices[v]);
        }
        if (model_cloud.size() >= 8) {
          const std::vector<Vec3> normals = estimate_normals(corr.camera_points, 16);
          solved.pose = icp_point_to_plane(model_cloud, corr.camera_points, normals, solved.pose,
                                           cfg.icp_max_iters, cfg.icp_corr_dist_frac * scene.mesh.diameter);
        }
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    est.record.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    est.record.inlier_count = static_cast<int>(solved.inlier_indices.size());
    est.record.mean_inlier_residual = solved.mean_inlier_residual;
    est.record.add = add_metric(solved.pose, frame.gt_pose, scene.mesh);
    est.record.add_sym =
        symmetry_min_add(solved.pose, frame.gt_pose, scene.mesh, scene.symmetry, cfg.orbit_samples);
    est.record.success = true;
    est.pose = solved.pose;
  } catch (const std::exception& e) {
    est.record.success = false;
    est.record.error = e.what();
  }
  return est;
}

}  // namespace

std::vector<EvalRecord> run_estimate(const Scene& scene, const PipelineConfig& cfg) {
  std::vector<EvalRecord> records(scene.manifest.frames.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(scene.manifest.frames.size()); ++i) {
    records[i] = estimate_frame(scene, cfg, i).record;
  }
  return records;
}

std::vector<EvalRecord> run_refine(const Scene& scene, const PipelineConfig& cfg, Json* report) {
  const int n_frames = static_cast<int>(scene.manifest.frames.size());
  std::vector<EvalRecord> records;
  if (report) *report = Json::array();

  // Partition the frames into non-overlapping groups of n_views using the
  // sampling strategy, always anchored at the lowest unassigned frame id.
  std::vector<int> unassigned(n_frames);
  std::iota(unassigned.begin(), unassigned.end(), 0);
  std::vector<std::vector<int>> groups;
  int group_index = 0;
  while (!unassigned.empty()) {
    const int take = std::min<int>(cfg.n_views, static_cast<int>(unassigned.size()));
    std::vector<Pose> rig;
    rig.reserve(unassigned.size());
    for (int idx : unassigned) rig.push_back(scene.manifest.frames[idx].rig_pose);
    const std::vector<int> local =
        sample_views(rig, take, cfg.sampling, derive_seed(cfg.seed ^ kGroupSalt, group_index));
    std::vector<int> group;
    for (int l : local) group.push_back(unassigned[l]);
    for (int idx : group) unassigned.erase(std::remove(unassigned.begin(), unassigned.end(), idx), unassigned.end());
    groups.push_back(std::move(group));
    ++group_index;
  }

  const RobustParams robust{cfg.robust_alpha, cfg.robust_c_frac * scene.mesh.diameter};
  for (const std::vector<int>& group : groups) {
    std::vector<FrameEstimate> estimates;
    estimates.reserve(group.size());
    for (int idx : group) {
      FrameEstimate est = estimate_frame(scene, cfg, idx);
      est.record.stage = "initial";
      records.push_back(est.record);
      estimates.push_back(std::move(est));
    }

    MultiViewSet set;
    set.mesh = &scene.mesh;
    set.bounds = scene.bounds;
    set.symmetry = scene.symmetry;
    std::vector<int> member_frames;
    for (size_t g = 0; g < group.size(); ++g) {
      if (!estimates[g].pose) continue;
      FrameObservation obs;
      obs.prediction = estimates[g].pred_patch;
      obs.camera = estimates[g].patch_cam;
      obs.rig_pose = scene.manifest.frames[group[g]].rig_pose;
      set.frames.push_back(std::move(obs));
      set.hypotheses.push_back(*estimates[g].pose);
      member_frames.push_back(group[g]);
    }

    auto refined_failure = [&](const std::string& why) {
      for (int idx : group) {
        EvalRecord r;
        r.object_id = scene.manifest.object_id;
        r.frame_id = scene.manifest.frames[idx].id;
        r.stage = "refined";
        r.success = false;
        r.error = why;
        records.push_back(std::move(r));
      }
    };

    if (set.frames.empty()) {
      refined_failure("no frame in the group produced a pose hypothesis");
      continue;
    }
    try {
      const RefineResult result = refine(set, cfg.refiner, robust);
      if (report) {
        Json frame_ids = Json::array();
        for (int idx : group) frame_ids.push_back(scene.manifest.frames[idx].id);
        report->push_back(Json{{"frames", frame_ids},
                               {"reference", scene.manifest.frames[member_frames[result.reference]].id},
                               {"objective", result.objective_history},
                               {"initial_pose", pose_to_json(result.initial)},
                               {"refined_pose", pose_to_json(result.refined)}});
      }
      for (size_t g = 0; g < member_frames.size(); ++g) {
        const int idx = member_frames[g];
        const Pose in_frame = pose_compose(set.relative_pose(result.reference, static_cast<int>(g)), result.refined);
        EvalRecord r;
        r.object_id = scene.manifest.object_id;
        r.frame_id = scene.manifest.frames[idx].id;
        r.stage = "refined";
        r.success = true;
        r.add = add_metric(in_frame, scene.manifest.frames[idx].gt_pose, scene.mesh);
        r.add_sym = symmetry_min_add(in_frame, scene.manifest.frames[idx].gt_pose, scene.mesh, scene.symmetry,
                                     cfg.orbit_samples);
        records.push_back(std::move(r));
      }
      // Frames whose solver failed stay failed after refinement.
      for (int idx : group) {
        if (std::find(member_frames.begin(), member_frames.end(), idx) != member_frames.end()) continue;
        EvalRecord r;
        r.object_id = scene.manifest.object_id;
        r.frame_id = scene.manifest.frames[idx].id;
        r.stage = "refined";
        r.success = false;
        r.error = "no pose hypothesis for this frame";
        records.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      refined_failure(e.what());
    }
  }

  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.frame_id != b.frame_id) return a.frame_id < b.frame_id;
    return a.stage < b.stage;
  });
  return records;
}

Json records_to_json(const std::vector<EvalRecord>& records) {
  Json arr = Json::array();
  for (const EvalRecord& r : records) {
    Json j{{"object_id", r.object_id},
           {"frame_id", r.frame_id},
           {"stage", r.stage},
           {"success", r.success},
           {"add", r.add},
           {"add_sym", r.add_sym},
           {"dice", r.dice_score},
           {"iou", r.iou_score},
           {"inlier_count", r.inlier_count},
           {"mean_inlier_residual", r.mean_inlier_residual}};
    if (!r.error.empty()) j["error"] = r.error;
    if (std::isfinite(r.corr_err_median)) j["corr_err_median"] = r.corr_err_median;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<EvalRecord> records_from_json(const Json& j) {
  std::vector<EvalRecord> records;
  for (const Json& e : j) {
    EvalRecord r;
    r.object_id = e.at("object_id").get<std::string>();
    r.frame_id = e.at("frame_id").get<std::string>();
    r.stage = e.value("stage", std::string("estimate"));
    r.success = e.at("success").get<bool>();
    r.error = e.value("error", std::string());
    r.add = e.value("add", 0.0);
    r.add_sym = e.value("add_sym", 0.0);
    r.corr_err_median = e.value("corr_err_median", std::numeric_limits<double>::quiet_NaN());
    r.dice_score = e.value("dice", 0.0);
    r.iou_score = e.value("iou", 0.0);
    r.inlier_count = e.value("inlier_count", 0);
    r.mean_inlier_residual = e.value("mean_inlier_residual", 0.0);
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

EvalReport run_eval(const std::vector<EvalRecord>& records, const Scene& scene, double recall_threshold) {
  if (records.empty()) throw DataError("no records to evaluate");

  std::vector<std::pair<std::string, std::string>> keys;  // (object_id, stage), first-seen order
  for (const EvalRecord& r : records) {
    const auto key = std::make_pair(r.object_id, r.stage);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }

  Json summary = Json::array();
  std::ostringstream csv;
  csv << "object_id,stage,n_frames,n_success,add_recall,mean_add,median_add,mean_add_sym,median_add_sym,"
         "mean_corr_err,median_corr_err,mean_dice,mean_iou\n";
  for (const auto& [object_id, stage] : keys) {
    std::vector<EvalRecord> group;
    for (const EvalRecord& r : records) {
      if (r.object_id == object_id && r.stage == stage) group.push_back(r);
    }
    std::vector<double> adds, add_syms, corrs, dices, ious;
    int n_success = 0;
    for (const EvalRecord& r : group) {
      if (!r.success) continue;
      ++n_success;
      adds.push_back(r.add);
      add_syms.push_back(r.add_sym);
      if (std::isfinite(r.corr_err_median)) corrs.push_back(r.corr_err_median);
      dices.push_back(r.dice_score);
      ious.push_back(r.iou_score);
    }
    const double recall = add_recall(group, scene.mesh, recall_threshold);
    summary.push_back(Json{{"object_id", object_id},
                           {"stage", stage},
                           {"n_frames", group.size()},
                           {"n_success", n_success},
                           {"add_recall", recall},
                           {"mean_add", mean_of(adds)},
                           {"median_add", median_of(adds)},
                           {"mean_add_sym", mean_of(add_syms)},
                           {"median_add_sym", median_of(add_syms)},
                           {"mean_corr_err", mean_of(corrs)},
                           {"median_corr_err", median_of(corrs)},
                           {"mean_dice", mean_of(dices)},
                           {"mean_iou", mean_of(ious)}});
    csv << object_id << ',' << stage << ',' << group.size() << ',' << n_success << ',' << csv_num(recall) << ','
        << csv_num(mean_of(adds)) << ',' << csv_num(median_of(adds)) << ',' << csv_num(mean_of(add_syms)) << ','
        << csv_num(median_of(add_syms)) << ',' << csv_num(mean_of(corrs)) << ',' << csv_num(median_of(corrs))
        << ',' << csv_num(mean_of(dices)) << ',' << csv_num(mean_of(ious)) << '\n';
  }

  EvalReport report;
  report.report = Json{{"records", records_to_json(records)}, {"summary", summary}};
  report.csv = csv.str();
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  save_json_file(report.report, (fs::path(out_dir) / "report.json").string());
  std::ofstream csv((fs::path(out_dir) / "summary.csv").string());
  if (!csv) throw DataError("cannot write summary.csv");
  csv << report.csv;
}

void run_render(const Scene& scene, const std::string& frame_id, const std::optional<Pose>& pose_override,
                const std::string& out_dir) {
  const FrameEntry* frame = nullptr;
  for (const FrameEntry& f : scene.manifest.frames) {
    if (f.id == frame_id) {
      frame = &f;
      break;
    }
  }
  if (!frame) throw DataError("frame not found: " + frame_id);

  const Pose pose = pose_override.value_or(frame->gt_pose);
  const Pose render_pose = disambiguate(pose, scene.symmetry).adjusted;
  const RenderOutput rendered = render(scene.mesh, scene.bounds, render_pose, scene.manifest.camera,
                                       scene.manifest.camera.width, scene.manifest.camera.height);

  fs::create_directories(out_dir);
  const NocsMap map = discretize_map(rendered);
  save_nocs_map(map, (fs::path(out_dir) / (frame_id + "_nocs.png")).string(),
                (fs::path(out_dir) / (frame_id + "_mask.png")).string());
  DepthMap depth;
  depth.width = rendered.width;
  depth.height = rendered.height;
  depth.values = rendered.depth;
  depth.hole.assign(rendered.mask.size(), 0);
  for (size_t p = 0; p < rendered.mask.size(); ++p) depth.hole[p] = rendered.mask[p] ? 0 : 1;
  write_depth_png((fs::path(out_dir) / (frame_id + "_depth.png")).string(), depth, scene.manifest.units_per_count);
}

}  // namespace nocspose
