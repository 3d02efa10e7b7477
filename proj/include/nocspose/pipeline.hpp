#pragma once

#include "nocspose/correspondence.hpp"
#include "nocspose/geometry.hpp"
#include "nocspose/metrics.hpp"
#include "nocspose/refine.hpp"
#include "nocspose/serialization.hpp"
#include "nocspose/solvers.hpp"
#include "nocspose/symmetry.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nocspose {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoFramesSucceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrameEntry {
  std::string id;
  Pose gt_pose;   // model -> camera
  Pose rig_pose;  // camera -> world
  BoundingBox bbox;
  std::string nocs_path;
  std::string mask_path;
  std::string depth_path;
};

struct SceneManifest {
  std::string object_id = "object";
  std::string mesh_path;
  std::string symmetry_path;  // empty = no symmetry
  CameraIntrinsics camera;
  double units_per_count = 0.0;
  std::vector<FrameEntry> frames;
};

Json manifest_to_json(const SceneManifest& m);
SceneManifest manifest_from_json(const Json& j);

/// Manifest plus the loaded mesh/bounds/symmetry; file paths resolve against
/// the manifest directory.
struct Scene {
  std::string dir;
  SceneManifest manifest;
  Mesh mesh;
  NocsBounds bounds;
  SymmetrySpec symmetry;

  std::string resolve(const std::string& relative) const;
};

Scene load_scene(const std::string& manifest_path);

enum class PipelineMode { rgb, rgbd, rgb_d_kabsch };
enum class BboxSource { gt, jitter };

PipelineMode pipeline_mode_from_string(const std::string& s);
std::string to_string(PipelineMode mode);
SamplingStrategy sampling_from_string(const std::string& s);
std::string to_string(SamplingStrategy strategy);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::rgb_d_kabsch;
  BboxSource bbox_source = BboxSource::gt;
  double jitter_max_frac = 0.1;
  int patch_size = 128;
  uint64_t seed = 1;

  NoiseConfig noise;

  double pnp_threshold_px = 2.0;
  double kabsch_threshold_frac = 0.05;  // of mesh diameter
  int ransac_max_iters = 300;
  int ransac_min_inliers = 12;
  double ransac_confidence = 0.995;

  bool icp_enabled = false;
  int icp_max_iters = 30;
  double icp_corr_dist_frac = 0.1;  // of mesh diameter

  RefinerConfig refiner;
  double robust_alpha = 1.0;
  double robust_c_frac = 0.05;  // of mesh diameter
  int n_views = 4;
  SamplingStrategy sampling = SamplingStrategy::random;

  int orbit_samples = 360;           // symmetry-aware ADD resolution
  int corr_err_orbit_samples = 36;   // orbit renders for the correspondence metric
};

PipelineConfig pipeline_config_from_json(const Json& j);
Json pipeline_config_to_json(const PipelineConfig& cfg);

struct SynthConfig {
  Json mesh;      // {"path": ...} or {"builtin": "cube"|"box"|"cylinder"|"icosphere"|"blob", ...}
  Json symmetry;  // optional symmetry spec JSON
  std::string object_id = "object";
  CameraIntrinsics camera{180.0, 180.0, 64.0, 64.0, 128, 128};
  int n_frames = 20;
  double min_distance_diameters = 2.5;
  double max_distance_diameters = 4.5;
  uint64_t seed = 1;
};

SynthConfig synth_config_from_json(const Json& j);
Mesh mesh_from_config(const Json& j);

/// Renders a synthetic scene (view-sphere poses, NOCS/mask/depth files) and
/// writes manifest.json into out_dir.
SceneManifest run_synth(const SynthConfig& cfg, const std::string& out_dir);

/// Per-frame bbox -> patch -> simulated prediction -> correspondences ->
/// solver. Frame failures become failed records, never exceptions.
std::vector<EvalRecord> run_estimate(const Scene& scene, const PipelineConfig& cfg);

/// Groups frames by the sampling strategy, refines each group jointly and
/// emits before/after records. When `report` is given it receives one entry
/// per group with the selected reference, per-iteration objective and the
/// initial/refined poses.
std::vector<EvalRecord> run_refine(const Scene& scene, const PipelineConfig& cfg, Json* report = nullptr);

Json records_to_json(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_json(const Json& j);

struct EvalReport {
  Json report;      // {"records": [...], "summary": [...]}
  std::string csv;  // fixed column order summary
};

EvalReport run_eval(const std::vector<EvalRecord>& records, const Scene& scene, double recall_threshold = 0.1);
void write_eval_report(const EvalReport& report, const std::string& out_dir);

/// Renders one frame at the given pose (ground truth when absent) and writes
/// <id>_nocs.png/_mask.png/_depth.png into out_dir.
void run_render(const Scene& scene, const std::string& frame_id, const std::optional<Pose>& pose_override,
                const std::string& out_dir);

}  // namespace nocspose
