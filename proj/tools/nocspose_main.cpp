#include "nocspose/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

using namespace nocspose;

Json load_config_or_default(const std::string& path) {
  if (path.empty()) return Json::object();
  try {
    return load_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string out = "out";
  std::optional<uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> bbox;
  std::optional<int> views;
  std::optional<std::string> sampling;
};

PipelineConfig resolve_pipeline_config(const CommonFlags& flags) {
  PipelineConfig cfg = pipeline_config_from_json(load_config_or_default(flags.config));
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.noise.seed = *flags.seed;
  }
  if (flags.mode) cfg.mode = pipeline_mode_from_string(*flags.mode);
  if (flags.bbox) {
    if (*flags.bbox == "gt") {
      cfg.bbox_source = BboxSource::gt;
    } else if (*flags.bbox == "jitter") {
      cfg.bbox_source = BboxSource::jitter;
    } else {
      throw ConfigError("unknown bbox source: " + *flags.bbox);
    }
  }
  if (flags.views) cfg.n_views = *flags.views;
  if (flags.sampling) cfg.sampling = sampling_from_string(*flags.sampling);
  return cfg;
}

void write_records(const std::vector<EvalRecord>& records, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_json_file(records_to_json(records), (std::filesystem::path(out_dir) / "records.json").string());
}

void require_any_success(const std::vector<EvalRecord>& records) {
  for (const EvalRecord& r : records) {
    if (r.success) return;
  }
  throw NoFramesSucceeded("no frame succeeded");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-correspondence 6DoF pose estimation toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string frame_id;
  std::string pose_path;

  auto add_common = [&](CLI::App* cmd, bool with_manifest) {
    cmd->add_option("--config", flags.config, "pipeline config JSON");
    if (with_manifest) cmd->add_option("--manifest", flags.manifest, "scene manifest JSON")->required();
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--seed", flags.seed, "seed override");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene");
  synth->add_option("--config", flags.config, "synth config JSON")->required();
  synth->add_option("--out", flags.out, "output directory")->required();
  synth->add_option("--seed", flags.seed, "seed override");

  CLI::App* estimate = app.add_subcommand("estimate", "run the estimation pipeline");
  add_common(estimate, true);
  estimate->add_option("--mode", flags.mode, "rgb | rgbd | rgb+d-kabsch");
  estimate->add_option("--bbox", flags.bbox, "gt | jitter");

  CLI::App* refine_cmd = app.add_subcommand("refine", "multi-view refinement");
  add_common(refine_cmd, true);
  refine_cmd->add_option("--mode", flags.mode, "rgb | rgbd | rgb+d-kabsch");
  refine_cmd->add_option("--bbox", flags.bbox, "gt | jitter");
  refine_cmd->add_option("--views", flags.views, "views per refinement group");
  refine_cmd->add_option("--sampling", flags.sampling, "closest | random | furthest");

  CLI::App* eval = app.add_subcommand("eval", "aggregate records into a report");
  std::string records_path;
  eval->add_option("--records", records_path, "records JSON from estimate/refine")->required();
  eval->add_option("--manifest", flags.manifest, "scene manifest JSON")->required();
  eval->add_option("--out", flags.out, "output directory");

  CLI::App* render_cmd = app.add_subcommand("render", "debug-render one frame");
  render_cmd->add_option("--manifest", flags.manifest, "scene manifest JSON")->required();
  render_cmd->add_option("--frame", frame_id, "frame id")->required();
  render_cmd->add_option("--pose", pose_path, "pose JSON overriding the ground truth");
  render_cmd->add_option("--out", flags.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      Json j = load_config_or_default(flags.config);
      if (flags.seed) j["seed"] = *flags.seed;
      run_synth(synth_config_from_json(j), flags.out);
      std::cout << "wrote " << flags.out << "/manifest.json\n";
    } else if (estimate->parsed()) {
      const Scene scene = load_scene(flags.manifest);
      const PipelineConfig cfg = resolve_pipeline_config(flags);
      const std::vector<EvalRecord> records = run_estimate(scene, cfg);
      write_records(records, flags.out);
      std::cout << "wrote " << flags.out << "/records.json (" << records.size() << " records)\n";
      require_any_success(records);
    } else if (refine_cmd->parsed()) {
      const Scene scene = load_scene(flags.manifest);
      const PipelineConfig cfg = resolve_pipeline_config(flags);
      Json report;
      const std::vector<EvalRecord> records = run_refine(scene, cfg, &report);
      write_records(records, flags.out);
      save_json_file(report, (std::filesystem::path(flags.out) / "refine_report.json").string());
      std::cout << "wrote " << flags.out << "/records.json and refine_report.json\n";
      require_any_success(records);
    } else if (eval->parsed()) {
      const Scene scene = load_scene(flags.manifest);
      const std::vector<EvalRecord> records = records_from_json(load_json_file(records_path));
      const EvalReport report = run_eval(records, scene);
      write_eval_report(report, flags.out);
      std::cout << "wrote " << flags.out << "/report.json and summary.csv\n";
    } else if (render_cmd->parsed()) {
      const Scene scene = load_scene(flags.manifest);
      std::optional<Pose> pose;
      if (!pose_path.empty()) pose = pose_from_json(load_json_file(pose_path));
      run_render(scene, frame_id, pose, flags.out);
      std::cout << "wrote renders for frame " << frame_id << " to " << flags.out << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NoFramesSucceeded& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
