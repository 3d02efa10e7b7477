#pragma once

#include "nocspose/geometry.hpp"
#include "nocspose/symmetry.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace nocspose {

using Json = nlohmann::json;

/// {"R": [9, row-major], "t": [3]}
Json pose_to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

/// {"fx","fy","cx","cy","width","height"}
Json camera_to_json(const CameraIntrinsics& k);
CameraIntrinsics camera_from_json(const Json& j);

/// {"kind": "none"|"continuous-axis"|"discrete",
///  "axis": [x,y,z], "discrete_angles_deg": [...]}
Json symmetry_to_json(const SymmetrySpec& spec);
SymmetrySpec symmetry_from_json(const Json& j);

/// One calibrated rig station: frame id, camera and absolute camera-to-world
/// pose. A rig file is a JSON array of these.
struct RigEntry {
  std::string id;
  CameraIntrinsics camera;
  Pose pose;
};

Json rig_to_json(const std::vector<RigEntry>& rig);
std::vector<RigEntry> rig_from_json(const Json& j);

Json load_json_file(const std::string& path);
void save_json_file(const Json& j, const std::string& path);

}  // namespace nocspose
