#include "nocspose/serialization.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace nocspose {

Json pose_to_json(const Pose& pose) {
  Json r = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(pose.rotation(i, j));
  }
  return Json{{"R", r}, {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Pose pose_from_json(const Json& j) {
  const auto& r = j.at("R");
  const auto& t = j.at("t");
  if (r.size() != 9 || t.size() != 3) throw std::runtime_error("pose JSON must have 9 R and 3 t entries");
  Pose pose;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[i * 3 + k].get<double>();
    pose.translation[i] = t[i].get<double>();
  }
  validate_pose(pose, 1e-6);
  return pose;
}

Json camera_to_json(const CameraIntrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics camera_from_json(const Json& j) {
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

Json symmetry_to_json(const SymmetrySpec& spec) {
  Json j;
  switch (spec.kind) {
    case SymmetryKind::none:
      j["kind"] = "none";
      return j;
    case SymmetryKind::continuous_axis:
      j["kind"] = "continuous-axis";
      break;
    case SymmetryKind::discrete:
      j["kind"] = "discrete";
      break;
  }
  j["axis"] = {spec.axis.x(), spec.axis.y(), spec.axis.z()};
  if (spec.kind == SymmetryKind::discrete) {
    Json angles = Json::array();
    for (const Mat3& g : spec.transforms) {
      // Recover the rotation angle about the canonical axis.
      const Mat3 gz = spec.axis_to_z * g * spec.axis_to_z.transpose();
      angles.push_back(std::atan2(gz(1, 0), gz(0, 0)) * 180.0 / M_PI);
    }
    j["discrete_angles_deg"] = angles;
  }
  return j;
}

SymmetrySpec symmetry_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") return SymmetrySpec::none_spec();
  const auto& a = j.at("axis");
  if (a.size() != 3) throw std::runtime_error("symmetry axis must have 3 entries");
  const Vec3 axis(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  if (kind == "continuous-axis") return SymmetrySpec::continuous(axis);
  if (kind == "discrete") {
    std::vector<double> angles;
    for (const auto& v : j.at("discrete_angles_deg")) angles.push_back(v.get<double>());
    return SymmetrySpec::discrete_about_axis(axis, angles);
  }
  throw std::runtime_error("unknown symmetry kind: " + kind);
}

Json rig_to_json(const std::vector<RigEntry>& rig) {
  Json arr = Json::array();
  for (const RigEntry& e : rig) {
    arr.push_back(Json{{"id", e.id}, {"camera", camera_to_json(e.camera)}, {"pose", pose_to_json(e.pose)}});
  }
  return arr;
}

std::vector<RigEntry> rig_from_json(const Json& j) {
  std::vector<RigEntry> rig;
  for (const Json& e : j) {
    RigEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.camera = camera_from_json(e.at("camera"));
    entry.pose = pose_from_json(e.at("pose"));
    rig.push_back(std::move(entry));
  }
  return rig;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open JSON file: " + path);
  Json j;
  in >> j;
  return j;
}

void save_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write JSON file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace nocspose
