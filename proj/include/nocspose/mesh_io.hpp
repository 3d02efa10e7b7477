#pragma once

#include "nocspose/geometry.hpp"

#include <string>

namespace nocspose {

/// ASCII OBJ, v/f records only. Face indices are 1-based; negative indices
/// and v/vt/vn slash syntax are accepted, faces with more than three vertices
/// are fan-triangulated.
Mesh load_obj(const std::string& path);

/// ASCII PLY with x/y/z vertex properties and list-style face records.
Mesh load_ply(const std::string& path);

/// Dispatch on the file extension (.obj / .ply).
Mesh load_mesh(const std::string& path);

void save_obj(const Mesh& mesh, const std::string& path);

}  // namespace nocspose
