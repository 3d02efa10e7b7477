#pragma once

#include "nocspose/geometry.hpp"

#include <cstdint>

namespace nocspose {

/// Axis-aligned box centered at the origin.
Mesh make_box(double size_x, double size_y, double size_z);

inline Mesh make_cube(double size) { return make_box(size, size, size); }

/// Closed cylinder around the Z axis, centered at the origin.
Mesh make_cylinder(double radius, double height, int segments);

/// Geodesic sphere from a subdivided icosahedron. subdivisions=0 gives 20
/// triangles, each level quadruples the count.
Mesh make_icosphere(double radius, int subdivisions);

/// Star-shaped random blob: an icosphere with seeded radial jitter. Stays a
/// valid closed mesh for any jitter < 1.
Mesh make_random_blob(double radius, int subdivisions, double jitter, uint64_t seed);

}  // namespace nocspose
