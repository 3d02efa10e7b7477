#include "nocspose/mesh_primitives.hpp"

#include "nocspose/rng.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

namespace nocspose {

Mesh make_box(double sx, double sy, double sz) {
  Mesh m;
  const double hx = 0.5 * sx, hy = 0.5 * sy, hz = 0.5 * sz;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hx : -hx, (i & 2) ? hy : -hy, (i & 4) ? hz : -hz);
  }
  const int quads[6][4] = {
      {0, 2, 3, 1},  // -z
      {4, 5, 7, 6},  // +z
      {0, 1, 5, 4},  // -y
      {2, 6, 7, 3},  // +y
      {0, 4, 6, 2},  // -x
      {1, 3, 7, 5},  // +x
  };
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  m.finalize();
  return m;
}

Mesh make_cylinder(double radius, double height, int segments) {
  if (segments < 3) throw std::invalid_argument("cylinder needs at least 3 segments");
  Mesh m;
  const double hz = 0.5 * height;
  for (int ring = 0; ring < 2; ++ring) {
    const double z = ring == 0 ? -hz : hz;
    for (int i = 0; i < segments; ++i) {
      const double a = 2.0 * M_PI * i / segments;
      m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
    }
  }
  const int bottom_center = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -hz);
  const int top_center = bottom_center + 1;
  m.vertices.emplace_back(0.0, 0.0, hz);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    m.faces.push_back({i, j, segments + j});
    m.faces.push_back({i, segments + j, segments + i});
    m.faces.push_back({bottom_center, j, i});
    m.faces.push_back({top_center, segments + i, segments + j});
  }
  m.finalize();
  return m;
}

namespace {

int midpoint(int a, int b, std::vector<Vec3>& verts, std::map<std::pair<int, int>, int>& cache, double radius) {
  const auto key = std::minmax(a, b);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const Vec3 mid = (verts[a] + verts[b]).normalized() * radius;
  const int idx = static_cast<int>(verts.size());
  verts.push_back(mid);
  cache.emplace(key, idx);
  return idx;
}

}  // namespace

Mesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& v : raw) m.vertices.push_back(Vec3(v[0], v[1], v[2]).normalized() * radius);
  const int raw_faces[20][3] = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                {1, 5, 9},   {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                {3, 9, 4},   {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                {4, 9, 5},   {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (const auto& f : raw_faces) m.faces.push_back({f[0], f[1], f[2]});

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> cache;
    std::vector<std::array<int, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const int ab = midpoint(f[0], f[1], m.vertices, cache, radius);
      const int bc = midpoint(f[1], f[2], m.vertices, cache, radius);
      const int ca = midpoint(f[2], f[0], m.vertices, cache, radius);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  m.finalize();
  return m;
}

Mesh make_random_blob(double radius, int subdivisions, double jitter, uint64_t seed) {
  if (jitter < 0.0 || jitter >= 1.0) throw std::invalid_argument("blob jitter must be in [0,1)");
  Mesh m = make_icosphere(radius, subdivisions);
  Rng rng(seed);
  for (Vec3& v : m.vertices) {
    v *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
  }
  m.finalize();
  return m;
}

}  // namespace nocspose
