#include "nocspose/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nocspose {

namespace {

constexpr double kMinDepth = 1e-6;

struct TriSetup {
  double px[3];
  double py[3];
  double z[3];
  Vec3 nocs[3];
  int x0, x1, y0, y1;  // inclusive pixel bounds
  int face = -1;
};

double edge_function(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

/// Zero-area edge values are accepted for exactly one of the two triangles
/// sharing the edge: those whose directed edge points down the image, or
/// horizontally leftwards.
bool edge_accepts_boundary(double ax, double ay, double bx, double by) {
  const double ey = by - ay;
  const double ex = bx - ax;
  return ey > 0.0 || (ey == 0.0 && ex < 0.0);
}

bool setup_triangle(const Mesh& mesh, const std::vector<Vec3>& vertex_nocs, const Pose& pose,
                    const CameraIntrinsics& k, int width, int height, int face, TriSetup& tri) {
  const auto& f = mesh.faces[face];
  tri.face = face;
  Vec3 cam[3];
  for (int i = 0; i < 3; ++i) {
    cam[i] = pose.apply(mesh.vertices[f[i]]);
    if (cam[i].z() <= kMinDepth) return false;
  }
  int order[3] = {0, 1, 2};
  double px[3], py[3];
  for (int i = 0; i < 3; ++i) {
    px[i] = k.fx * cam[i].x() / cam[i].z() + k.cx;
    py[i] = k.fy * cam[i].y() / cam[i].z() + k.cy;
  }
  const double area = edge_function(px[0], py[0], px[1], py[1], px[2], py[2]);
  if (area == 0.0) return false;
  if (area < 0.0) std::swap(order[1], order[2]);  // canonical orientation
  for (int i = 0; i < 3; ++i) {
    const int s = order[i];
    tri.px[i] = px[s];
    tri.py[i] = py[s];
    tri.z[i] = cam[s].z();
    tri.nocs[i] = vertex_nocs[f[s]];
  }
  const double min_x = std::min({tri.px[0], tri.px[1], tri.px[2]});
  const double max_x = std::max({tri.px[0], tri.px[1], tri.px[2]});
  const double min_y = std::min({tri.py[0], tri.py[1], tri.py[2]});
  const double max_y = std::max({tri.py[0], tri.py[1], tri.py[2]});
  tri.x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  tri.x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  tri.y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  tri.y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  return tri.x0 <= tri.x1 && tri.y0 <= tri.y1;
}

void shade_rows(const TriSetup& t, int row_begin, int row_end, RenderOutput& out, std::vector<double>& zbuf) {
  for (int y = std::max(t.y0, row_begin); y <= std::min(t.y1, row_end); ++y) {
    const double cy = y + 0.5;
    for (int x = t.x0; x <= t.x1; ++x) {
      const double cx = x + 0.5;
      const double w0 = edge_function(t.px[1], t.py[1], t.px[2], t.py[2], cx, cy);
      const double w1 = edge_function(t.px[2], t.py[2], t.px[0], t.py[0], cx, cy);
      const double w2 = edge_function(t.px[0], t.py[0], t.px[1], t.py[1], cx, cy);
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      if (w0 == 0.0 && !edge_accepts_boundary(t.px[1], t.py[1], t.px[2], t.py[2])) continue;
      if (w1 == 0.0 && !edge_accepts_boundary(t.px[2], t.py[2], t.px[0], t.py[0])) continue;
      if (w2 == 0.0 && !edge_accepts_boundary(t.px[0], t.py[0], t.px[1], t.py[1])) continue;

      const double wsum = w0 + w1 + w2;
      const double l0 = w0 / wsum;
      const double l1 = w1 / wsum;
      const double l2 = w2 / wsum;
      const double inv_z = l0 / t.z[0] + l1 / t.z[1] + l2 / t.z[2];
      const double depth = 1.0 / inv_z;

      const size_t p = out.pixel(x, y);
      if (depth < zbuf[p]) {
        zbuf[p] = depth;
        out.mask[p] = 1;
        out.depth[p] = depth;
        out.tri_index[p] = t.face;
        for (int c = 0; c < 3; ++c) {
          out.nocs[p * 3 + c] =
              depth * (l0 * t.nocs[0][c] / t.z[0] + l1 * t.nocs[1][c] / t.z[1] + l2 * t.nocs[2][c] / t.z[2]);
        }
      }
    }
  }
}

struct RenderSetup {
  RenderOutput out;
  std::vector<double> zbuf;
  std::vector<TriSetup> tris;
};

RenderSetup prepare(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose, const CameraIntrinsics& k,
                    int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("zero-area frame");
  RenderSetup s;
  s.out.width = width;
  s.out.height = height;
  s.out.mask.assign(static_cast<size_t>(width) * height, 0);
  s.out.nocs.assign(static_cast<size_t>(width) * height * 3, 0.0);
  s.out.depth.assign(static_cast<size_t>(width) * height, 0.0);
  s.out.tri_index.assign(static_cast<size_t>(width) * height, -1);
  s.zbuf.assign(static_cast<size_t>(width) * height, std::numeric_limits<double>::infinity());

  std::vector<Vec3> vertex_nocs(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) vertex_nocs[i] = nocs_project(mesh.vertices[i], bounds);

  s.tris.reserve(mesh.faces.size());
  for (size_t face = 0; face < mesh.faces.size(); ++face) {
    TriSetup tri;
    if (setup_triangle(mesh, vertex_nocs, pose, k, width, height, static_cast<int>(face), tri)) {
      s.tris.push_back(tri);
    }
  }
  return s;
}

}  // namespace

RenderOutput render_serial(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose,
                           const CameraIntrinsics& k, int width, int height) {
  RenderSetup s = prepare(mesh, bounds, pose, k, width, height);
  for (const TriSetup& t : s.tris) shade_rows(t, 0, height - 1, s.out, s.zbuf);
  return std::move(s.out);
}

RenderOutput render(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose, const CameraIntrinsics& k,
                    int width, int height) {
  RenderSetup s = prepare(mesh, bounds, pose, k, width, height);

  constexpr int kBandRows = 16;
  const int n_bands = (height + kBandRows - 1) / kBandRows;
  // Triangles are binned per band in face order, so each pixel sees them in
  // the same order as the serial path and ties break identically.
  std::vector<std::vector<int>> bins(n_bands);
  for (size_t i = 0; i < s.tris.size(); ++i) {
    const TriSetup& t = s.tris[i];
    for (int b = t.y0 / kBandRows; b <= t.y1 / kBandRows; ++b) bins[b].push_back(static_cast<int>(i));
  }

#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < n_bands; ++b) {
    const int row_begin = b * kBandRows;
    const int row_end = std::min(height - 1, row_begin + kBandRows - 1);
    for (int idx : bins[b]) shade_rows(s.tris[idx], row_begin, row_end, s.out, s.zbuf);
  }
  return std::move(s.out);
}

ImageU16 render_depth_16bit(const RenderOutput& out, double units_per_count) {
  if (!(units_per_count > 0.0)) throw std::invalid_argument("units_per_count must be positive");
  ImageU16 img;
  img.width = out.width;
  img.height = out.height;
  img.data.assign(out.mask.size(), 0);
  for (size_t p = 0; p < out.mask.size(); ++p) {
    if (!out.mask[p]) continue;
    const long long count = std::llround(out.depth[p] / units_per_count);
    if (count > 65535) throw std::runtime_error("depth overflows 16-bit range at this scale");
    img.data[p] = static_cast<uint16_t>(count);
  }
  return img;
}

std::vector<double> screen_gradient(const RenderOutput& out) {
  const int w = out.width;
  const int h = out.height;
  std::vector<double> grad(static_cast<size_t>(w) * h * 3 * 2, 0.0);
  auto fg = [&](int x, int y) { return x >= 0 && x < w && y >= 0 && y < h && out.mask[out.pixel(x, y)]; };
  auto value = [&](int x, int y, int c) { return out.nocs[out.pixel(x, y) * 3 + c]; };

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      const size_t base = (out.pixel(x, y) * 3) * 2;
      for (int c = 0; c < 3; ++c) {
        double du = 0.0;
        if (fg(x - 1, y) && fg(x + 1, y)) {
          du = 0.5 * (value(x + 1, y, c) - value(x - 1, y, c));
        } else if (fg(x + 1, y)) {
          du = value(x + 1, y, c) - value(x, y, c);
        } else if (fg(x - 1, y)) {
          du = value(x, y, c) - value(x - 1, y, c);
        }
        double dv = 0.0;
        if (fg(x, y - 1) && fg(x, y + 1)) {
          dv = 0.5 * (value(x, y + 1, c) - value(x, y - 1, c));
        } else if (fg(x, y + 1)) {
          dv = value(x, y + 1, c) - value(x, y, c);
        } else if (fg(x, y - 1)) {
          dv = value(x, y, c) - value(x, y - 1, c);
        }
        grad[base + c * 2 + 0] = du;
        grad[base + c * 2 + 1] = dv;
      }
    }
  }
  return grad;
}

std::vector<double> exact_screen_gradient(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose,
                                          const CameraIntrinsics& k, const RenderOutput& out) {
  if (out.tri_index.size() != out.mask.size()) throw std::invalid_argument("render lacks triangle indices");
  std::vector<Vec3> vertex_nocs(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) vertex_nocs[i] = nocs_project(mesh.vertices[i], bounds);

  std::vector<double> grad(static_cast<size_t>(out.width) * out.height * 3 * 2, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out.height; ++y) {
    int cached_face = -1;
    // Affine coefficients of the three edge functions and the per-vertex
    // attribute/z weights of the cached triangle.
    double wu[3], wv[3], w0c[3];
    double attr[3][3], invz[3];
    for (int x = 0; x < out.width; ++x) {
      const size_t p = out.pixel(x, y);
      const int face = out.tri_index[p];
      if (face < 0) continue;
      if (face != cached_face) {
        cached_face = face;
        const auto& f = mesh.faces[face];
        double sx[3], sy[3];
        for (int i = 0; i < 3; ++i) {
          const Vec3 cam = pose.apply(mesh.vertices[f[i]]);
          sx[i] = k.fx * cam.x() / cam.z() + k.cx;
          sy[i] = k.fy * cam.y() / cam.z() + k.cy;
          invz[i] = 1.0 / cam.z();
          for (int c = 0; c < 3; ++c) attr[i][c] = vertex_nocs[f[i]][c];
        }
        // w_i(u,v) = (x_b - x_a)(v - y_a) - (y_b - y_a)(u - x_a), (a,b) being
        // the edge opposite vertex i; only the affine coefficients matter.
        const int opp[3][2] = {{1, 2}, {2, 0}, {0, 1}};
        for (int i = 0; i < 3; ++i) {
          const int a = opp[i][0], b = opp[i][1];
          wu[i] = -(sy[b] - sy[a]);
          wv[i] = sx[b] - sx[a];
          w0c[i] = (sx[b] - sx[a]) * (-sy[a]) + (sy[b] - sy[a]) * sx[a];
        }
      }
      const double u = x + 0.5, v = y + 0.5;
      double w[3], num[3] = {0.0, 0.0, 0.0}, den = 0.0;
      double dnum_du[3] = {0.0, 0.0, 0.0}, dnum_dv[3] = {0.0, 0.0, 0.0};
      double dden_du = 0.0, dden_dv = 0.0;
      for (int i = 0; i < 3; ++i) {
        w[i] = wu[i] * u + wv[i] * v + w0c[i];
        den += w[i] * invz[i];
        dden_du += wu[i] * invz[i];
        dden_dv += wv[i] * invz[i];
        for (int c = 0; c < 3; ++c) {
          num[c] += w[i] * attr[i][c] * invz[i];
          dnum_du[c] += wu[i] * attr[i][c] * invz[i];
          dnum_dv[c] += wv[i] * attr[i][c] * invz[i];
        }
      }
      const size_t base = (p * 3) * 2;
      for (int c = 0; c < 3; ++c) {
        grad[base + c * 2 + 0] = (dnum_du[c] * den - num[c] * dden_du) / (den * den);
        grad[base + c * 2 + 1] = (dnum_dv[c] * den - num[c] * dden_dv) / (den * den);
      }
    }
  }
  return grad;
}

ImageU8 nocs_to_image(const RenderOutput& out) {
  ImageU8 img;
  img.width = out.width;
  img.height = out.height;
  img.channels = 3;
  img.data.assign(static_cast<size_t>(out.width) * out.height * 3, 0);
  for (size_t p = 0; p < out.mask.size(); ++p) {
    if (!out.mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(out.nocs[p * 3 + c], 0.0, 1.0);
      img.data[p * 3 + c] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
    }
  }
  return img;
}

ImageU8 mask_to_image(const std::vector<uint8_t>& mask, int width, int height) {
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.data.resize(mask.size());
  for (size_t p = 0; p < mask.size(); ++p) img.data[p] = mask[p] ? 255 : 0;
  return img;
}

}  // namespace nocspose
