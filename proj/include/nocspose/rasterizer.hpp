#pragma once

#include "nocspose/geometry.hpp"
#include "nocspose/image_io.hpp"

#include <vector>

namespace nocspose {

/// Hard z-buffered render of a mesh: binary mask, per-pixel NOCS coordinates
/// and camera-space depth. nocs, depth and tri_index are meaningful only
/// where mask=1.
struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> mask;      // H*W
  std::vector<double> nocs;       // H*W*3
  std::vector<double> depth;      // H*W
  std::vector<int32_t> tri_index; // H*W, winning face, -1 on background

  size_t pixel(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

/// Rasterizes the mesh seen through a pinhole camera. Pixel centers sit at
/// (i+0.5, j+0.5); shared triangle edges are claimed by exactly one triangle
/// (top-left style fill rule); NOCS is interpolated perspective-correctly;
/// triangles with any vertex at z <= 1e-6 are culled; back-face culling is
/// off and exact depth ties go to the lower face index.
RenderOutput render(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose,
                    const CameraIntrinsics& k, int width, int height);

/// Single-threaded reference implementation; bit-identical to render().
RenderOutput render_serial(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose,
                           const CameraIntrinsics& k, int width, int height);

/// Quantizes depth to 16-bit counts (round to nearest); background pixels are
/// 0. Throws if any depth exceeds the 16-bit range at the given scale.
ImageU16 render_depth_16bit(const RenderOutput& out, double units_per_count);

/// Screen-space derivatives of the rendered NOCS (du then dv per channel),
/// laid out as H*W*3*2. Central differences where both neighbors are
/// foreground, one-sided at mask borders, zero where isolated.
std::vector<double> screen_gradient(const RenderOutput& out);

/// Exact screen-space NOCS derivative of each pixel's winning triangle,
/// from its projective-linear interpolation form; same layout as
/// screen_gradient. Unlike finite differences this does not smear across
/// facet edges, which matters on coarsely faceted meshes.
std::vector<double> exact_screen_gradient(const Mesh& mesh, const NocsBounds& bounds, const Pose& pose,
                                          const CameraIntrinsics& k, const RenderOutput& out);

/// 8-bit RGB PNG image of the NOCS channels, channel = round(255*c).
ImageU8 nocs_to_image(const RenderOutput& out);

/// 8-bit grayscale {0,255} mask image.
ImageU8 mask_to_image(const std::vector<uint8_t>& mask, int width, int height);

}  // namespace nocspose
