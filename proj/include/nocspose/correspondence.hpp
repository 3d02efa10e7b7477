#pragma once

#include "nocspose/depth_aug.hpp"
#include "nocspose/geometry.hpp"
#include "nocspose/rasterizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nocspose {

/// Discretized NOCS prediction: binary mask plus one 256-bin label per
/// channel. This is the on-disk and in-memory stand-in for the network
/// output after mask thresholding and per-dimension argmax.
struct NocsMap {
  int width = 128;
  int height = 128;
  std::vector<uint8_t> mask;  // H*W
  std::vector<uint8_t> bins;  // H*W*3, valid where mask=1

  static NocsMap empty(int width, int height);
  size_t pixel(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  int foreground_count() const;
};

/// bin = round(c * 255), input clamped to [0,1], halves round up.
uint8_t discretize(double c);

/// c = bin / 255.
double decode_bin(uint8_t bin);

/// Decoded NOCS coordinate of a map pixel.
Vec3 decode_pixel(const NocsMap& map, int x, int y);

/// Mask + discretized NOCS of a render.
NocsMap discretize_map(const RenderOutput& render);

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Tight bounding box of the mask foreground. Throws if the mask is empty.
BoundingBox mask_bbox(const std::vector<uint8_t>& mask, int width, int height);

/// Affine map between patch pixels and full-image pixels. The bbox is padded
/// on its shorter side to a square of side `scale * out_size` anchored at
/// (x0, y0); patch pixel (i, j) samples the full-image position
/// (x0 + (i+0.5)*scale, y0 + (j+0.5)*scale).
struct PatchTransform {
  double scale = 1.0;
  double x0 = 0.0;
  double y0 = 0.0;
  int out_size = 128;

  Vec2 patch_to_full(double u, double v) const { return {x0 + (u + 0.5) * scale, y0 + (v + 0.5) * scale}; }
  Vec2 full_to_patch(double u, double v) const { return {(u - x0) / scale - 0.5, (v - y0) / scale - 0.5}; }
  /// Index of the full-image pixel sampled by patch pixel (i, j).
  void source_pixel(int i, int j, int& x, int& y) const;
};

/// Builds the patch geometry for a bbox. Throws if the bbox misses the image
/// or has sides below one pixel.
PatchTransform make_patch_transform(const BoundingBox& bbox, int image_width, int image_height,
                                    int out_size = 128);

/// Nearest-neighbor crop of a NOCS map (labels never blend); pixels sampled
/// outside the image are background.
NocsMap extract_patch(const NocsMap& full, const BoundingBox& bbox, int out_size = 128);

/// Bilinear crop of a depth map (holes excluded from the interpolation);
/// samples with no valid tap, or outside the image, become holes.
DepthMap extract_patch(const DepthMap& full, const BoundingBox& bbox, int out_size = 128);

/// Camera intrinsics that render the patch viewport directly.
CameraIntrinsics patch_camera(const CameraIntrinsics& full, const PatchTransform& t);

/// Each bbox side is independently shifted by uniform(-max_frac, +max_frac)
/// of its length, then clipped to the image.
BoundingBox jitter_bbox(const BoundingBox& bbox, double max_frac, uint64_t seed, int image_width,
                        int image_height);

/// Pixel <-> model-point pairs for PnP. Image points are full-image pixel
/// centers (patch geometry undone).
struct Correspondences2D3D {
  std::vector<Vec2> image_points;
  std::vector<Vec3> model_points;
};

/// Camera-space <-> model-point pairs for Kabsch.
struct Correspondences3D3D {
  std::vector<Vec3> camera_points;
  std::vector<Vec3> model_points;
};

/// One pair per foreground pixel, deduplicated by source pixel when the
/// patch oversamples. Throws "insufficient correspondences" below 4 pairs.
Correspondences2D3D extract_2d3d(const NocsMap& map, const NocsBounds& bounds, const BoundingBox& bbox,
                                 int image_width, int image_height);

/// Pairs (backprojected depth, decoded model point) for foreground pixels
/// with valid depth. Throws below 3 pairs.
Correspondences3D3D extract_3d3d(const NocsMap& map, const DepthMap& patch_depth, const CameraIntrinsics& k,
                                 const NocsBounds& bounds, const BoundingBox& bbox);

/// Desk-scale stand-in for network error. Applied in order: Gaussian bin
/// noise, uniform outliers, foreground dropout, rectangular occluder.
struct NoiseConfig {
  double bin_sigma = 0.0;
  double outlier_frac = 0.0;
  double dropout_frac = 0.0;
  double occluder_frac = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

NocsMap simulate_prediction(const NocsMap& gt, const NoiseConfig& cfg);

/// PNG pair <stem>_nocs.png (RGB bins) / <stem>_mask.png ({0,255} gray).
void save_nocs_map(const NocsMap& map, const std::string& nocs_path, const std::string& mask_path);
NocsMap load_nocs_map(const std::string& nocs_path, const std::string& mask_path);

}  // namespace nocspose
