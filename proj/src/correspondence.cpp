#include "nocspose/correspondence.hpp"

#include "nocspose/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nocspose {

NocsMap NocsMap::empty(int width, int height) {
  NocsMap m;
  m.width = width;
  m.height = height;
  m.mask.assign(static_cast<size_t>(width) * height, 0);
  m.bins.assign(static_cast<size_t>(width) * height * 3, 0);
  return m;
}

int NocsMap::foreground_count() const {
  int n = 0;
  for (uint8_t m : mask) n += m ? 1 : 0;
  return n;
}

uint8_t discretize(double c) {
  const double clamped = std::clamp(c, 0.0, 1.0);
  return static_cast<uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

double decode_bin(uint8_t bin) { return bin / 255.0; }

Vec3 decode_pixel(const NocsMap& map, int x, int y) {
  const size_t p = map.pixel(x, y);
  return {decode_bin(map.bins[p * 3 + 0]), decode_bin(map.bins[p * 3 + 1]), decode_bin(map.bins[p * 3 + 2])};
}

NocsMap discretize_map(const RenderOutput& render) {
  NocsMap m = NocsMap::empty(render.width, render.height);
  m.mask = render.mask;
  for (size_t p = 0; p < render.mask.size(); ++p) {
    if (!render.mask[p]) continue;
    for (int c = 0; c < 3; ++c) m.bins[p * 3 + c] = discretize(render.nocs[p * 3 + c]);
  }
  return m;
}

BoundingBox mask_bbox(const std::vector<uint8_t>& mask, int width, int height) {
  int min_x = width, min_y = height, max_x = -1, max_y = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask[static_cast<size_t>(y) * width + x]) continue;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) throw std::runtime_error("mask is empty");
  return {static_cast<double>(min_x), static_cast<double>(min_y), static_cast<double>(max_x - min_x + 1),
          static_cast<double>(max_y - min_y + 1)};
}

void PatchTransform::source_pixel(int i, int j, int& x, int& y) const {
  const Vec2 full = patch_to_full(i, j);
  x = static_cast<int>(std::floor(full.x()));
  y = static_cast<int>(std::floor(full.y()));
}

PatchTransform make_patch_transform(const BoundingBox& bbox, int image_width, int image_height, int out_size) {
  if (bbox.w < 1.0 || bbox.h < 1.0) throw std::invalid_argument("bbox sides must be of at least one pixel");
  if (bbox.x + bbox.w <= 0.0 || bbox.y + bbox.h <= 0.0 || bbox.x >= image_width || bbox.y >= image_height) {
    throw std::invalid_argument("bbox does not intersect the image");
  }
  const double side = std::max(bbox.w, bbox.h);
  PatchTransform t;
  t.out_size = out_size;
  t.scale = side / out_size;
  t.x0 = bbox.x + 0.5 * (bbox.w - side);  // shorter side padded symmetrically
  t.y0 = bbox.y + 0.5 * (bbox.h - side);
  return t;
}

NocsMap extract_patch(const NocsMap& full, const BoundingBox& bbox, int out_size) {
  const PatchTransform t = make_patch_transform(bbox, full.width, full.height, out_size);
  NocsMap patch = NocsMap::empty(out_size, out_size);
  for (int j = 0; j < out_size; ++j) {
    for (int i = 0; i < out_size; ++i) {
      int x, y;
      t.source_pixel(i, j, x, y);
      if (x < 0 || x >= full.width || y < 0 || y >= full.height) continue;
      const size_t src = full.pixel(x, y);
      if (!full.mask[src]) continue;
      const size_t dst = patch.pixel(i, j);
      patch.mask[dst] = 1;
      for (int c = 0; c < 3; ++c) patch.bins[dst * 3 + c] = full.bins[src * 3 + c];
    }
  }
  return patch;
}

namespace {

/// Bilinear depth at a continuous position (pixel-center convention); holes
/// are excluded and the weights renormalized. Returns false with no valid tap.
bool sample_depth_bilinear(const DepthMap& d, double px, double py, double& out) {
  const double fx = px - 0.5;
  const double fy = py - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  double wsum = 0.0;
  double vsum = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const int xx = x0 + dx, yy = y0 + dy;
      if (xx < 0 || xx >= d.width || yy < 0 || yy >= d.height || !d.valid(xx, yy)) continue;
      const double w = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      wsum += w;
      vsum += w * d.values[d.pixel(xx, yy)];
    }
  }
  if (wsum <= 0.0) return false;
  out = vsum / wsum;
  return true;
}

}  // namespace

DepthMap extract_patch(const DepthMap& full, const BoundingBox& bbox, int out_size) {
  const PatchTransform t = make_patch_transform(bbox, full.width, full.height, out_size);
  DepthMap patch = DepthMap::filled(out_size, out_size);
  std::fill(patch.hole.begin(), patch.hole.end(), 1);
  for (int j = 0; j < out_size; ++j) {
    for (int i = 0; i < out_size; ++i) {
      const Vec2 pos = t.patch_to_full(i, j);
      double value = 0.0;
      if (!sample_depth_bilinear(full, pos.x(), pos.y(), value)) continue;
      const size_t dst = patch.pixel(i, j);
      patch.hole[dst] = 0;
      patch.values[dst] = value;
    }
  }
  return patch;
}

CameraIntrinsics patch_camera(const CameraIntrinsics& full, const PatchTransform& t) {
  CameraIntrinsics k;
  k.fx = full.fx / t.scale;
  k.fy = full.fy / t.scale;
  k.cx = (full.cx - t.x0) / t.scale;
  k.cy = (full.cy - t.y0) / t.scale;
  k.width = t.out_size;
  k.height = t.out_size;
  return k;
}

BoundingBox jitter_bbox(const BoundingBox& bbox, double max_frac, uint64_t seed, int image_width,
                        int image_height) {
  if (max_frac < 0.0 || max_frac >= 0.5) throw std::invalid_argument("jitter max_frac must be in [0, 0.5)");
  Rng rng(seed);
  double left = bbox.x + rng.uniform(-max_frac, max_frac) * bbox.w;
  double right = bbox.x + bbox.w + rng.uniform(-max_frac, max_frac) * bbox.w;
  double top = bbox.y + rng.uniform(-max_frac, max_frac) * bbox.h;
  double bottom = bbox.y + bbox.h + rng.uniform(-max_frac, max_frac) * bbox.h;
  left = std::clamp(left, 0.0, static_cast<double>(image_width) - 1.0);
  top = std::clamp(top, 0.0, static_cast<double>(image_height) - 1.0);
  right = std::clamp(right, left + 1.0, static_cast<double>(image_width));
  bottom = std::clamp(bottom, top + 1.0, static_cast<double>(image_height));
  return {left, top, right - left, bottom - top};
}

namespace {

/// Visits foreground patch pixels whose source pixels are distinct, in
/// row-major patch order. The callback gets the patch pixel and its source.
template <typename Fn>
void for_each_unique_source(const NocsMap& map, const PatchTransform& t, int image_width, int image_height,
                            Fn&& fn) {
  std::vector<uint8_t> seen(static_cast<size_t>(image_width) * image_height, 0);
  for (int j = 0; j < map.height; ++j) {
    for (int i = 0; i < map.width; ++i) {
      if (!map.mask[map.pixel(i, j)]) continue;
      int x, y;
      t.source_pixel(i, j, x, y);
      if (x < 0 || x >= image_width || y < 0 || y >= image_height) continue;
      uint8_t& mark = seen[static_cast<size_t>(y) * image_width + x];
      if (mark) continue;
      mark = 1;
      fn(i, j, x, y);
    }
  }
}

}  // namespace

Correspondences2D3D extract_2d3d(const NocsMap& map, const NocsBounds& bounds, const BoundingBox& bbox,
                                 int image_width, int image_height) {
  const PatchTransform t = make_patch_transform(bbox, image_width, image_height, map.width);
  Correspondences2D3D out;
  for_each_unique_source(map, t, image_width, image_height, [&](int i, int j, int x, int y) {
    out.image_points.emplace_back(x + 0.5, y + 0.5);
    out.model_points.push_back(nocs_unproject(decode_pixel(map, i, j), bounds));
  });
  if (out.image_points.size() < 4) throw std::runtime_error("insufficient correspondences");
  return out;
}

Correspondences3D3D extract_3d3d(const NocsMap& map, const DepthMap& patch_depth, const CameraIntrinsics& k,
                                 const NocsBounds& bounds, const BoundingBox& bbox) {
  if (patch_depth.width != map.width || patch_depth.height != map.height) {
    throw std::invalid_argument("depth patch size does not match the map");
  }
  const PatchTransform t = make_patch_transform(bbox, k.width, k.height, map.width);
  Correspondences3D3D out;
  for_each_unique_source(map, t, k.width, k.height, [&](int i, int j, int x, int y) {
    // The decoded bins belong to the source pixel's center ray, so the depth
    // is re-sampled at that center's patch coordinates; taking the patch
    // pixel's own value would pair the bins with a ray up to half a source
    // pixel away.
    const Vec2 pc = t.full_to_patch(x + 0.5, y + 0.5);
    double depth = 0.0;
    if (!sample_depth_bilinear(patch_depth, pc.x() + 0.5, pc.y() + 0.5, depth) || !(depth > 0.0)) return;
    out.camera_points.push_back(backproject(k, x + 0.5, y + 0.5, depth));
    out.model_points.push_back(nocs_unproject(decode_pixel(map, i, j), bounds));
  });
  if (out.camera_points.size() < 3) throw std::runtime_error("insufficient correspondences");
  return out;
}

void NoiseConfig::validate() const {
  if (bin_sigma < 0.0) throw std::invalid_argument("bin_sigma must be >= 0");
  for (double f : {outlier_frac, dropout_frac, occluder_frac}) {
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("noise fractions must be in [0, 1]");
  }
}

NocsMap simulate_prediction(const NocsMap& gt, const NoiseConfig& cfg) {
  cfg.validate();
  NocsMap out = gt;
  Rng rng(cfg.seed);

  if (cfg.bin_sigma > 0.0) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const size_t p = out.pixel(x, y);
        if (!out.mask[p]) continue;
        for (int c = 0; c < 3; ++c) {
          const double noisy = out.bins[p * 3 + c] + rng.normal(0.0, cfg.bin_sigma);
          out.bins[p * 3 + c] = static_cast<uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
        }
      }
    }
  }

  if (cfg.outlier_frac > 0.0) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const size_t p = out.pixel(x, y);
        if (!out.mask[p] || rng.uniform() >= cfg.outlier_frac) continue;
        for (int c = 0; c < 3; ++c) out.bins[p * 3 + c] = static_cast<uint8_t>(rng.uniform_index(256));
      }
    }
  }

  if (cfg.dropout_frac > 0.0) {
    for (size_t p = 0; p < out.mask.size(); ++p) {
      if (out.mask[p] && rng.uniform() < cfg.dropout_frac) out.mask[p] = 0;
    }
  }

  if (cfg.occluder_frac > 0.0 && gt.foreground_count() > 0) {
    const BoundingBox fg = mask_bbox(gt.mask, gt.width, gt.height);
    const double area = cfg.occluder_frac * fg.w * fg.h;
    const double aspect = rng.uniform(0.5, 2.0);
    const double rw = std::sqrt(area * aspect);
    const double rh = area / std::max(rw, 1e-9);
    const int cx = static_cast<int>(fg.x + rng.uniform() * fg.w);
    const int cy = static_cast<int>(fg.y + rng.uniform() * fg.h);
    const int x0 = std::max(0, cx - static_cast<int>(rw / 2));
    const int y0 = std::max(0, cy - static_cast<int>(rh / 2));
    const int x1 = std::min(out.width, x0 + std::max(1, static_cast<int>(rw)));
    const int y1 = std::min(out.height, y0 + std::max(1, static_cast<int>(rh)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) out.mask[out.pixel(x, y)] = 0;
    }
  }
  return out;
}

void save_nocs_map(const NocsMap& map, const std::string& nocs_path, const std::string& mask_path) {
  ImageU8 nocs;
  nocs.width = map.width;
  nocs.height = map.height;
  nocs.channels = 3;
  nocs.data.assign(map.bins.size(), 0);
  for (size_t p = 0; p < map.mask.size(); ++p) {
    if (!map.mask[p]) continue;
    for (int c = 0; c < 3; ++c) nocs.data[p * 3 + c] = map.bins[p * 3 + c];
  }
  write_png(nocs_path, nocs);
  write_png(mask_path, mask_to_image(map.mask, map.width, map.height));
}

NocsMap load_nocs_map(const std::string& nocs_path, const std::string& mask_path) {
  const ImageU8 nocs = read_png8(nocs_path);
  const ImageU8 mask = read_png8(mask_path);
  if (nocs.channels != 3) throw std::runtime_error("NOCS image must be RGB: " + nocs_path);
  if (mask.channels != 1) throw std::runtime_error("mask image must be grayscale: " + mask_path);
  if (nocs.width != mask.width || nocs.height != mask.height) {
    throw std::runtime_error("NOCS/mask size mismatch: " + nocs_path);
  }
  NocsMap map = NocsMap::empty(nocs.width, nocs.height);
  for (size_t p = 0; p < map.mask.size(); ++p) {
    map.mask[p] = mask.data[p] >= 128 ? 1 : 0;  // 0.5 threshold for loaded masks
    if (!map.mask[p]) continue;
    for (int c = 0; c < 3; ++c) map.bins[p * 3 + c] = nocs.data[p * 3 + c];
  }
  return map;
}

}  // namespace nocspose
