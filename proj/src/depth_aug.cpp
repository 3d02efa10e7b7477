#include "nocspose/depth_aug.hpp"

#include "nocspose/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace nocspose {

DepthMap DepthMap::filled(int width, int height, double value) {
  DepthMap d;
  d.width = width;
  d.height = height;
  d.values.assign(static_cast<size_t>(width) * height, value);
  d.hole.assign(static_cast<size_t>(width) * height, 0);
  return d;
}

namespace {

/// Nearest valid pixel by expanding square rings; exact Euclidean metric with
/// ties resolved toward the smaller row-major index.
size_t nearest_valid(const DepthMap& d, int x, int y) {
  const int max_r = std::max(d.width, d.height);
  long long best_d2 = std::numeric_limits<long long>::max();
  size_t best_p = 0;
  auto consider = [&](int xx, int yy) {
    if (xx < 0 || xx >= d.width || yy < 0 || yy >= d.height || !d.valid(xx, yy)) return;
    const long long dx = xx - x, dy = yy - y;
    const long long d2 = dx * dx + dy * dy;
    const size_t p = d.pixel(xx, yy);
    if (d2 < best_d2 || (d2 == best_d2 && p < best_p)) {
      best_d2 = d2;
      best_p = p;
    }
  };
  for (int r = 0; r <= max_r; ++r) {
    // The closest pixel on ring r is at distance r, so once a candidate beats
    // the whole ring the search is complete.
    if (static_cast<long long>(r) * r > best_d2) break;
    if (r == 0) {
      consider(x, y);
      continue;
    }
    for (int xx = x - r; xx <= x + r; ++xx) {
      consider(xx, y - r);
      consider(xx, y + r);
    }
    for (int yy = y - r + 1; yy <= y + r - 1; ++yy) {
      consider(x - r, yy);
      consider(x + r, yy);
    }
  }
  if (best_d2 == std::numeric_limits<long long>::max()) throw std::runtime_error("depth map has no valid pixels");
  return best_p;
}

template <bool Parallel>
DepthMap fill_holes_impl(const DepthMap& d) {
  bool any_valid = false;
  for (uint8_t h : d.hole) {
    if (!h) {
      any_valid = true;
      break;
    }
  }
  if (!any_valid) throw std::runtime_error("depth map has no valid pixels");

  DepthMap out = d;
#pragma omp parallel for schedule(dynamic, 8) if (Parallel)
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const size_t p = d.pixel(x, y);
      if (!d.hole[p]) continue;
      out.values[p] = d.values[nearest_valid(d, x, y)];
      out.hole[p] = 0;
    }
  }
  return out;
}

template <bool Parallel>
std::vector<double> depth_parameterize_impl(const DepthMap& d, int radius) {
  for (uint8_t h : d.hole) {
    if (h) throw std::invalid_argument("depth_parameterize requires a hole-free map");
  }
  std::vector<double> out(d.values.size(), 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(d.width - 1, x + radius);
      const int y0 = std::max(0, y - radius), y1 = std::min(d.height - 1, y + radius);
      double sum = 0.0;
      for (int yy = y0; yy <= y1; ++yy) {
        for (int xx = x0; xx <= x1; ++xx) sum += d.values[d.pixel(xx, yy)];
      }
      const int count = (x1 - x0 + 1) * (y1 - y0 + 1);
      out[d.pixel(x, y)] = d.values[d.pixel(x, y)] - sum / count;
    }
  }
  return out;
}

}  // namespace

DepthMap fill_holes(const DepthMap& d) { return fill_holes_impl<true>(d); }
DepthMap fill_holes_serial(const DepthMap& d) { return fill_holes_impl<false>(d); }

std::vector<double> depth_parameterize(const DepthMap& d, int radius) {
  return depth_parameterize_impl<true>(d, radius);
}
std::vector<double> depth_parameterize_serial(const DepthMap& d, int radius) {
  return depth_parameterize_impl<false>(d, radius);
}

namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

/// Unit gradient at a lattice point, drawn from 16 directions by hashing the
/// integer coordinates with the seed.
void lattice_gradient(int64_t ix, int64_t iy, uint64_t seed, double& gx, double& gy) {
  const uint64_t h = splitmix64(splitmix64(seed ^ static_cast<uint64_t>(ix) * 0x8da6b343ULL) ^
                                static_cast<uint64_t>(iy) * 0xd8163841ULL);
  const double angle = static_cast<double>(h >> 40) * (2.0 * M_PI / 16777216.0);
  gx = std::cos(angle);
  gy = std::sin(angle);
}

}  // namespace

double perlin_noise(double x, double y, uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx);
  const int64_t iy = static_cast<int64_t>(fy);
  const double tx = x - fx;
  const double ty = y - fy;

  double dots[2][2];
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      double gx, gy;
      lattice_gradient(ix + dx, iy + dy, seed, gx, gy);
      dots[dy][dx] = gx * (tx - dx) + gy * (ty - dy);
    }
  }
  const double u = fade(tx);
  const double v = fade(ty);
  const double nx0 = dots[0][0] + u * (dots[0][1] - dots[0][0]);
  const double nx1 = dots[1][0] + u * (dots[1][1] - dots[1][0]);
  // sqrt(2) normalization bounds one octave by |n| <= 1
  return (nx0 + v * (nx1 - nx0)) * 1.41421356237309515;
}

DepthMap add_perlin_background(const DepthMap& d, const std::vector<uint8_t>& fg_mask, const PerlinConfig& cfg) {
  if (fg_mask.size() != d.values.size()) throw std::invalid_argument("mask size mismatch");
  if (cfg.cell_size < 2.0) throw std::invalid_argument("perlin cell size must be >= 2");
  if (cfg.octaves < 1) throw std::invalid_argument("perlin octaves must be >= 1");
  DepthMap out = d;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const size_t p = d.pixel(x, y);
      if (fg_mask[p]) continue;
      double value = 0.0;
      double freq = 1.0 / cfg.cell_size;
      double amp = cfg.amplitude;
      for (int o = 0; o < cfg.octaves; ++o) {
        value += amp * perlin_noise(x * freq, y * freq, derive_seed(cfg.seed, o));
        freq *= 2.0;
        amp *= 0.5;
      }
      out.values[p] = std::max(0.0, out.values[p] + value);
    }
  }
  return out;
}

DepthMap add_gaussian_foreground(const DepthMap& d, const std::vector<uint8_t>& fg_mask, double sigma,
                                 uint64_t seed) {
  if (fg_mask.size() != d.values.size()) throw std::invalid_argument("mask size mismatch");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  DepthMap out = d;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (size_t p = 0; p < d.values.size(); ++p) {
    if (!fg_mask[p]) continue;
    out.values[p] = std::max(0.0, out.values[p] + rng.normal(0.0, sigma));
  }
  return out;
}

DepthMap add_random_holes(const DepthMap& d, uint64_t seed, int max_count, int min_side, int max_side) {
  DepthMap out = d;
  Rng rng(seed);
  const int count = static_cast<int>(rng.uniform_index(max_count + 1));
  for (int i = 0; i < count; ++i) {
    const int w = min_side + static_cast<int>(rng.uniform_index(max_side - min_side + 1));
    const int h = min_side + static_cast<int>(rng.uniform_index(max_side - min_side + 1));
    const int x0 = static_cast<int>(rng.uniform_index(std::max(1, d.width - w)));
    const int y0 = static_cast<int>(rng.uniform_index(std::max(1, d.height - h)));
    for (int y = y0; y < std::min(d.height, y0 + h); ++y) {
      for (int x = x0; x < std::min(d.width, x0 + w); ++x) out.hole[d.pixel(x, y)] = 1;
    }
  }
  return out;
}

void write_depth_png(const std::string& path, const DepthMap& d, double units_per_count) {
  ImageU16 img;
  img.width = d.width;
  img.height = d.height;
  img.data.assign(d.values.size(), 0);
  for (size_t p = 0; p < d.values.size(); ++p) {
    if (d.hole[p]) continue;
    const long long count = std::llround(d.values[p] / units_per_count);
    if (count > 65535) throw std::runtime_error("depth overflows 16-bit range at this scale");
    img.data[p] = static_cast<uint16_t>(std::max(0LL, count));
  }
  write_png16(path, img);
  nlohmann::json sidecar{{"units_per_count", units_per_count}};
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write depth sidecar for " + path);
  out << sidecar.dump(2) << '\n';
}

DepthMap read_depth_png(const std::string& path, double* units_per_count) {
  const ImageU16 img = read_png16(path);
  double scale = 1.0;
  {
    std::ifstream in(path + ".json");
    if (in) {
      nlohmann::json sidecar;
      in >> sidecar;
      scale = sidecar.at("units_per_count").get<double>();
    }
  }
  DepthMap d;
  d.width = img.width;
  d.height = img.height;
  d.values.resize(img.data.size());
  d.hole.resize(img.data.size());
  for (size_t p = 0; p < img.data.size(); ++p) {
    d.hole[p] = img.data[p] == 0 ? 1 : 0;
    d.values[p] = img.data[p] * scale;
  }
  if (units_per_count) *units_per_count = scale;
  return d;
}

}  // namespace nocspose
