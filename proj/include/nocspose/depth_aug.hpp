#pragma once

#include "nocspose/image_io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nocspose {

/// Depth image in model units with an explicit hole mask (1 = missing).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<uint8_t> hole;

  static DepthMap filled(int width, int height, double value = 0.0);

  size_t pixel(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  bool valid(int x, int y) const { return !hole[pixel(x, y)]; }
};

struct PerlinConfig {
  double cell_size = 16.0;  // pixels per lattice cell of the base octave
  int octaves = 4;
  double amplitude = 1.0;  // model units, per octave o scaled by 2^-o
  uint64_t seed = 0;
};

/// Replaces every hole with the value of its nearest valid pixel (Euclidean
/// pixel distance, ties broken by row-major scan order of the valid pixels).
DepthMap fill_holes(const DepthMap& d);
DepthMap fill_holes_serial(const DepthMap& d);

/// Subtracts the windowed mean over a (2T+1)^2 neighborhood clamped to the
/// image, so the output is exactly invariant to a global depth offset.
std::vector<double> depth_parameterize(const DepthMap& d, int radius = 5);
std::vector<double> depth_parameterize_serial(const DepthMap& d, int radius = 5);

/// Seeded lattice-gradient (Perlin) noise in [-1, 1], one octave.
double perlin_noise(double x, double y, uint64_t seed);

/// Adds summed-octave Perlin noise to background pixels (fg_mask = 0);
/// foreground is untouched.
DepthMap add_perlin_background(const DepthMap& d, const std::vector<uint8_t>& fg_mask, const PerlinConfig& cfg);

/// Adds N(0, sigma^2) to foreground pixels, clamped at 0 below.
DepthMap add_gaussian_foreground(const DepthMap& d, const std::vector<uint8_t>& fg_mask, double sigma,
                                 uint64_t seed);

/// Punches out up to max_count random rectangles (side in [min_side,
/// max_side] pixels) as holes.
DepthMap add_random_holes(const DepthMap& d, uint64_t seed, int max_count = 5, int min_side = 2,
                          int max_side = 16);

/// 16-bit PNG with count 0 = hole, plus a JSON sidecar "<path>.json" holding
/// {"units_per_count": scale}.
void write_depth_png(const std::string& path, const DepthMap& d, double units_per_count);
DepthMap read_depth_png(const std::string& path, double* units_per_count = nullptr);

}  // namespace nocspose
