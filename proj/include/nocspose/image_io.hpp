#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nocspose {

/// Interleaved row-major 8-bit image; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> data;

  uint8_t& at(int x, int y, int c = 0) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  uint8_t at(int x, int y, int c = 0) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

/// Row-major 16-bit single-channel image.
struct ImageU16 {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> data;

  uint16_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  uint16_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

void write_png(const std::string& path, const ImageU8& image);
void write_png16(const std::string& path, const ImageU16& image);

ImageU8 read_png8(const std::string& path);
ImageU16 read_png16(const std::string& path);

}  // namespace nocspose
