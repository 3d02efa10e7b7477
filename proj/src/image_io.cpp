#include "nocspose/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace nocspose {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void read_common(const std::string& path, int want_bit_depth, int& width, int& height, int& channels,
                 std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw std::runtime_error("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("failed to decode PNG: " + path);

  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);
  if (want_bit_depth == 8 && bit_depth == 16) png_set_strip_16(r.png);
  if (want_bit_depth == 16 && bit_depth != 16) {
    throw std::runtime_error("expected a 16-bit PNG: " + path);
  }
  if (want_bit_depth == 16) png_set_swap(r.png);
  png_read_update_info(r.png, r.info);

  width = static_cast<int>(png_get_image_width(r.png, r.info));
  height = static_cast<int>(png_get_image_height(r.png, r.info));
  channels = png_get_channels(r.png, r.info);
  const size_t row_bytes = png_get_rowbytes(r.png, r.info);
  bytes.resize(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + row_bytes * y;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_common(const std::string& path, int width, int height, int color_type, int bit_depth,
                  const std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write PNG: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw std::runtime_error("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("failed to encode PNG: " + path);

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (bit_depth == 16) png_set_swap(w.png);
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

}  // namespace

void write_png(const std::string& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("PNG writer supports 1 or 3 channels");
  if (image.data.size() != static_cast<size_t>(image.width) * image.height * image.channels) {
    throw std::invalid_argument("image buffer size mismatch");
  }
  std::vector<png_bytep> rows(image.height);
  const size_t row_bytes = static_cast<size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.data.data() + row_bytes * y);
  }
  write_common(path, image.width, image.height,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png16(const std::string& path, const ImageU16& image) {
  if (image.data.size() != static_cast<size_t>(image.width) * image.height) {
    throw std::invalid_argument("image buffer size mismatch");
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(reinterpret_cast<const png_byte*>(image.data.data() + static_cast<size_t>(y) * image.width));
  }
  write_common(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

ImageU8 read_png8(const std::string& path) {
  ImageU8 out;
  std::vector<uint8_t> bytes;
  read_common(path, 8, out.width, out.height, out.channels, bytes);
  if (out.channels != 1 && out.channels != 3) throw std::runtime_error("unsupported PNG channel count: " + path);
  out.data = std::move(bytes);
  return out;
}

ImageU16 read_png16(const std::string& path) {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> bytes;
  read_common(path, 16, width, height, channels, bytes);
  if (channels != 1) throw std::runtime_error("expected single-channel 16-bit PNG: " + path);
  ImageU16 out;
  out.width = width;
  out.height = height;
  out.data.resize(static_cast<size_t>(width) * height);
  std::memcpy(out.data.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace nocspose
