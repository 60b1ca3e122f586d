#include "cadnerf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "cadnerf/errors.hpp"

namespace cadnerf {

std::size_t MaskRaster::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

BBox MaskRaster::bbox() const {
  BBox box;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(x, y)) continue;
      if (!box.valid) {
        box = {x, y, x, y, true};
      } else {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x);
        box.y1 = std::max(box.y1, y);
      }
    }
  }
  return box;
}

Eigen::Vector3d RgbImage::pixel(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {data[i], data[i + 1], data[i + 2]};
}

void RgbImage::set_pixel(int x, int y, const Eigen::Vector3d& rgb) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  data[i] = rgb.x();
  data[i + 1] = rgb.y();
  data[i + 2] = rgb.z();
}

MaskRaster dilate(const MaskRaster& mask, int radius) {
  if (radius <= 0) return mask;
  // separable max filter
  MaskRaster horizontal(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = 0;
      for (int dx = -radius; dx <= radius && !v; ++dx) {
        const int xx = x + dx;
        if (xx >= 0 && xx < mask.width) v = mask.at(xx, y);
      }
      horizontal.at(x, y) = v;
    }
  }
  MaskRaster out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = 0;
      for (int dy = -radius; dy <= radius && !v; ++dy) {
        const int yy = y + dy;
        if (yy >= 0 && yy < mask.height) v = horizontal.at(x, yy);
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

MaskRaster luminance_matte(const RgbImage& image, double threshold) {
  MaskRaster mask(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto c = image.pixel(x, y);
      const double lum = 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z();
      mask.at(x, y) = lum > threshold ? 1 : 0;
    }
  }
  return mask;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

// Reads any PNG into 8-bit rows with the requested channel count (1 or 3).
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels, int& width,
                                   int& height) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail(ErrorKind::Io, "libpng init failed");
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Format, "malformed PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (channels == 1 && (color & PNG_COLOR_MASK_COLOR)) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (channels == 3 && !(color & PNG_COLOR_MASK_COLOR)) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  buffer.resize(static_cast<std::size_t>(width) * height * channels);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return buffer;
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& buffer, int width,
               int height, int channels) {
  const auto tmp = path.string() + ".tmp";
  {
    auto file = open_file(tmp, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail(ErrorKind::Io, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      fail(ErrorKind::Io, "failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(buffer.data() + static_cast<std::size_t>(y) * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

MaskRaster read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buffer = read_png(path, 1, w, h);
  MaskRaster mask(w, h);
  for (std::size_t i = 0; i < buffer.size(); ++i) mask.pixels[i] = buffer[i] >= 128 ? 1 : 0;
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const MaskRaster& mask) {
  std::vector<std::uint8_t> buffer(mask.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = mask.pixels[i] ? 255 : 0;
  write_png(path, buffer, mask.width, mask.height, 1);
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buffer = read_png(path, 3, w, h);
  RgbImage image(w, h);
  for (std::size_t i = 0; i < buffer.size(); ++i) image.data[i] = buffer[i] / 255.0;
  return image;
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<std::uint8_t> buffer(image.data.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = quantize(image.data[i]);
  write_png(path, buffer, image.width, image.height, 3);
}

}  // namespace cadnerf
