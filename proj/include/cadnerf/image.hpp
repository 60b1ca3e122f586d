#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace cadnerf {

/// Inclusive pixel bounding box. Empty when `valid` is false.
struct BBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool valid = false;

  int width() const { return valid ? x1 - x0 + 1 : 0; }
  int height() const { return valid ? y1 - y0 + 1 : 0; }
};

/// Binary silhouette, row-major, one byte per pixel holding 0 or 1.
struct MaskRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  bool normalized = false;

  MaskRaster() = default;
  MaskRaster(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count() const;
  BBox bbox() const;
  bool operator==(const MaskRaster& other) const = default;
};

/// Linear RGB image with channels in [0,1], row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  Eigen::Vector3d pixel(int x, int y) const;
  void set_pixel(int x, int y, const Eigen::Vector3d& rgb);
};

/// Dilates by a square structuring element of the given radius.
MaskRaster dilate(const MaskRaster& mask, int radius);

/// Thresholded luminance matte: foreground where luminance > threshold.
MaskRaster luminance_matte(const RgbImage& image, double threshold = 0.02);

// PNG I/O. Masks are 8-bit single channel (0 / 255); images are 8-bit RGB.
MaskRaster read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const MaskRaster& mask);
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace cadnerf
