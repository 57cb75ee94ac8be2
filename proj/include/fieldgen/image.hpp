#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace fieldgen {

// Planar float image, channels x height x width.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::size_t plane() const { return height * width; }
  bool same_extents(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// Mean over channels, as a single-channel image.
Image to_gray(const Image& img);

// Separable Gaussian blur of every channel, replicated borders, radius ceil(3 sigma).
Image gaussian_blur(const Image& img, double sigma);

struct Gradients {
  Image gx;
  Image gy;
};

// 3x3 Sobel derivatives of channel 0 with replicated borders.
Gradients sobel(const Image& img);
Image sobel_magnitude(const Image& img);

// Binary 8-bit PGM of channel 0, values clamped to [0,1].
void write_pgm(const Image& img, const std::filesystem::path& path);

}  // namespace fieldgen
