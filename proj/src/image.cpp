#include "fieldgen/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fieldgen/errors.hpp"

namespace fieldgen {

Image to_gray(const Image& img) {
  Image out(1, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t p = 0; p < img.plane(); ++p) out.pixels[p] += img.pixels[c * img.plane() + p];
  const float inv = 1.0f / static_cast<float>(std::max<std::size_t>(img.channels, 1));
  for (auto& v : out.pixels) v *= inv;
  return out;
}

void write_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (std::size_t p = 0; p < img.plane(); ++p) {
    const float v = std::clamp(img.pixels[p], 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

namespace {

std::size_t clamp_index(long v, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("blur sigma must be positive");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;

  Image tmp(img.channels, img.height, img.width), out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (long d = -radius; d <= radius; ++d)
          acc += k[d + radius] * img.at(c, y, clamp_index(static_cast<long>(x) + d, img.width));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (long d = -radius; d <= radius; ++d)
          acc += k[d + radius] * tmp.at(c, clamp_index(static_cast<long>(y) + d, img.height), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

Gradients sobel(const Image& img) {
  Gradients g{Image(1, img.height, img.width), Image(1, img.height, img.width)};
  auto px = [&](long y, long x) { return static_cast<double>(img.at(0, clamp_index(y, img.height), clamp_index(x, img.width))); };
  for (std::size_t yy = 0; yy < img.height; ++yy)
    for (std::size_t xx = 0; xx < img.width; ++xx) {
      const long y = static_cast<long>(yy), x = static_cast<long>(xx);
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      g.gx.at(0, yy, xx) = static_cast<float>(gx);
      g.gy.at(0, yy, xx) = static_cast<float>(gy);
    }
  return g;
}

Image sobel_magnitude(const Image& img) {
  Gradients g = sobel(img);
  Image out(1, img.height, img.width);
  for (std::size_t p = 0; p < out.plane(); ++p) out.pixels[p] = std::hypot(g.gx.pixels[p], g.gy.pixels[p]);
  return out;
}

}  // namespace fieldgen
