#include "fieldgen/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fieldgen/errors.hpp"

namespace fieldgen {

Image rasterize_sketch(const SourceGeometrySpec& spec, std::size_t height, std::size_t width) {
  if (spec.width == 0 || spec.height == 0) throw GeometryError("sketch rectangle must be at least 1x1");
  if (spec.x + spec.width > width || spec.y + spec.height > height) {
    throw GeometryError("sketch rectangle lies outside the " + std::to_string(height) + "x" + std::to_string(width) +
                        " image");
  }
  Image img(1, height, width);
  for (std::size_t y = spec.y; y < spec.y + spec.height; ++y)
    for (std::size_t x = spec.x; x < spec.x + spec.width; ++x) img.at(0, y, x) = 1.0f;
  return img;
}

Image canny_edges(const Image& img, const CannyParams& params) {
  if (!(params.lo < params.hi)) throw ParameterError("canny thresholds need lo < hi");
  const std::size_t H = img.height, W = img.width;
  Image single(1, H, W);
  std::copy(img.pixels.begin(), img.pixels.begin() + static_cast<long>(img.plane()), single.pixels.begin());
  const Image blurred = gaussian_blur(single, params.sigma);
  const Gradients g = sobel(blurred);
  std::vector<double> mag(H * W);
  double peak = 0.0;
  for (std::size_t p = 0; p < H * W; ++p) {
    mag[p] = std::hypot(g.gx.pixels[p], g.gy.pixels[p]);
    peak = std::max(peak, mag[p]);
  }
  Image out(1, H, W);
  if (peak <= 1e-12) return out;

  const double tie = 1e-6 * peak;
  auto keeps_against = [&](std::size_t p, long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) return true;
    const std::size_t q = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
    if (mag[q] > mag[p] + tie) return false;
    if (std::abs(mag[q] - mag[p]) <= tie) {
      const float bp = blurred.pixels[p], bq = blurred.pixels[q];
      if (bq > bp) return false;
      if (bq == bp) return q < p;
    }
    return true;
  };

  // 0 weak, 1 strong, -1 none
  std::vector<int> cls(H * W, -1);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t p = y * W + x;
      if (mag[p] < params.lo * peak) continue;
      double angle = std::atan2(g.gy.pixels[p], g.gx.pixels[p]) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      long dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) dx = 1;
      else if (angle < 67.5) dy = dx = 1;
      else if (angle < 112.5) dy = 1;
      else { dy = 1; dx = -1; }
      const long yl = static_cast<long>(y), xl = static_cast<long>(x);
      if (!keeps_against(p, yl + dy, xl + dx) || !keeps_against(p, yl - dy, xl - dx)) continue;
      cls[p] = mag[p] >= params.hi * peak ? 1 : 0;
    }

  std::vector<std::size_t> stack;
  for (std::size_t p = 0; p < H * W; ++p)
    if (cls[p] == 1) stack.push_back(p);
  for (std::size_t p : stack) out.pixels[p] = 1.0f;
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    const long y = static_cast<long>(p / W), x = static_cast<long>(p % W);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long ny = y + dy, nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= static_cast<long>(H) || nx >= static_cast<long>(W)) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
        if (cls[q] == 0 && out.pixels[q] == 0.0f) {
          out.pixels[q] = 1.0f;
          stack.push_back(q);
        }
      }
  }
  return out;
}

Image spatial_reference(std::size_t height, std::size_t width) {
  if (height < 2 || width < 2) throw DimensionError("spatial reference needs at least 2x2");
  Image ref(3, height, width);
  const double cy = 0.5 * static_cast<double>(height - 1), cx = 0.5 * static_cast<double>(width - 1);
  const double corner = std::hypot(cx, cy);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      ref.at(0, y, x) = static_cast<float>(static_cast<double>(x) / static_cast<double>(width - 1));
      ref.at(1, y, x) = static_cast<float>(static_cast<double>(y) / static_cast<double>(height - 1));
      ref.at(2, y, x) = static_cast<float>(std::hypot(x - cx, y - cy) / corner);
    }
  return ref;
}

Image assemble_condition_tensor(const BoundarySample& s) {
  const std::size_t H = s.sketch.height, W = s.sketch.width;
  auto check = [&](const Image& img, std::size_t channels, const char* name) {
    if (img.channels != channels || img.height != H || img.width != W) {
      throw DimensionError(std::string(name) + " extents do not match the sketch");
    }
  };
  check(s.sketch, 1, "sketch");
  check(s.edge, 1, "edge");
  check(s.spatial_ref, 3, "spatial reference");
  Image cond(9, H, W);
  const std::size_t plane = H * W;
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy(s.sketch.pixels.begin(), s.sketch.pixels.end(), cond.pixels.begin() + static_cast<long>(c * plane));
    std::copy(s.edge.pixels.begin(), s.edge.pixels.end(), cond.pixels.begin() + static_cast<long>((3 + c) * plane));
  }
  std::copy(s.spatial_ref.pixels.begin(), s.spatial_ref.pixels.end(),
            cond.pixels.begin() + static_cast<long>(6 * plane));
  return cond;
}

BoundarySample make_boundary_inputs(const SourceGeometrySpec& spec, std::size_t height, std::size_t width) {
  BoundarySample s;
  s.geometry = spec;
  s.sketch = rasterize_sketch(spec, height, width);
  s.edge = canny_edges(s.sketch);
  s.spatial_ref = spatial_reference(height, width);
  return s;
}

}  // namespace fieldgen
