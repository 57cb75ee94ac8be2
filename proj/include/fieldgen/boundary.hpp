#pragma once

#include <cstddef>
#include <cstdint>

#include "fieldgen/geometry.hpp"
#include "fieldgen/image.hpp"

namespace fieldgen {

struct CannyParams {
  double sigma = 1.0;
  double lo = 0.1;  // fraction of the maximum gradient magnitude
  double hi = 0.3;
};

struct BoundarySample {
  Image sketch;       // 1 x H x W, values in {0, 1}
  Image edge;         // 1 x H x W, values in {0, 1}
  Image spatial_ref;  // 3 x H x W
  Image target;       // 3 x H x W, values in [0, 1]
  SourceGeometrySpec geometry;
  std::uint64_t seed = 0;
};

// 1 inside the source rectangle (x along width, y along height), 0 elsewhere.
Image rasterize_sketch(const SourceGeometrySpec& spec, std::size_t height, std::size_t width);

// Blur, Sobel, non-maximum suppression and hysteresis on channel 0.
// Returns a binary map. Magnitude ties across an edge go to the brighter side.
Image canny_edges(const Image& img, const CannyParams& params = {});

// Channels: x / (W-1), y / (H-1), distance from the centre normalized to 1 at the corners.
Image spatial_reference(std::size_t height, std::size_t width);

// [sketch x3; edge x3; spatial_ref x3]
Image assemble_condition_tensor(const BoundarySample& sample);

// Sketch, Canny edges of the sketch and the spatial reference; target left empty.
BoundarySample make_boundary_inputs(const SourceGeometrySpec& spec, std::size_t height, std::size_t width);

}  // namespace fieldgen
