#pragma once

#include <cstddef>

namespace fieldgen {

// Rectangular wave source in grid cells; (x, y) is the top-left cell,
// x along the width axis and y along the height axis.
struct SourceGeometrySpec {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 1;
  std::size_t height = 1;
  double amplitude = 1.0;
  double wavelength = 20.0;
};

}  // namespace fieldgen
