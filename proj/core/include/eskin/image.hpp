#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eskin/recon.hpp"

namespace eskin {

enum class ColorScale {
  // Fixed [0, 1], used for probability maps.
  kUnit,
  // [-m, m] with m = max |value| of the map; diverging colours.
  kSymmetric,
};

struct Image {
  int width = 0;
  int height = 0;
  // Row-major RGB, top row first.
  std::vector<std::uint8_t> rgb;
};

// One pixel per lattice point (cols x rows) before upscaling. The flat y
// axis points up, so lattice row 0 is the bottom image row.
Image render_heat_map(const TactileMap& map, ColorScale scale, int upscale = 1);

// Binary PPM (P6).
void write_ppm(const std::string& path, const Image& img);

}  // namespace eskin
