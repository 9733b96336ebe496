#include "eskin/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "eskin/error.hpp"

namespace eskin {

namespace {

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

// Piecewise-linear ramp through evenly spaced stops, t in [0, 1].
template <std::size_t N>
Rgb ramp(const std::array<Rgb, N>& stops, double t) {
  t = std::clamp(t, 0.0, 1.0) * (N - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), N - 2);
  return lerp(stops[i], stops[i + 1], t - static_cast<double>(i));
}

constexpr std::array<Rgb, 5> kSequential{{{0.05, 0.03, 0.20}, {0.35, 0.05, 0.45}, {0.80, 0.20, 0.30},
                                          {0.98, 0.60, 0.10}, {0.99, 0.98, 0.75}}};
constexpr std::array<Rgb, 3> kDiverging{{{0.15, 0.30, 0.75}, {0.97, 0.97, 0.97}, {0.75, 0.10, 0.12}}};

}  // namespace

Image render_heat_map(const TactileMap& map, ColorScale scale, int upscale) {
  const Lattice& l = map.lattice;
  if (map.size() != l.size()) throw InvalidArgument("map size does not match its lattice");
  if (upscale < 1) throw InvalidArgument("upscale factor must be at least 1");
  double m = 0.0;
  if (scale == ColorScale::kSymmetric) m = map.delta_sigma.cwiseAbs().maxCoeff();
  Image img;
  img.width = l.cols * upscale;
  img.height = l.rows * upscale;
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const int r = l.rows - 1 - y / upscale;
    for (int x = 0; x < img.width; ++x) {
      const double v = map.delta_sigma[r * l.cols + x / upscale];
      const Rgb c = scale == ColorScale::kUnit ? ramp(kSequential, v)
                                               : ramp(kDiverging, m > 0.0 ? 0.5 + 0.5 * v / m : 0.5);
      for (int k = 0; k < 3; ++k)
        img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + k] =
            static_cast<std::uint8_t>(std::lround(255.0 * c[k]));
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace eskin
