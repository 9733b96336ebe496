#include "eskin/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "eskin/binary_io.hpp"
#include "eskin/error.hpp"

namespace eskin {

namespace {

constexpr double kTol = 1e-9;

enum class Side { kBottom, kRight, kTop, kLeft };

Side side_of(const SensorGeometry& g, double s) {
  if (s < g.width) return Side::kBottom;
  if (s < g.width + g.height) return Side::kRight;
  if (s < 2.0 * g.width + g.height) return Side::kTop;
  return Side::kLeft;
}

double min_corner_distance(const SensorGeometry& g, const std::vector<double>& arcs) {
  const double corners[] = {0.0, g.width, g.width + g.height, 2.0 * g.width + g.height, g.perimeter()};
  double best = g.perimeter();
  for (double s : arcs)
    for (double c : corners) best = std::min(best, std::abs(s - c));
  return best;
}

// sin(x)/x and (1 - cos x)/x, stable near zero.
double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }
double versinc(double x) {
  if (std::abs(x) < 1e-8) return x / 2.0;
  const double h = std::sin(0.5 * x);
  return 2.0 * h * h / x;
}

std::vector<double> subdivide(const std::vector<double>& breaks, double h) {
  std::vector<double> nodes{breaks.front()};
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i];
    const double b = breaks[i + 1];
    const int k = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    for (int j = 1; j < k; ++j) nodes.push_back(a + (b - a) * j / k);
    nodes.push_back(b);
  }
  return nodes;
}

std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > kTol) out.push_back(x);
  return out;
}

struct Breaks {
  std::vector<double> x;
  std::vector<double> y;
};

Breaks mesh_breaks(const SensorGeometry& g) {
  std::vector<double> bx{0.0, g.width, 0.5 * g.width};
  std::vector<double> by{0.0, g.height, 0.5 * g.height};
  const double half = 0.5 * g.electrode_contact;
  for (int k = 0; k < g.electrode_count; ++k) {
    const Vec2 c = g.electrode_center(k);
    switch (side_of(g, g.electrode_arc[k])) {
      case Side::kBottom:
      case Side::kTop:
        bx.push_back(c.x() - half);
        bx.push_back(c.x() + half);
        break;
      case Side::kRight:
      case Side::kLeft:
        by.push_back(c.y() - half);
        by.push_back(c.y() + half);
        break;
    }
  }
  return {unique_sorted(bx), unique_sorted(by)};
}

long long node_count(const Breaks& b, double h) {
  return static_cast<long long>(subdivide(b.x, h).size()) * static_cast<long long>(subdivide(b.y, h).size());
}

void check_inside(const Vec2& p, const SensorGeometry& g) {
  const double tol = kTol * std::max(g.width, g.height);
  if (!(p.x() >= -tol && p.x() <= g.width + tol && p.y() >= -tol && p.y() <= g.height + tol)) {
    std::ostringstream os;
    os << "point (" << p.x() << ", " << p.y() << ") lies outside the " << g.width << " x " << g.height
       << " domain";
    throw InvalidArgument(os.str());
  }
}

}  // namespace

Vec2 SensorGeometry::boundary_point(double s) const {
  const double p = perimeter();
  s = std::fmod(s, p);
  if (s < 0) s += p;
  if (s < width) return {s, 0.0};
  s -= width;
  if (s < height) return {width, s};
  s -= height;
  if (s < width) return {width - s, height};
  s -= width;
  return {0.0, height - s};
}

SensorGeometry make_geometry(double width, double height, int n_electrodes) {
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("sensor dimensions must be positive");
  if (n_electrodes < 8) throw InvalidArgument("electrode count must be at least 8, got " + std::to_string(n_electrodes));
  if (n_electrodes % 2 != 0) throw InvalidArgument("electrode count must be even, got " + std::to_string(n_electrodes));

  SensorGeometry g;
  g.width = width;
  g.height = height;
  g.electrode_count = n_electrodes;

  const double spacing = g.electrode_spacing();
  if (spacing <= g.electrode_contact) throw InvalidArgument("electrode footprints would overlap");

  // With an even count, an offset o with 2o = width (mod spacing) is
  // symmetric under both mirrors; two such offsets exist per period.
  const double o1 = 0.5 * std::fmod(width, spacing);
  double best_offset = o1;
  double best_clearance = -1.0;
  for (double o : {o1, o1 + 0.5 * spacing}) {
    std::vector<double> arcs;
    for (int k = 0; k < n_electrodes; ++k) arcs.push_back(o + k * spacing);
    const double clearance = min_corner_distance(g, arcs);
    if (clearance > best_clearance + kTol) {
      best_clearance = clearance;
      best_offset = o;
    }
  }
  if (best_clearance < 0.5 * g.electrode_contact)
    throw InvalidArgument("electrode footprints cannot avoid the sheet corners");
  for (int k = 0; k < n_electrodes; ++k) g.electrode_arc.push_back(best_offset + k * spacing);
  return g;
}

Vec3 deform_point_offset(const Vec2& p, const SensorGeometry& g, const DeformationState& d, double offset) {
  check_inside(p, g);
  const double theta = d.bend_angle;
  if (!(theta >= 0.0 && theta < 2.0 * std::numbers::pi))
    throw InvalidArgument("bend angle must lie in [0, 2*pi)");
  if (theta == 0.0) return {p.x(), p.y(), 0.0};

  const bool along_width = d.axis == BendAxis::kAlongWidth;
  const double length = along_width ? g.width : g.height;
  const double u = (along_width ? p.x() : p.y()) - 0.5 * length;
  const double phi = u * theta / length;
  // Midsurface radius R = length / theta; the parallel layer sits at R + offset.
  const double along = 0.5 * length + u * sinc(phi) + offset * std::sin(phi);
  const double s = std::sin(0.5 * phi);
  const double z = u * versinc(phi) + offset * 2.0 * s * s;
  return along_width ? Vec3{along, p.y(), z} : Vec3{p.x(), along, z};
}

Vec3 deform_point(const Vec2& p, const SensorGeometry& g, const DeformationState& d) {
  return deform_point_offset(p, g, d, 0.0);
}

double bend_height(const Vec2& p, const SensorGeometry& g, const DeformationState& d) {
  return deform_point(p, g, d).z();
}

Mesh make_mesh(const SensorGeometry& g, const DeformationState& d, int target_vertex_count) {
  if (target_vertex_count < kMinMeshVertices)
    throw InvalidArgument("target vertex count " + std::to_string(target_vertex_count) + " is below the minimum of " +
                          std::to_string(kMinMeshVertices));
  if (static_cast<int>(g.electrode_arc.size()) != g.electrode_count)
    throw InvalidArgument("geometry has inconsistent electrode data");

  const Breaks breaks = mesh_breaks(g);

  // node_count is non-increasing in h; bisect for the target.
  double lo = 1e-3;
  double hi = std::max(g.width, g.height);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (node_count(breaks, mid) >= target_vertex_count)
      lo = mid;
    else
      hi = mid;
  }
  const long long n_lo = node_count(breaks, lo);
  const long long n_hi = node_count(breaks, hi);
  const double h = std::abs(n_lo - target_vertex_count) <= std::abs(n_hi - target_vertex_count) ? lo : hi;

  const std::vector<double> xs = subdivide(breaks.x, h);
  const std::vector<double> ys = subdivide(breaks.y, h);
  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());
  const long long count = static_cast<long long>(nx) * ny;
  if (std::abs(count - target_vertex_count) > 0.1 * target_vertex_count) {
    std::ostringstream os;
    os << "meshing failed: closest structured grid has " << count << " vertices (" << nx << " x " << ny
       << ") for target " << target_vertex_count;
    throw Error(os.str());
  }

  Mesh m;
  m.width = g.width;
  m.height = g.height;
  m.thickness = g.thickness;
  m.vertices.reserve(count);
  m.flat.reserve(count);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 p{xs[i], ys[j]};
      m.flat.push_back(p);
      m.vertices.push_back(deform_point_offset(p, g, d, g.layer_offset));
      m.boundary_flags.push_back(i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
    }
  }

  const auto vid = [nx](int i, int j) { return j * nx + i; };
  m.triangles.reserve(2 * (nx - 1) * (ny - 1));
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        m.triangles.push_back({v00, v10, v11});
        m.triangles.push_back({v00, v11, v01});
      } else {
        m.triangles.push_back({v00, v10, v01});
        m.triangles.push_back({v10, v11, v01});
      }
    }
  }

  const double half = 0.5 * g.electrode_contact + kTol;
  m.electrode_nodes.resize(g.electrode_count);
  for (int k = 0; k < g.electrode_count; ++k) {
    const Vec2 c = g.electrode_center(k);
    auto& nodes = m.electrode_nodes[k];
    switch (side_of(g, g.electrode_arc[k])) {
      case Side::kBottom:
        for (int i = 0; i < nx; ++i)
          if (std::abs(xs[i] - c.x()) <= half) nodes.push_back(vid(i, 0));
        break;
      case Side::kRight:
        for (int j = 0; j < ny; ++j)
          if (std::abs(ys[j] - c.y()) <= half) nodes.push_back(vid(nx - 1, j));
        break;
      case Side::kTop:
        for (int i = nx - 1; i >= 0; --i)
          if (std::abs(xs[i] - c.x()) <= half) nodes.push_back(vid(i, ny - 1));
        break;
      case Side::kLeft:
        for (int j = ny - 1; j >= 0; --j)
          if (std::abs(ys[j] - c.y()) <= half) nodes.push_back(vid(0, j));
        break;
    }
    if (nodes.empty()) throw Error("electrode " + std::to_string(k) + " has no mesh nodes");
  }

  for (int t = 0; t < m.triangle_count(); ++t)
    if (!(triangle_area(m, t) > 0.0)) throw Error("degenerate triangle " + std::to_string(t) + " in generated mesh");

  m.id = mesh_hash(m);
  return m;
}

std::uint64_t mesh_hash(const Mesh& m) {
  Fnv1a h;
  h.add(std::string_view("mesh"));
  for (const auto& v : m.vertices) h.add(std::span<const double>(v.data(), 3));
  for (const auto& t : m.triangles) h.add(std::span<const int>(t));
  for (const auto& e : m.electrode_nodes) {
    h.add(e.size());
    h.add(std::span<const int>(e));
  }
  return h.digest();
}

double triangle_area(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  const Vec3& a = m.vertices[tri[0]];
  return 0.5 * (m.vertices[tri[1]] - a).cross(m.vertices[tri[2]] - a).norm();
}

double total_area(const Mesh& m) {
  double s = 0.0;
  for (int t = 0; t < m.triangle_count(); ++t) s += triangle_area(m, t);
  return s;
}

double max_edge_length(const Mesh& m) {
  double best = 0.0;
  for (const auto& tri : m.triangles)
    for (int e = 0; e < 3; ++e) best = std::max(best, (m.vertices[tri[e]] - m.vertices[tri[(e + 1) % 3]]).norm());
  return best;
}

double min_triangle_angle(const Mesh& m) {
  double best = 180.0;
  for (const auto& tri : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      const Vec3 a = m.vertices[tri[(e + 1) % 3]] - m.vertices[tri[e]];
      const Vec3 b = m.vertices[tri[(e + 2) % 3]] - m.vertices[tri[e]];
      const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
      best = std::min(best, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  return best;
}

int Lattice::nearest(const Vec2& p) const {
  const int c = std::clamp(static_cast<int>(std::floor(p.x() / pitch_x())), 0, cols - 1);
  const int r = std::clamp(static_cast<int>(std::floor(p.y() / pitch_y())), 0, rows - 1);
  return r * cols + c;
}

std::vector<int> ReconGrid::points_of_unit(int unit) const {
  std::vector<int> out;
  for (int q = 0; q < point_count(); ++q)
    if (unit_of_point[q] == unit) out.push_back(q);
  return out;
}

ReconGrid make_recon_grid(const SensorGeometry& g, const DeformationState& d) {
  if (!(g.width > 0.0) || !(g.height > 0.0)) throw InvalidArgument("sensor dimensions must be positive");
  ReconGrid grid;
  grid.lattice = Lattice{27, 50, g.width, g.height};
  const Lattice& lat = grid.lattice;
  const double unit_w = g.width / grid.unit_cols;
  const double unit_h = g.height / grid.unit_rows;
  grid.points.reserve(lat.size());
  for (int q = 0; q < lat.size(); ++q) {
    const Vec2 p = lat.point(q);
    grid.flat_points.push_back(p);
    grid.points.push_back(deform_point_offset(p, g, d, g.layer_offset));
    const int uc = std::min(grid.unit_cols - 1, static_cast<int>(std::floor(p.x() / unit_w)));
    const int ur = std::min(grid.unit_rows - 1, static_cast<int>(std::floor(p.y() / unit_h)));
    grid.unit_of_point.push_back(ur * grid.unit_cols + uc);
  }
  Fnv1a h;
  h.add(std::string_view("grid"));
  h.add(lat.rows);
  h.add(lat.cols);
  for (const auto& v : grid.points) h.add(std::span<const double>(v.data(), 3));
  h.add(std::span<const int>(grid.unit_of_point));
  grid.id = h.digest();
  return grid;
}

std::vector<Vec3> emit_point_cloud(const Mesh& m, double noise_sigma, double dropout_fraction, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0))
    throw InvalidArgument("dropout fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts = m.vertices;
  std::shuffle(pts.begin(), pts.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround((1.0 - dropout_fraction) * pts.size()));
  pts.resize(keep);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& p : pts)
      for (int k = 0; k < 3; ++k) p[k] += noise(rng);
  }
  return pts;
}

}  // namespace eskin
