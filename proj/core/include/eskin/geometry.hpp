#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace eskin {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Flat rectangular sensing sheet with electrodes on its boundary.
//
// The flat domain is [0, width] x [0, height] (mm). Boundary arc length s
// runs counter-clockwise from the corner (0, 0): bottom edge, right edge,
// top edge, left edge. Electrode k is centred at electrode_arc[k].
struct SensorGeometry {
  double width = 150.0;
  double height = 100.0;
  // Conductive layer thickness (mm); scales sheet conductance.
  double thickness = 2.0;
  int electrode_count = 16;
  // Side length of the square electrode contact (mm).
  double electrode_contact = 4.0;
  // Distance of the conductive layer from the bending neutral surface (mm).
  // Positive values put the layer on the convex side, where bending
  // stretches it by a factor (1 + layer_offset * curvature). The default
  // stands for a skin laid on a compliant pad whose neutral surface sits
  // well below the hydrogel.
  double layer_offset = 8.0;
  std::vector<double> electrode_arc;

  double perimeter() const { return 2.0 * (width + height); }
  double electrode_spacing() const { return perimeter() / electrode_count; }
  Vec2 boundary_point(double s) const;
  Vec2 electrode_center(int k) const { return boundary_point(electrode_arc.at(k)); }
};

// Electrodes are placed at equal arc-length spacing with the offset that
// makes the layout symmetric under both mirror axes of the rectangle.
SensorGeometry make_geometry(double width = 150.0, double height = 100.0, int n_electrodes = 16);

enum class BendAxis {
  // The width direction wraps around a cylinder whose axis is parallel to y.
  kAlongWidth,
  // The height direction wraps; cylinder axis parallel to x.
  kAlongHeight,
};

// Cylindrical bending of the sheet. bend_angle is the total arc subtended by
// the bent extent; the midsurface lies on a cylinder of radius L / bend_angle.
// The default bends about the long (x) axis.
struct DeformationState {
  double bend_angle = 0.0;
  BendAxis axis = BendAxis::kAlongHeight;
  std::string label;
};

// Isometric wrap of a flat point onto the bent midsurface.
// Throws InvalidArgument for points outside the flat domain.
Vec3 deform_point(const Vec2& p, const SensorGeometry& g, const DeformationState& d);

// Same wrap for a parallel surface at normal distance `offset` from the
// midsurface. offset = 0 reproduces deform_point.
Vec3 deform_point_offset(const Vec2& p, const SensorGeometry& g, const DeformationState& d, double offset);

// Analytic height of the midsurface above the flat plane, as a function of
// the flat coordinate.
double bend_height(const Vec2& p, const SensorGeometry& g, const DeformationState& d);

struct Mesh {
  std::vector<Vec3> vertices;
  // Flat (undeformed) coordinates of every vertex.
  std::vector<Vec2> flat;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::vector<int>> electrode_nodes;
  std::vector<std::uint8_t> boundary_flags;
  double width = 0.0;
  double height = 0.0;
  // Conductive layer thickness (mm).
  double thickness = 2.0;
  std::uint64_t id = 0;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
};

constexpr int kMinMeshVertices = 500;

// Structured triangulation with alternating diagonals. Grid lines pass
// through every electrode edge and both centre lines, so electrode
// footprints are represented exactly and the mesh is mirror symmetric.
// Vertices are placed on the conductive layer surface.
Mesh make_mesh(const SensorGeometry& g, const DeformationState& d, int target_vertex_count);

// Recomputes the provenance hash from vertex and triangle data.
std::uint64_t mesh_hash(const Mesh& m);

double triangle_area(const Mesh& m, int t);
double total_area(const Mesh& m);
double max_edge_length(const Mesh& m);
// Smallest interior angle over all triangles, in degrees.
double min_triangle_angle(const Mesh& m);

// Regular lattice of reconstruction points over the flat domain.
struct Lattice {
  int rows = 27;
  int cols = 50;
  double width = 150.0;
  double height = 100.0;

  int size() const { return rows * cols; }
  double pitch_x() const { return width / cols; }
  double pitch_y() const { return height / rows; }
  Vec2 point(int r, int c) const { return {(c + 0.5) * pitch_x(), (r + 0.5) * pitch_y()}; }
  Vec2 point(int index) const { return point(index / cols, index % cols); }
  // Index of the lattice point nearest to a flat coordinate.
  int nearest(const Vec2& p) const;

  friend bool operator==(const Lattice&, const Lattice&) = default;
};

constexpr int kUnitRows = 9;
constexpr int kUnitCols = 14;
constexpr int kUnitCount = kUnitRows * kUnitCols;

struct ReconGrid {
  int unit_rows = kUnitRows;
  int unit_cols = kUnitCols;
  Lattice lattice;
  std::vector<Vec3> points;
  std::vector<Vec2> flat_points;
  std::vector<int> unit_of_point;
  std::uint64_t id = 0;

  int point_count() const { return static_cast<int>(points.size()); }
  int unit_count() const { return unit_rows * unit_cols; }
  std::vector<int> points_of_unit(int unit) const;
};

ReconGrid make_recon_grid(const SensorGeometry& g, const DeformationState& d);

// Mesh vertices with isotropic Gaussian noise, a dropped fraction and a
// seeded shuffle.
std::vector<Vec3> emit_point_cloud(const Mesh& m, double noise_sigma, double dropout_fraction,
                                   std::uint64_t seed);

// Line-oriented text format: "x y z" per vertex, a "#faces" sentinel line,
// then "i j k" per triangle.
void write_mesh_text(const Mesh& m, const std::string& path);
// Reads the text format. Only vertices and triangles are restored.
Mesh read_mesh_text(const std::string& path);
void write_mesh_obj(const Mesh& m, const std::string& path);

// Whitespace-delimited "x y z" point list. Lines starting with '#' end the
// vertex block, so mesh text files can be read as clouds too.
std::vector<Vec3> read_xyz(const std::string& path);
void write_xyz(const std::vector<Vec3>& points, const std::string& path);

}  // namespace eskin
