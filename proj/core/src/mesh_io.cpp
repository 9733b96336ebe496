#include <fstream>
#include <iomanip>
#include <sstream>

#include "eskin/error.hpp"
#include "eskin/geometry.hpp"

namespace eskin {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_mesh_text(const Mesh& m, const std::string& path) {
  auto out = open_out(path);
  for (const auto& v : m.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  out << "#faces\n";
  for (const auto& t : m.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

Mesh read_mesh_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open mesh file " + path);
  Mesh m;
  std::string line;
  bool faces = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("#faces", 0) == 0) {
      faces = true;
      continue;
    }
    std::istringstream ls(line);
    if (faces) {
      std::array<int, 3> t{};
      if (!(ls >> t[0] >> t[1] >> t[2])) throw IoError(path + ":" + std::to_string(lineno) + ": expected 'i j k'");
      m.triangles.push_back(t);
    } else {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x y z'");
      m.vertices.push_back(v);
    }
  }
  for (const auto& t : m.triangles)
    for (int k : t)
      if (k < 0 || k >= m.vertex_count()) throw IoError(path + ": triangle index out of range");
  m.id = mesh_hash(m);
  return m;
}

void write_mesh_obj(const Mesh& m, const std::string& path) {
  auto out = open_out(path);
  out << "# eskin mesh, " << m.vertex_count() << " vertices, " << m.triangle_count() << " triangles\n";
  for (const auto& v : m.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : m.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

std::vector<Vec3> read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open point file " + path);
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') break;
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x y z'");
    pts.push_back(v);
  }
  return pts;
}

void write_xyz(const std::vector<Vec3>& points, const std::string& path) {
  auto out = open_out(path);
  for (const auto& v : points) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
}

}  // namespace eskin
