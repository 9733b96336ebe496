#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "eskin/binary_io.hpp"
#include "eskin/error.hpp"
#include "eskin/forward.hpp"

namespace eskin {

namespace {
constexpr std::string_view kJacobianMagic = "ESKJAC01";
}

void write_frames_csv(const std::string& path, const std::vector<MeasurementFrame>& frames,
                      const SensingProtocol& p) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (int k = 0; k < p.independent_count(); ++k) out << (k ? "," : "") << p.label(k);
  out << '\n' << std::setprecision(17);
  for (const auto& f : frames) {
    if (f.voltages.size() != p.independent_count()) throw InvalidArgument("frame length does not match protocol");
    for (Eigen::Index k = 0; k < f.voltages.size(); ++k) out << (k ? "," : "") << f.voltages[k];
    out << '\n';
  }
}

std::vector<MeasurementFrame> read_frames_csv(const std::string& path, const SensingProtocol& p, FrameKind kind) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open frame file " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty frame file");
  {
    std::istringstream hs(line);
    std::string cell;
    int k = 0;
    while (std::getline(hs, cell, ',')) {
      if (k >= p.independent_count() || cell != p.label(k))
        throw IoError(path + ": header column " + std::to_string(k) + " does not match the protocol");
      ++k;
    }
    if (k != p.independent_count()) throw IoError(path + ": header has " + std::to_string(k) + " columns");
  }
  std::vector<MeasurementFrame> frames;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    MeasurementFrame f;
    f.kind = kind;
    f.n_electrodes = p.n_electrodes;
    f.voltages.resize(p.independent_count());
    int k = 0;
    while (std::getline(ls, cell, ',')) {
      if (k >= p.independent_count()) throw IoError(path + ":" + std::to_string(lineno) + ": too many columns");
      f.voltages[k++] = std::stod(cell);
    }
    if (k != p.independent_count()) throw IoError(path + ":" + std::to_string(lineno) + ": too few columns");
    if (!f.voltages.allFinite()) throw IoError(path + ":" + std::to_string(lineno) + ": non-finite voltage");
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_jacobian(const std::string& path, const Jacobian& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  nlohmann::json h = {
      {"format", "eskin-jacobian"},
      {"version", 1},
      {"rows", j.rows()},
      {"cols", j.cols()},
      {"dtype", "float64-le"},
      {"order", "row-major"},
      {"blocks", {"matrix", "reference", "sigma0"}},
      {"mesh_id", hex64(j.mesh_id)},
      {"grid_id", hex64(j.grid_id)},
      {"n_electrodes", j.n_electrodes},
      {"current_mA", j.current_mA},
  };
  write_framed_header(out, kJacobianMagic, h.dump());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = j.matrix;
  write_array<double>(out, {rm.data(), static_cast<std::size_t>(rm.size())});
  write_array<double>(out, {j.reference.data(), static_cast<std::size_t>(j.reference.size())});
  write_array<double>(out, {j.sigma0.data(), static_cast<std::size_t>(j.sigma0.size())});
  if (!out) throw IoError("write failed for " + path);
}

Jacobian read_jacobian(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open Jacobian file " + path);
  const auto h = nlohmann::json::parse(read_framed_header(in, kJacobianMagic, path));
  if (h.at("version").get<int>() != 1) throw IoError(path + ": unsupported Jacobian version");
  const int rows = h.at("rows").get<int>();
  const int cols = h.at("cols").get<int>();
  Jacobian j;
  j.mesh_id = std::stoull(h.at("mesh_id").get<std::string>(), nullptr, 16);
  j.grid_id = std::stoull(h.at("grid_id").get<std::string>(), nullptr, 16);
  j.n_electrodes = h.at("n_electrodes").get<int>();
  j.current_mA = h.at("current_mA").get<double>();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  read_array<double>(in, {rm.data(), static_cast<std::size_t>(rm.size())});
  j.matrix = rm;
  j.reference.resize(rows);
  read_array<double>(in, {j.reference.data(), static_cast<std::size_t>(rows)});
  j.sigma0.resize(cols);
  read_array<double>(in, {j.sigma0.data(), static_cast<std::size_t>(cols)});
  return j;
}

}  // namespace eskin
