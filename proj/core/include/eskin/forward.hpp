#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "eskin/geometry.hpp"

namespace eskin {

// Conductivity (S/m) per reconstruction lattice point.
struct ConductivityField {
  Lattice lattice;
  Eigen::VectorXd values;

  static ConductivityField uniform(const Lattice& lattice, double value);
  int size() const { return static_cast<int>(values.size()); }
};

// Adjacent-drive / adjacent-measure protocol. Pair p joins electrodes p and
// (p + 1) mod n. For every drive pair the measuring pairs that share no
// electrode with it are read in increasing pair index.
struct SensingProtocol {
  struct Measurement {
    int drive = 0;
    int measure = 0;
  };

  int n_electrodes = 16;
  // All n * (n - 3) drive/measure combinations, drive-major.
  std::vector<Measurement> full;
  // The reciprocity-independent half (drive < measure), in the same order.
  std::vector<Measurement> independent;

  int independent_count() const { return static_cast<int>(independent.size()); }
  int full_count() const { return static_cast<int>(full.size()); }
  // CSV column label, e.g. "d01-02_m03-04" (1-based electrode numbers).
  std::string label(int k) const;
};

SensingProtocol make_adjacent_protocol(int n_electrodes = 16);

enum class FrameKind { kReferenceFlat, kReferenceDeformed, kTouched };

const char* to_string(FrameKind kind);
FrameKind frame_kind_from_string(const std::string& s);

struct MeasurementFrame {
  Eigen::VectorXd voltages;
  int n_electrodes = 16;
  FrameKind kind = FrameKind::kTouched;
};

// Stiffness matrix in electrode-collapsed degrees of freedom. Each
// electrode's footprint nodes share one potential (dofs 0..n_electrodes-1);
// the remaining vertices follow in vertex order. The matrix is not grounded.
struct System {
  Eigen::SparseMatrix<double> stiffness;
  std::vector<int> dof_of_vertex;
  int electrode_dofs = 0;

  int dof_count() const { return static_cast<int>(stiffness.rows()); }
};

// Per-triangle conductivity from the nearest lattice point of the flat
// triangle centroid.
std::vector<double> element_conductivity(const Mesh& m, const ConductivityField& sigma);
// Lattice point owning each triangle.
std::vector<int> element_owner(const Mesh& m, const Lattice& lattice);

System assemble_system(const Mesh& m, const ConductivityField& sigma);

// Factorised forward problem for one mesh and conductivity; holds the
// potentials of every drive pair.
class ForwardSolver {
 public:
  ForwardSolver(const Mesh& m, const ConductivityField& sigma, double current_mA = 1.0);

  int n_electrodes() const { return n_electrodes_; }
  double current_amperes() const { return current_; }
  // Vertex potentials (V), one column per drive pair.
  const Eigen::MatrixXd& potentials() const { return potentials_; }
  // Electrode potentials (V): row = drive pair, column = electrode.
  const Eigen::MatrixXd& electrode_potentials() const { return electrode_potentials_; }
  // Differential voltage u(measure) - u(measure + 1) under a drive pair.
  double measurement(int drive, int measure) const;
  MeasurementFrame frame(const SensingProtocol& p, FrameKind kind) const;
  // All n * (n - 3) measurements in protocol.full order.
  Eigen::VectorXd full_frame(const SensingProtocol& p) const;

 private:
  int n_electrodes_ = 0;
  double current_ = 0.0;
  Eigen::MatrixXd potentials_;
  Eigen::MatrixXd electrode_potentials_;
};

MeasurementFrame solve_frame(const Mesh& m, const ConductivityField& sigma, const SensingProtocol& p,
                             double current_mA = 1.0, FrameKind kind = FrameKind::kTouched);

// dV/dsigma on the reconstruction lattice, rows in protocol order.
struct Jacobian {
  Eigen::MatrixXd matrix;
  // Model voltages at the linearisation point.
  Eigen::VectorXd reference;
  Eigen::VectorXd sigma0;
  std::uint64_t mesh_id = 0;
  std::uint64_t grid_id = 0;
  int n_electrodes = 16;
  double current_mA = 1.0;

  int rows() const { return static_cast<int>(matrix.rows()); }
  int cols() const { return static_cast<int>(matrix.cols()); }
  // Sensitivity of the normalised difference (V0 - V) / V0 to the relative
  // conductivity change (sigma - sigma0) / sigma0.
  Eigen::MatrixXd normalized() const;
};

// Adjoint-field sensitivities integrated over each lattice point's
// ownership region.
Jacobian compute_jacobian(const Mesh& m, const ConductivityField& sigma0, const SensingProtocol& p,
                          const ReconGrid& grid, double current_mA = 1.0);

// (v_ref - v_t) / v_ref elementwise; positive where conductivity rose.
Eigen::VectorXd normalized_difference(const MeasurementFrame& v_t, const MeasurementFrame& v_ref);

// One row per frame; header names each drive/measure combination.
void write_frames_csv(const std::string& path, const std::vector<MeasurementFrame>& frames,
                      const SensingProtocol& p);
std::vector<MeasurementFrame> read_frames_csv(const std::string& path, const SensingProtocol& p,
                                              FrameKind kind = FrameKind::kTouched);

// Framed binary: JSON header (shape, provenance) then row-major float64
// matrix, reference voltages and sigma0.
void write_jacobian(const std::string& path, const Jacobian& j);
Jacobian read_jacobian(const std::string& path);

}  // namespace eskin
