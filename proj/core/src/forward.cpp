#include "eskin/forward.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "eskin/error.hpp"

namespace eskin {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Unit-conductivity P1 stiffness of a (possibly non-planar) triangle:
// K_ij = (e_i . e_j) / (4A), e_i the edge opposite vertex i.
Eigen::Matrix3d local_stiffness(const Mesh& m, const std::array<int, 3>& tri) {
  const Vec3& p0 = m.vertices[tri[0]];
  const Vec3& p1 = m.vertices[tri[1]];
  const Vec3& p2 = m.vertices[tri[2]];
  const Vec3 e[3] = {p2 - p1, p0 - p2, p1 - p0};
  const double area = 0.5 * e[2].cross(-e[1]).norm();
  Eigen::Matrix3d k;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k(i, j) = e[i].dot(e[j]) / (4.0 * area);
  return k;
}

void check_compatible(const Mesh& m, const Lattice& lattice) {
  if (m.flat.size() != m.vertices.size())
    throw ProvenanceMismatch("mesh carries no flat coordinates; cannot map lattice conductivity");
  if (std::abs(m.width - lattice.width) > 1e-9 || std::abs(m.height - lattice.height) > 1e-9) {
    std::ostringstream os;
    os << "mesh domain " << m.width << " x " << m.height << " does not match lattice domain " << lattice.width
       << " x " << lattice.height;
    throw ProvenanceMismatch(os.str());
  }
}

double thickness_m(const Mesh& m) { return m.thickness * 1e-3; }

// The layer is treated as incompressible: stretching a triangle thins it
// by the same factor, so thickness * area is the flat value.
double element_thickness_m(const Mesh& m, const std::array<int, 3>& tri) {
  const Vec3& p0 = m.vertices[tri[0]];
  const double deformed = (m.vertices[tri[1]] - p0).cross(m.vertices[tri[2]] - p0).norm();
  const Vec2 a = m.flat[tri[1]] - m.flat[tri[0]];
  const Vec2 b = m.flat[tri[2]] - m.flat[tri[0]];
  const double flat = std::abs(a.x() * b.y() - a.y() * b.x());
  return thickness_m(m) * flat / deformed;
}

}  // namespace

ConductivityField ConductivityField::uniform(const Lattice& lattice, double value) {
  return {lattice, Eigen::VectorXd::Constant(lattice.size(), value)};
}

SensingProtocol make_adjacent_protocol(int n_electrodes) {
  if (n_electrodes < 4) throw InvalidArgument("protocol needs at least 4 electrodes");
  SensingProtocol p;
  p.n_electrodes = n_electrodes;
  const auto shares_electrode = [n_electrodes](int a, int b) {
    return a == b || (a + 1) % n_electrodes == b || (b + 1) % n_electrodes == a;
  };
  for (int d = 0; d < n_electrodes; ++d) {
    for (int meas = 0; meas < n_electrodes; ++meas) {
      if (shares_electrode(d, meas)) continue;
      p.full.push_back({d, meas});
      if (d < meas) p.independent.push_back({d, meas});
    }
  }
  return p;
}

std::string SensingProtocol::label(int k) const {
  const Measurement& m = independent.at(k);
  char buf[64];
  std::snprintf(buf, sizeof buf, "d%02d-%02d_m%02d-%02d", m.drive + 1, (m.drive + 1) % n_electrodes + 1,
                m.measure + 1, (m.measure + 1) % n_electrodes + 1);
  return buf;
}

const char* to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::kReferenceFlat:
      return "reference_flat";
    case FrameKind::kReferenceDeformed:
      return "reference_deformed";
    case FrameKind::kTouched:
      return "touched";
  }
  return "touched";
}

FrameKind frame_kind_from_string(const std::string& s) {
  if (s == "reference_flat") return FrameKind::kReferenceFlat;
  if (s == "reference_deformed") return FrameKind::kReferenceDeformed;
  if (s == "touched") return FrameKind::kTouched;
  throw InvalidArgument("unknown frame kind '" + s + "'");
}

std::vector<int> element_owner(const Mesh& m, const Lattice& lattice) {
  check_compatible(m, lattice);
  std::vector<int> owner(m.triangles.size());
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    const Vec2 c = (m.flat[tri[0]] + m.flat[tri[1]] + m.flat[tri[2]]) / 3.0;
    owner[t] = lattice.nearest(c);
  }
  return owner;
}

std::vector<double> element_conductivity(const Mesh& m, const ConductivityField& sigma) {
  if (sigma.size() != sigma.lattice.size()) throw InvalidArgument("conductivity field size does not match its lattice");
  for (int q = 0; q < sigma.size(); ++q)
    if (!(sigma.values[q] > 0.0))
      throw InvalidArgument("conductivity must be positive; entry " + std::to_string(q) + " is " +
                            std::to_string(sigma.values[q]));
  const std::vector<int> owner = element_owner(m, sigma.lattice);
  std::vector<double> out(owner.size());
  for (std::size_t t = 0; t < owner.size(); ++t) out[t] = sigma.values[owner[t]];
  return out;
}

System assemble_system(const Mesh& m, const ConductivityField& sigma) {
  const std::vector<double> cond = element_conductivity(m, sigma);
  const int ne = static_cast<int>(m.electrode_nodes.size());
  if (ne == 0) throw InvalidArgument("mesh has no electrodes");

  System sys;
  sys.electrode_dofs = ne;
  sys.dof_of_vertex.assign(m.vertices.size(), -1);
  for (int k = 0; k < ne; ++k) {
    for (int v : m.electrode_nodes[k]) {
      if (sys.dof_of_vertex[v] != -1) throw InvalidArgument("electrode node sets overlap at vertex " + std::to_string(v));
      sys.dof_of_vertex[v] = k;
    }
  }
  int next = ne;
  for (int& d : sys.dof_of_vertex)
    if (d == -1) d = next++;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * m.triangles.size());
  for (std::size_t e = 0; e < m.triangles.size(); ++e) {
    const auto& tri = m.triangles[e];
    const Eigen::Matrix3d k = cond[e] * element_thickness_m(m, tri) * local_stiffness(m, tri);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(sys.dof_of_vertex[tri[i]], sys.dof_of_vertex[tri[j]], k(i, j));
  }
  sys.stiffness.resize(next, next);
  sys.stiffness.setFromTriplets(trip.begin(), trip.end());
  sys.stiffness.makeCompressed();
  return sys;
}

ForwardSolver::ForwardSolver(const Mesh& m, const ConductivityField& sigma, double current_mA)
    : n_electrodes_(static_cast<int>(m.electrode_nodes.size())), current_(current_mA * 1e-3) {
  const System sys = assemble_system(m, sigma);
  // The last dof is a non-electrode vertex; fixing it at 0 V removes the
  // constant null space.
  const int n = sys.dof_count() - 1;
  const SpMat grounded = sys.stiffness.topLeftCorner(n, n);

  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(grounded);
  const auto condition_estimate = [&ldlt]() {
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    return d.minCoeff() > 0.0 ? d.maxCoeff() / d.minCoeff() : std::numeric_limits<double>::infinity();
  };
  if (ldlt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "forward system factorisation failed (condition estimate " << condition_estimate() << ")";
    throw NumericalError(os.str());
  }

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, n_electrodes_);
  for (int d = 0; d < n_electrodes_; ++d) {
    rhs(d, d) += current_;
    rhs((d + 1) % n_electrodes_, d) -= current_;
  }
  const Eigen::MatrixXd x = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !x.allFinite()) {
    std::ostringstream os;
    os << "forward solve failed (condition estimate " << condition_estimate() << ")";
    throw NumericalError(os.str());
  }

  potentials_.resize(m.vertex_count(), n_electrodes_);
  for (int v = 0; v < m.vertex_count(); ++v) {
    const int dof = sys.dof_of_vertex[v];
    if (dof == n)
      potentials_.row(v).setZero();
    else
      potentials_.row(v) = x.row(dof);
  }
  electrode_potentials_ = x.topRows(n_electrodes_).transpose();
}

double ForwardSolver::measurement(int drive, int measure) const {
  return electrode_potentials_(drive, measure) - electrode_potentials_(drive, (measure + 1) % n_electrodes_);
}

MeasurementFrame ForwardSolver::frame(const SensingProtocol& p, FrameKind kind) const {
  if (p.n_electrodes != n_electrodes_)
    throw ProvenanceMismatch("protocol expects " + std::to_string(p.n_electrodes) + " electrodes, mesh has " +
                             std::to_string(n_electrodes_));
  MeasurementFrame f;
  f.n_electrodes = n_electrodes_;
  f.kind = kind;
  f.voltages.resize(p.independent_count());
  for (int k = 0; k < p.independent_count(); ++k) f.voltages[k] = measurement(p.independent[k].drive, p.independent[k].measure);
  return f;
}

Eigen::VectorXd ForwardSolver::full_frame(const SensingProtocol& p) const {
  if (p.n_electrodes != n_electrodes_) throw ProvenanceMismatch("protocol/mesh electrode count mismatch");
  Eigen::VectorXd v(p.full_count());
  for (int k = 0; k < p.full_count(); ++k) v[k] = measurement(p.full[k].drive, p.full[k].measure);
  return v;
}

MeasurementFrame solve_frame(const Mesh& m, const ConductivityField& sigma, const SensingProtocol& p,
                             double current_mA, FrameKind kind) {
  return ForwardSolver(m, sigma, current_mA).frame(p, kind);
}

Eigen::MatrixXd Jacobian::normalized() const {
  Eigen::MatrixXd out(matrix.rows(), matrix.cols());
  for (Eigen::Index k = 0; k < matrix.rows(); ++k) {
    if (reference[k] == 0.0) throw NumericalError("zero reference voltage in Jacobian row " + std::to_string(k));
    out.row(k) = -matrix.row(k).cwiseProduct(sigma0.transpose()) / reference[k];
  }
  return out;
}

Jacobian compute_jacobian(const Mesh& m, const ConductivityField& sigma0, const SensingProtocol& p,
                          const ReconGrid& grid, double current_mA) {
  if (!(sigma0.lattice == grid.lattice))
    throw ProvenanceMismatch("linearisation field and reconstruction grid use different lattices");
  if (grid.point_count() != grid.lattice.size()) throw ProvenanceMismatch("reconstruction grid is inconsistent");
  const std::vector<int> owner = element_owner(m, grid.lattice);
  const ForwardSolver solver(m, sigma0, current_mA);

  Jacobian j;
  j.mesh_id = m.id;
  j.grid_id = grid.id;
  j.n_electrodes = p.n_electrodes;
  j.current_mA = current_mA;
  j.sigma0 = sigma0.values;
  j.reference = solver.frame(p, FrameKind::kReferenceDeformed).voltages;
  j.matrix = Eigen::MatrixXd::Zero(p.independent_count(), grid.point_count());

  const Eigen::MatrixXd& u = solver.potentials();
  const int ne = solver.n_electrodes();
  const double scale = -1.0 / solver.current_amperes();
  Eigen::Matrix<double, 3, Eigen::Dynamic> ul(3, ne);
  Eigen::Matrix<double, 3, Eigen::Dynamic> ku(3, ne);
  for (std::size_t e = 0; e < m.triangles.size(); ++e) {
    const auto& tri = m.triangles[e];
    for (int i = 0; i < 3; ++i) ul.row(i) = u.row(tri[i]);
    ku.noalias() = local_stiffness(m, tri) * ul;
    const int q = owner[e];
    const double w = scale * element_thickness_m(m, tri);
    for (int k = 0; k < p.independent_count(); ++k) {
      const auto& mm = p.independent[k];
      j.matrix(k, q) += w * ul.col(mm.measure).dot(ku.col(mm.drive));
    }
  }
  return j;
}

Eigen::VectorXd normalized_difference(const MeasurementFrame& v_t, const MeasurementFrame& v_ref) {
  if (v_t.n_electrodes != v_ref.n_electrodes || v_t.voltages.size() != v_ref.voltages.size())
    throw ProvenanceMismatch("frames were measured with different protocols");
  Eigen::VectorXd dv(v_t.voltages.size());
  for (Eigen::Index k = 0; k < dv.size(); ++k) {
    if (v_ref.voltages[k] == 0.0) throw InvalidArgument("reference voltage is zero at index " + std::to_string(k));
    dv[k] = (v_ref.voltages[k] - v_t.voltages[k]) / v_ref.voltages[k];
  }
  return dv;
}

}  // namespace eskin
