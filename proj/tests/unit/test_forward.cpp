#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "eskin/error.hpp"
#include "eskin/forward.hpp"

using namespace eskin;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

namespace {

struct Fixture {
  SensorGeometry g = make_geometry();
  SensingProtocol p = make_adjacent_protocol(16);
  Lattice lat;
};

int row_of(const SensingProtocol& p, int drive, int measure) {
  for (int k = 0; k < p.independent_count(); ++k)
    if (p.independent[k].drive == drive && p.independent[k].measure == measure) return k;
  return -1;
}

}  // namespace

TEST(Protocol, Counts) {
  const auto p = make_adjacent_protocol(16);
  EXPECT_EQ(p.full_count(), 208);
  EXPECT_EQ(p.independent_count(), 104);
  for (const auto& m : p.independent) {
    EXPECT_LT(m.drive, m.measure);
    // Measuring pair shares no electrode with the drive pair.
    EXPECT_NE(m.measure, m.drive);
    EXPECT_NE(m.measure, (m.drive + 1) % 16);
    EXPECT_NE((m.measure + 1) % 16, m.drive);
  }
}

TEST(Assemble, SymmetricConservativeLinear) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{1.0}, 1500);
  auto s1 = ConductivityField::uniform(f.lat, 1.0);
  const System a = assemble_system(m, s1);
  const Eigen::SparseMatrix<double> at = a.stiffness.transpose();
  EXPECT_EQ((Eigen::MatrixXd(a.stiffness) - Eigen::MatrixXd(at)).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::VectorXd rows = Eigen::MatrixXd(a.stiffness).rowwise().sum();
  EXPECT_LT(rows.cwiseAbs().maxCoeff(), 1e-10 * Eigen::MatrixXd(a.stiffness).cwiseAbs().maxCoeff());
  auto s2 = ConductivityField::uniform(f.lat, 2.0);
  const System b = assemble_system(m, s2);
  EXPECT_LT((Eigen::MatrixXd(b.stiffness) - 2.0 * Eigen::MatrixXd(a.stiffness)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Assemble, RejectsNonPositiveConductivity) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{}, 600);
  auto s = ConductivityField::uniform(f.lat, 1.0);
  s.values[10] = 0.0;
  EXPECT_THROW(assemble_system(m, s), InvalidArgument);
}

TEST(Solve, FrameLength) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{}, 1000);
  const auto fr = solve_frame(m, ConductivityField::uniform(f.lat, 1.0), f.p);
  EXPECT_EQ(fr.voltages.size(), 104);
  EXPECT_TRUE(fr.voltages.allFinite());
}

// Every drive/measure exchange, three bend states, a non-uniform field.
TEST(Solve, Reciprocity) {
  Fixture f;
  auto s = ConductivityField::uniform(f.lat, 1.0);
  for (int q = 0; q < s.size(); q += 7) s.values[q] = 1.0 + (q % 5);
  for (double th : {0.0, kPi / 3, 2 * kPi / 3}) {
    const Mesh m = make_mesh(f.g, DeformationState{th}, 1500);
    const ForwardSolver fs(m, s);
    for (const auto& mm : f.p.independent) {
      const double a = fs.measurement(mm.drive, mm.measure);
      const double b = fs.measurement(mm.measure, mm.drive);
      EXPECT_LE(std::abs(a - b), 1e-8 * std::max(std::abs(a), std::abs(b))) << th;
    }
  }
}

TEST(Solve, HomogeneousOfDegreeMinusOne) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{1.0}, 1500);
  auto s = ConductivityField::uniform(f.lat, 1.0);
  for (int q = 0; q < s.size(); q += 3) s.values[q] = 3.0;
  const auto v1 = solve_frame(m, s, f.p);
  s.values *= 2.0;
  const auto v2 = solve_frame(m, s, f.p);
  EXPECT_LT((v1.voltages - 2.0 * v2.voltages).cwiseAbs().maxCoeff(), 1e-10 * v1.voltages.cwiseAbs().maxCoeff());
}

TEST(Solve, MeshConvergence) {
  Fixture f;
  const auto s = ConductivityField::uniform(f.lat, 1.0);
  for (double th : {0.0, kPi / 2}) {
    const auto a = solve_frame(make_mesh(f.g, DeformationState{th}, 4000), s, f.p);
    const auto b = solve_frame(make_mesh(f.g, DeformationState{th}, 8000), s, f.p);
    const double rel = ((a.voltages - b.voltages).array() / b.voltages.array()).abs().maxCoeff();
    EXPECT_LT(rel, 0.01) << th;
  }
}

TEST(Solve, DeformationIsNotANoOp) {
  Fixture f;
  const auto s = ConductivityField::uniform(f.lat, 1.0);
  const auto a = solve_frame(make_mesh(f.g, DeformationState{0.0}, 2000), s, f.p);
  const auto b = solve_frame(make_mesh(f.g, DeformationState{kPi}, 2000), s, f.p);
  EXPECT_GT(((a.voltages - b.voltages).array() / a.voltages.array()).abs().maxCoeff(), 1e-3);
}

TEST(Jacobian, ShapeAndFiniteDifference) {
  Fixture f;
  const DeformationState d{kPi / 3};
  const Mesh m = make_mesh(f.g, d, 1500);
  const auto s0 = ConductivityField::uniform(f.lat, 1.0);
  const Jacobian j = compute_jacobian(m, s0, f.p, make_recon_grid(f.g, d));
  ASSERT_EQ(j.rows(), 104);
  ASSERT_EQ(j.cols(), 1350);
  const auto v0 = solve_frame(m, s0, f.p);
  std::mt19937_64 rng(11);
  const double eps = 1e-4;
  for (int t = 0; t < 20; ++t) {
    const int k = static_cast<int>(rng() % 104), q = static_cast<int>(rng() % 1350);
    auto s = s0;
    s.values[q] += eps;
    const double fd = (solve_frame(m, s, f.p).voltages[k] - v0.voltages[k]) / eps;
    EXPECT_LT(std::abs(j.matrix(k, q) - fd) / std::max(std::abs(j.matrix(k, q)), eps), 1e-3) << k << "," << q;
  }
}

// Mirror x -> W - x maps electrode pairs to pairs and keeps every
// measurement (both orientations flip).
TEST(Jacobian, MirrorSymmetryOnFlatSheet) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{}, 2000);
  const Jacobian j = compute_jacobian(m, ConductivityField::uniform(f.lat, 1.0), f.p, make_recon_grid(f.g, {}));
  std::vector<int> mirror(16);
  for (int k = 0; k < 16; ++k) {
    const Vec2 c = f.g.electrode_center(k);
    const Vec2 mc(f.g.width - c.x(), c.y());
    int best = 0;
    for (int l = 1; l < 16; ++l)
      if ((f.g.electrode_center(l) - mc).norm() < (f.g.electrode_center(best) - mc).norm()) best = l;
    ASSERT_LT((f.g.electrode_center(best) - mc).norm(), 1e-9);
    mirror[k] = best;
  }
  auto pair_image = [&](int p) { return mirror[(p + 1) % 16]; };
  const double scale = j.matrix.cwiseAbs().maxCoeff();
  for (int k = 0; k < 104; ++k) {
    int d = pair_image(f.p.independent[k].drive), mm = pair_image(f.p.independent[k].measure);
    if (d > mm) std::swap(d, mm);
    const int k2 = row_of(f.p, d, mm);
    ASSERT_GE(k2, 0);
    for (int r = 0; r < f.lat.rows; ++r)
      for (int c = 0; c < f.lat.cols; ++c)
        ASSERT_NEAR(j.matrix(k, r * f.lat.cols + c), j.matrix(k2, r * f.lat.cols + (f.lat.cols - 1 - c)), 1e-6 * scale);
  }
}

// A conductive patch that bridges a drive pair shunts the injected current:
// every measurement under that drive loses magnitude.
TEST(Jacobian, ShuntUnderDriveGapReducesVoltages) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{}, 2000);
  const auto s0 = ConductivityField::uniform(f.lat, 1.0);
  const Jacobian j = compute_jacobian(m, s0, f.p, make_recon_grid(f.g, {}));
  for (int d = 0; d < 16; ++d) {
    const Vec2 mid = 0.5 * (f.g.electrode_center(d) + f.g.electrode_center((d + 1) % 16));
    // Nudge inside the sheet; corners pairs keep the midpoint of the chord.
    const Vec2 centre(f.g.width / 2, f.g.height / 2);
    const int q = f.lat.nearest(mid + 0.02 * (centre - mid));
    for (int k = 0; k < 104; ++k) {
      const auto& mm = f.p.independent[k];
      if (mm.drive != d && mm.measure != d) continue;
      EXPECT_LT(j.matrix(k, q) * j.reference[k], 0.0) << "drive " << d << " row " << k;
    }
  }
}

TEST(NormalizedDifference, Examples) {
  MeasurementFrame ref;
  ref.voltages = Eigen::VectorXd::LinSpaced(104, 0.5, 2.0);
  EXPECT_EQ(normalized_difference(ref, ref).cwiseAbs().maxCoeff(), 0.0);
  MeasurementFrame t = ref;
  t.voltages *= 1.1;
  EXPECT_NEAR(normalized_difference(t, ref).cwiseAbs().maxCoeff(), 0.1, 1e-12);
  EXPECT_NEAR(normalized_difference(t, ref).cwiseAbs().minCoeff(), 0.1, 1e-12);
  ref.voltages[17] = 0.0;
  try {
    normalized_difference(t, ref);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(ForwardIo, FramesCsvRoundTrip) {
  Fixture f;
  const Mesh m = make_mesh(f.g, DeformationState{0.5}, 800);
  const auto fr = solve_frame(m, ConductivityField::uniform(f.lat, 1.0), f.p);
  const auto path = (fs::temp_directory_path() / "eskin_frames.csv").string();
  write_frames_csv(path, {fr, fr}, f.p);
  const auto back = read_frames_csv(path, f.p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].voltages, fr.voltages);
  fs::remove(path);
}

TEST(ForwardIo, JacobianBitExactRoundTrip) {
  Fixture f;
  const DeformationState d{0.8};
  const Mesh m = make_mesh(f.g, d, 800);
  const Jacobian j = compute_jacobian(m, ConductivityField::uniform(f.lat, 1.0), f.p, make_recon_grid(f.g, d));
  const auto path = (fs::temp_directory_path() / "eskin_jac.bin").string();
  write_jacobian(path, j);
  const Jacobian r = read_jacobian(path);
  EXPECT_EQ(r.matrix, j.matrix);
  EXPECT_EQ(r.reference, j.reference);
  EXPECT_EQ(r.mesh_id, j.mesh_id);
  EXPECT_EQ(r.grid_id, j.grid_id);
  fs::remove(path);
}
