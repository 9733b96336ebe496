#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "eskin/binary_io.hpp"
#include "eskin/dataset.hpp"
#include "eskin/error.hpp"

using namespace eskin;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

namespace {

std::set<std::vector<int>> unit_sets(const std::vector<TouchPattern>& ps) {
  std::set<std::vector<int>> s;
  for (const auto& p : ps) s.insert(p.units);
  return s;
}

DatasetSpec small_spec() {
  DatasetSpec s;
  s.bends = {0.0, kPi / 2};
  s.kinds = {PatternKind::kSingleUnit, PatternKind::kRandomUnits};
  s.random_count = 4;
  s.mesh_vertices = 900;
  return s;
}

std::string fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d.string();
}

}  // namespace

// Brute force: every axis-aligned rectangle on the unit grid, keep squares.
TEST(Patterns, CountsMatchBruteForce) {
  std::set<std::vector<int>> squares;
  for (int r0 = 0; r0 < kUnitRows; ++r0)
    for (int r1 = r0; r1 < kUnitRows; ++r1)
      for (int c0 = 0; c0 < kUnitCols; ++c0)
        for (int c1 = c0; c1 < kUnitCols; ++c1) {
          if (r1 - r0 != c1 - c0 || r1 == r0) continue;
          std::vector<int> u;
          for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) u.push_back(r * kUnitCols + c);
          squares.insert(u);
        }
  const auto sq = enumerate_patterns(PatternKind::kSquare);
  EXPECT_EQ(sq.size(), 384u);
  EXPECT_EQ(unit_sets(sq), squares);

  std::set<std::vector<int>> singles;
  for (int u = 0; u < kUnitCount; ++u) singles.insert({u});
  const auto one = enumerate_patterns(PatternKind::kSingleUnit);
  EXPECT_EQ(one.size(), 126u);
  EXPECT_EQ(unit_sets(one), singles);
}

TEST(Patterns, RandomUnitsAreDistinctAndSeeded) {
  const auto a = enumerate_patterns(PatternKind::kRandomUnits, 100, 1);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(unit_sets(a).size(), 100u);
  for (const auto& p : a) {
    EXPECT_GE(p.units.size(), 2u);
    EXPECT_LE(p.units.size(), 4u);
    EXPECT_TRUE(std::is_sorted(p.units.begin(), p.units.end()));
    EXPECT_NO_THROW(validate(p));
  }
  EXPECT_EQ(unit_sets(a), unit_sets(enumerate_patterns(PatternKind::kRandomUnits, 100, 1)));
  EXPECT_NE(unit_sets(a), unit_sets(enumerate_patterns(PatternKind::kRandomUnits, 100, 2)));
}

TEST(Patterns, ValidateRejectsBrokenShapes) {
  EXPECT_THROW(validate(TouchPattern{PatternKind::kSquare, {0, 1, 14}, "x"}), InvalidArgument);
  EXPECT_THROW(validate(TouchPattern{PatternKind::kSingleUnit, {0, 1}, "x"}), InvalidArgument);
  EXPECT_THROW(validate(TouchPattern{PatternKind::kSingleUnit, {126}, "x"}), InvalidArgument);
  EXPECT_NO_THROW(validate(TouchPattern{PatternKind::kSquare, {0, 1, 14, 15}, "x"}));
}

TEST(Patterns, FieldAndTarget) {
  const auto grid = make_recon_grid(make_geometry(), DeformationState{});
  const auto ft = pattern_to_field(TouchPattern{PatternKind::kSquare, {0, 1, 14, 15}, "x"}, grid);
  int on = 0;
  for (int q = 0; q < 1350; ++q) {
    const bool touched = ft.target[q] == 1.0;
    EXPECT_TRUE(touched || ft.target[q] == 0.0);
    EXPECT_EQ(ft.field.values[q], touched ? 50.0 : 1.0);
    on += touched;
  }
  int expect = 0;
  for (int u : {0, 1, 14, 15}) expect += static_cast<int>(grid.points_of_unit(u).size());
  EXPECT_EQ(on, expect);
}

TEST(Phantoms, HeldOutShapes) {
  const auto phs = held_out_phantoms();
  ASSERT_EQ(phs.size(), 8u);
  auto training = unit_sets(enumerate_patterns(PatternKind::kSquare));
  for (const auto& s : unit_sets(enumerate_patterns(PatternKind::kSingleUnit))) training.insert(s);
  for (const auto& p : phs) {
    EXPECT_GE(p.units.size(), 5u) << p.id;
    EXPECT_EQ(training.count(p.units), 0u) << p.id;
    EXPECT_GE(p.bend_angle, 0.0);
    EXPECT_LE(p.bend_angle, kPi);
  }
}

TEST(Noise, SnrAndDeterminism) {
  MeasurementFrame f;
  f.voltages = Eigen::VectorXd::LinSpaced(20000, 0.5, 1.5);
  const auto a = add_noise(f, 30.0, 7);
  const double signal = f.voltages.squaredNorm() / f.voltages.size();
  const double noise = (a.voltages - f.voltages).squaredNorm() / f.voltages.size();
  EXPECT_NEAR(10 * std::log10(signal / noise), 30.0, 0.1);
  EXPECT_EQ(add_noise(f, 30.0, 7).voltages, a.voltages);
  EXPECT_NE(add_noise(f, 30.0, 8).voltages, a.voltages);
  EXPECT_EQ(add_noise(f, INFINITY, 7).voltages, f.voltages);
  EXPECT_THROW(add_noise(f, NAN, 7), InvalidArgument);
}

TEST(Noise, SampleSeedsAreOrderFree) {
  std::set<std::uint64_t> seen;
  for (int b = 0; b < 5; ++b)
    for (int i = 0; i < 200; ++i) seen.insert(sample_seed(1, b, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(sample_seed(1, 3, 17), sample_seed(1, 3, 17));
}

TEST(Spec, Defaults) {
  const DatasetSpec s;
  EXPECT_EQ(s.bends.size(), 5u);
  EXPECT_EQ(s.patterns().size(), 610u);
  EXPECT_EQ(5 * s.patterns().size(), 3050u);
  auto bad = s;
  bad.bends = {4.0};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.mesh_vertices = 10;
  EXPECT_THROW(bad.validate(), ConfigError);
}

// The confound the learned model has to remove: bending alone moves dv.
TEST(Generate, BendingAloneChangesVoltages) {
  const auto g = make_geometry();
  const Lattice lat;
  const auto proto = make_adjacent_protocol(16);
  const auto s = ConductivityField::uniform(lat, 1.0);
  const auto flat = solve_frame(make_mesh(g, DeformationState{}, 900), s, proto);
  const auto bent = solve_frame(make_mesh(g, DeformationState{kPi / 2}, 900), s, proto);
  EXPECT_GT(normalized_difference(bent, flat).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Generate, ShardsLoadAndVerify) {
  const auto spec = small_spec();
  const auto dir = fresh_dir("eskin_ds_a");
  const auto m = generate(spec, make_geometry(), dir);
  EXPECT_EQ(m.total_samples, 2 * (126 + 4));
  EXPECT_EQ(m.shards.size(), 2u);
  EXPECT_TRUE(m.skipped.empty());
  EXPECT_EQ(m.reference_kind, "reference_flat");

  const auto ld = load_dataset(dir);
  EXPECT_EQ(ld.data.size(), m.total_samples);
  EXPECT_EQ(ld.data.dv.rows(), 104);
  EXPECT_EQ(ld.data.deform.rows(), 1350);
  EXPECT_EQ(ld.data.target.rows(), 1350);
  EXPECT_TRUE(((ld.data.target.array() == 0.0) || (ld.data.target.array() == 1.0)).all());
  EXPECT_EQ(ld.meta.size(), static_cast<std::size_t>(m.total_samples));
  // Flat shard: the descriptor is zero.
  EXPECT_LT(ld.data.deform.col(0).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GT(ld.data.deform.col(m.total_samples - 1).cwiseAbs().maxCoeff(), 1.0);

  // Same spec, same bytes.
  const auto dir2 = fresh_dir("eskin_ds_b");
  generate(spec, make_geometry(), dir2);
  EXPECT_EQ(hash_file(dir + "/manifest.json"), hash_file(dir2 + "/manifest.json"));

  // Tampering is caught.
  {
    std::fstream f(dir + "/" + m.shards[1].file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_dataset(dir), ProvenanceMismatch);
  fs::remove_all(dir);
  fs::remove_all(dir2);
  EXPECT_THROW(load_dataset(dir), MissingInput);
}

TEST(Generate, PhantomCase) {
  DatasetSpec s;
  s.mesh_vertices = 1500;
  const auto g = make_geometry();
  const auto phs = held_out_phantoms();
  const auto pc = simulate_phantom(g, phs[1], 1, s);
  EXPECT_EQ(pc.reference_flat.kind, FrameKind::kReferenceFlat);
  EXPECT_EQ(pc.reference_deformed.kind, FrameKind::kReferenceDeformed);
  EXPECT_EQ(pc.truth.size(), 1350);
  EXPECT_GT(pc.truth.sum(), 0.0);
  EXPECT_EQ(simulate_phantom(g, phs[1], 1, s).touched.voltages, pc.touched.voltages);
}
