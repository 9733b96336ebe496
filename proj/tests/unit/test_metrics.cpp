#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "eskin/error.hpp"
#include "eskin/metrics.hpp"

using namespace eskin;
using Eigen::VectorXd;

namespace {

VectorXd noise(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Two rectangles of ones on the lattice, columns [c0, c1) each.
VectorXd two_blocks(const Lattice& lat, int a0, int a1, int b0, int b1) {
  VectorXd v = VectorXd::Zero(lat.size());
  for (int r = 10; r < 17; ++r) {
    for (int c = a0; c < a1; ++c) v[r * lat.cols + c] = 1.0;
    for (int c = b0; c < b1; ++c) v[r * lat.cols + c] = 1.0;
  }
  return v;
}

}  // namespace

TEST(Cc, Identities) {
  const VectorXd x = noise(100, 1);
  EXPECT_NEAR(cc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(cc(x, -x), -1.0, 1e-15);
  EXPECT_NEAR(cc(x, (3.0 * x.array() + 2.0).matrix()), 1.0, 1e-14);
  EXPECT_THROW(cc(VectorXd::Ones(5), VectorXd::Constant(5, 2.0)), InvalidArgument);
  EXPECT_THROW(cc(x, noise(99, 2)), InvalidArgument);
  const double v = cc(x, noise(100, 3));
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
}

TEST(Psnr, Arithmetic) {
  VectorXd y = VectorXd::Zero(100);
  y[0] = 2.0;  // peak 2
  VectorXd x = y;
  x.array() += 0.2;  // MSE = 0.04 = peak^2 / 100
  EXPECT_NEAR(psnr(x, y).db, 20.0, 1e-12);
  const auto same = psnr(y, y);
  EXPECT_TRUE(same.infinite);
  EXPECT_TRUE(std::isinf(same.db));
}

TEST(Psnr, DoublingErrorsCostsSixDb) {
  const VectorXd y = noise(200, 4);
  const VectorXd x1 = y + 0.1 * noise(200, 5);
  const VectorXd x2 = y + 2.0 * (x1 - y);
  EXPECT_NEAR(psnr(x1, y).db - psnr(x2, y).db, 20.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(rie(x2, y), 2.0 * rie(x1, y), 1e-14);
}

TEST(Rie, Examples) {
  const VectorXd y = noise(50, 6);
  EXPECT_EQ(rie(y, y), 0.0);
  EXPECT_NEAR(rie(VectorXd::Zero(50), y), 1.0, 1e-15);
  EXPECT_NEAR(rie(2.0 * y, y), 1.0, 1e-15);
  EXPECT_THROW(rie(y, VectorXd::Zero(50)), InvalidArgument);
}

TEST(Metrics, PermutationInvariance) {
  const VectorXd y = noise(300, 7), x = y + 0.3 * noise(300, 8);
  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  VectorXd px(300), py(300);
  for (int i = 0; i < 300; ++i) {
    px[i] = x[perm[i]];
    py[i] = y[perm[i]];
  }
  EXPECT_NEAR(cc(px, py), cc(x, y), 1e-12);
  EXPECT_NEAR(psnr(px, py).db, psnr(x, y).db, 1e-10);
  EXPECT_NEAR(rie(px, py), rie(x, y), 1e-12);
}

TEST(DistanceError, WorkedExample) {
  EXPECT_NEAR(distance_error(86.7, 90.0), 0.0367, 5e-5);
  EXPECT_NEAR(distance_error(86.7, 90.0), 3.3 / 90.0, 1e-15);
  EXPECT_EQ(distance_error(90.0, 90.0), 0.0);
  EXPECT_THROW(distance_error(10.0, 0.0), InvalidArgument);
}

TEST(DistanceError, ComponentsAndGap) {
  const Lattice lat;
  // Gap of 20 empty columns at 3 mm pitch = 60 mm.
  const VectorXd v = two_blocks(lat, 5, 10, 30, 35);
  const auto comps = threshold_components(v, lat, 0.5);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].size(), 35u);
  EXPECT_NEAR(component_gap(lat, comps[0], comps[1]), 20 * lat.pitch_x(), 1e-9);
  const TactileMap map{lat, v};
  EXPECT_NEAR(measured_gap(map, 0.5), 60.0, 1e-9);
  EXPECT_NEAR(distance_error(map, 0.5, 60.0), 0.0, 1e-12);
}

TEST(DistanceError, NeedsTwoComponents) {
  const Lattice lat;
  VectorXd v = VectorXd::Zero(lat.size());
  v[400] = 1.0;
  try {
    measured_gap(TactileMap{lat, v}, 0.5);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(Report, TableMarksBest) {
  const VectorXd y = noise(100, 10);
  std::vector<MetricReport> rows{evaluate("P1", "tikhonov", y + 0.5 * noise(100, 11), y),
                                 evaluate("P1", "vd2t", y + 0.1 * noise(100, 12), y)};
  EXPECT_LT(rows[1].rie, rows[0].rie);
  const auto path = (std::filesystem::temp_directory_path() / "eskin_table.csv").string();
  write_metric_table(path, rows);
  std::ifstream in(path);
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(header, "phantom,method,cc,psnr_db,rie,best_cc,best_psnr,best_rie");
  EXPECT_NE(a.find(",0,0,0"), std::string::npos) << a;
  EXPECT_NE(b.find(",1,1,1"), std::string::npos) << b;
  std::filesystem::remove(path);
}
