#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "eskin/config.hpp"
#include "eskin/error.hpp"
#include "eskin/image.hpp"

using namespace eskin;

namespace {

std::string what_of(const std::string& text, const std::vector<std::string>& o = {}) {
  try {
    parse_run_config(text, o);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const auto c = parse_run_config("");
  EXPECT_EQ(c.dataset.bends.size(), 5u);
  EXPECT_EQ(c.solver.jacobian_vertices, 4000);
  EXPECT_DOUBLE_EQ(c.solver.tikhonov.reg_factor, 1e-3);
  EXPECT_EQ(c.solver.sbl.cluster_size, 4);
  EXPECT_EQ(c.model.batch_size, 512);
  EXPECT_EQ(c.paths.out_dir, "out");
}

TEST(Config, UnknownKeysNamed) {
  EXPECT_NE(what_of(R"({"bogus": 1})").find("'bogus'"), std::string::npos);
  EXPECT_NE(what_of(R"({"dataset": {"snr": 3}})").find("'dataset.snr'"), std::string::npos);
  EXPECT_NE(what_of(R"({"model": {"width": 3}})").find("model.width"), std::string::npos);
  // Method-specific fields stay with their method.
  EXPECT_NE(what_of(R"({"solver": {"tikhonov": {"coupling": 0.1}}})").find("solver.tikhonov.coupling"),
            std::string::npos);
  EXPECT_NE(what_of(R"({"solver": {"l1": {"cluster_size": 2}}})").find("solver.l1.cluster_size"), std::string::npos);
}

TEST(Config, BadValues) {
  EXPECT_FALSE(what_of("{not json").empty());
  EXPECT_FALSE(what_of("[1,2]").empty());
  EXPECT_FALSE(what_of(R"({"dataset": {"random_count": "many"}})").empty());
  EXPECT_FALSE(what_of(R"({"solver": {"sbl": {"coupling": 1.5}}})").empty());
  EXPECT_FALSE(what_of(R"({"bends": [7]})").empty());
  EXPECT_FALSE(what_of(R"({"dataset": {"kinds": ["phantom"]}})").empty());
}

TEST(Config, OverridesWin) {
  const auto c = parse_run_config(R"({"model": {"epochs": 10}, "dataset": {"snr_db": 40}})",
                                  {"model.epochs=3", "paths.out_dir=/tmp/x", "dataset.snr_db=null"});
  EXPECT_EQ(c.model.epochs, 3);
  EXPECT_EQ(c.paths.out_dir, "/tmp/x");
  EXPECT_TRUE(std::isinf(c.dataset.snr_db));
  EXPECT_NE(what_of("", {"model.epochz=3"}).find("model.epochz"), std::string::npos);
  EXPECT_FALSE(what_of("", {"novalue"}).empty());
}

TEST(Config, ResolvedRoundTrip) {
  const auto c = parse_run_config(R"({"model": {"pooling": "flatten", "lr": 0.001}, "bends": [0, 1]})");
  const auto text = to_json(c);
  EXPECT_EQ(to_json(parse_run_config(text)), text);
}

TEST(Config, PathsResolve) {
  PathsConfig p;
  p.out_dir = "/data/run";
  EXPECT_EQ(p.resolve("model.ckpt"), "/data/run/model.ckpt");
  EXPECT_EQ(p.resolve("/abs/x"), "/abs/x");
}

TEST(Config, MissingFile) { EXPECT_THROW(load_run_config("/nonexistent/eskin.json"), MissingInput); }

TEST(Image, HeatMapSizeAndScale) {
  TactileMap m{Lattice{}, Eigen::VectorXd::Zero(1350)};
  m.delta_sigma[0] = 1.0;  // bottom-left lattice point
  const auto img = render_heat_map(m, ColorScale::kUnit, 1);
  EXPECT_EQ(img.width, 50);
  EXPECT_EQ(img.height, 27);
  const auto big = render_heat_map(m, ColorScale::kSymmetric, 8);
  EXPECT_EQ(big.width, 400);
  EXPECT_EQ(big.height, 216);
  // Row 0 is drawn at the bottom.
  const auto px = [&](int x, int y) {
    const auto* p = &img.rgb[3 * (y * img.width + x)];
    return std::array<int, 3>{p[0], p[1], p[2]};
  };
  EXPECT_NE(px(0, 26), px(1, 26));
  EXPECT_EQ(px(0, 0), px(1, 0));
  const auto path = (std::filesystem::temp_directory_path() / "eskin.ppm").string();
  write_ppm(path, img);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 50);
  EXPECT_EQ(h, 27);
  EXPECT_EQ(std::filesystem::file_size(path), static_cast<std::uintmax_t>(in.tellg()) + 1 + 50 * 27 * 3);
  std::filesystem::remove(path);
}
