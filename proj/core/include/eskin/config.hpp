#pragma once

#include <string>
#include <vector>

#include "eskin/dataset.hpp"
#include "eskin/geometry.hpp"
#include "eskin/recon.hpp"
#include "eskin/vd2t.hpp"

namespace eskin {

// The only environment input: replaces paths.out_dir.
inline constexpr const char* kOutDirEnv = "ESKIN_OUT_DIR";

struct SolverConfig {
  // Coarse mesh for the Jacobian, distinct from the data mesh.
  int jacobian_vertices = 4000;
  ReconParams tikhonov = ReconParams::defaults(ReconMethod::kTikhonov);
  ReconParams l1 = ReconParams::defaults(ReconMethod::kL1);
  ReconParams sbl = ReconParams::defaults(ReconMethod::kSbl);

  const ReconParams& params(ReconMethod m) const;
};

// Relative entries resolve against out_dir.
struct PathsConfig {
  std::string out_dir = "out";
  std::string dataset = "dataset";
  std::string checkpoint = "model.ckpt";
  std::string loss_csv = "loss.csv";
  std::string jacobians = "jacobians";
  std::string results = "results";

  std::string resolve(const std::string& p) const;
};

struct RunConfig {
  SensorGeometry geometry = make_geometry();
  DatasetSpec dataset;
  SolverConfig solver;
  Vd2tConfig model;
  PathsConfig paths;
};

// Parses a JSON document over the defaults. Every key must be known;
// overrides are "dotted.key=value" with value parsed as JSON, else taken as
// a string. Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
// Empty path means defaults. Throws MissingInput for an unreadable file.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Fully resolved config, every field present.
std::string to_json(const RunConfig& c);

}  // namespace eskin
