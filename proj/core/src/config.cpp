#include "eskin/config.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "eskin/error.hpp"

namespace eskin {

using json = nlohmann::json;

const ReconParams& SolverConfig::params(ReconMethod m) const {
  switch (m) {
    case ReconMethod::kTikhonov: return tikhonov;
    case ReconMethod::kL1: return l1;
    case ReconMethod::kSbl: return sbl;
  }
  return tikhonov;
}

std::string PathsConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (std::filesystem::path(out_dir) / path).string();
}

namespace {

// Visits every key of an object block; unknown keys are errors.
template <typename F>
void each_key(const json& j, const std::string& block, F&& f) {
  if (!j.is_object()) throw ConfigError("'" + block + "' must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    const std::string full = block.empty() ? key : block + "." + key;
    try {
      if (!f(key, v)) throw ConfigError("unknown key '" + full + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + full + "': " + e.what());
    }
  }
}

json geometry_json(const SensorGeometry& g) {
  return {{"width", g.width},
          {"height", g.height},
          {"thickness", g.thickness},
          {"electrode_count", g.electrode_count},
          {"electrode_contact", g.electrode_contact},
          {"layer_offset", g.layer_offset}};
}

SensorGeometry parse_geometry(const json& j) {
  SensorGeometry d = make_geometry();
  double width = d.width, height = d.height;
  int electrodes = d.electrode_count;
  each_key(j, "geometry", [&](const std::string& k, const json& v) {
    if (k == "width") width = v.get<double>();
    else if (k == "height") height = v.get<double>();
    else if (k == "thickness") d.thickness = v.get<double>();
    else if (k == "electrode_count") electrodes = v.get<int>();
    else if (k == "electrode_contact") d.electrode_contact = v.get<double>();
    else if (k == "layer_offset") d.layer_offset = v.get<double>();
    else return false;
    return true;
  });
  if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("geometry.width and geometry.height must be positive");
  if (!(d.thickness > 0.0)) throw ConfigError("geometry.thickness must be positive");
  if (electrodes < 4) throw ConfigError("geometry.electrode_count must be at least 4");
  SensorGeometry g;
  try {
    g = make_geometry(width, height, electrodes);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  g.thickness = d.thickness;
  g.electrode_contact = d.electrode_contact;
  g.layer_offset = d.layer_offset;
  return g;
}

json recon_json(const ReconParams& p) {
  switch (p.method) {
    case ReconMethod::kTikhonov: return {{"tau", p.reg_factor}};
    case ReconMethod::kL1: return {{"tau", p.reg_factor}, {"max_iters", p.max_iters}};
    case ReconMethod::kSbl:
      return {{"max_iters", p.max_iters},
              {"cluster_size", p.cluster_size},
              {"tolerance", p.tolerance},
              {"coupling", p.coupling},
              {"noise_variance", p.noise_variance ? json(*p.noise_variance) : json(nullptr)}};
  }
  return {};
}

// Only the fields that mean something for the method are accepted.
ReconParams parse_recon(const json& j, ReconMethod m) {
  ReconParams p = ReconParams::defaults(m);
  const std::string block = std::string("solver.") + to_string(m);
  each_key(j, block, [&](const std::string& k, const json& v) {
    if (k == "tau" && m != ReconMethod::kSbl) p.reg_factor = v.get<double>();
    else if (k == "max_iters" && m != ReconMethod::kTikhonov) p.max_iters = v.get<int>();
    else if (k == "cluster_size" && m == ReconMethod::kSbl) p.cluster_size = v.get<int>();
    else if (k == "tolerance" && m == ReconMethod::kSbl) p.tolerance = v.get<double>();
    else if (k == "coupling" && m == ReconMethod::kSbl) p.coupling = v.get<double>();
    else if (k == "noise_variance" && m == ReconMethod::kSbl) {
      if (v.is_null()) p.noise_variance.reset();
      else p.noise_variance = v.get<double>();
    } else return false;
    return true;
  });
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(block + ": " + e.what());
  }
  return p;
}

json dataset_json(const DatasetSpec& s) {
  json kinds = json::array();
  for (auto k : s.kinds) kinds.push_back(to_string(k));
  return {{"kinds", kinds},
          {"random_count", s.random_count},
          {"snr_db", std::isinf(s.snr_db) ? json(nullptr) : json(s.snr_db)},
          {"seed", s.seed},
          {"mesh_vertices", s.mesh_vertices},
          {"current_mA", s.current_mA},
          {"axis", s.axis == BendAxis::kAlongHeight ? "height" : "width"}};
}

void parse_dataset(const json& j, DatasetSpec& s) {
  each_key(j, "dataset", [&](const std::string& k, const json& v) {
    if (k == "kinds") {
      s.kinds.clear();
      for (const auto& e : v) {
        const auto kind = pattern_kind_from_string(e.get<std::string>());
        if (kind == PatternKind::kPhantom) throw ConfigError("dataset.kinds: held-out phantoms cannot be training data");
        s.kinds.push_back(kind);
      }
    } else if (k == "random_count") s.random_count = v.get<int>();
    else if (k == "snr_db") s.snr_db = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
    else if (k == "seed") s.seed = v.get<std::uint64_t>();
    else if (k == "mesh_vertices") s.mesh_vertices = v.get<int>();
    else if (k == "current_mA") s.current_mA = v.get<double>();
    else if (k == "axis") {
      const auto a = v.get<std::string>();
      if (a == "height") s.axis = BendAxis::kAlongHeight;
      else if (a == "width") s.axis = BendAxis::kAlongWidth;
      else throw ConfigError("dataset.axis must be 'height' or 'width'");
    } else return false;
    return true;
  });
}

json paths_json(const PathsConfig& p) {
  return {{"out_dir", p.out_dir},     {"dataset", p.dataset},     {"checkpoint", p.checkpoint},
          {"loss_csv", p.loss_csv},   {"jacobians", p.jacobians}, {"results", p.results}};
}

void parse_paths(const json& j, PathsConfig& p) {
  each_key(j, "paths", [&](const std::string& k, const json& v) {
    std::string* field = k == "out_dir"      ? &p.out_dir
                         : k == "dataset"    ? &p.dataset
                         : k == "checkpoint" ? &p.checkpoint
                         : k == "loss_csv"   ? &p.loss_csv
                         : k == "jacobians"  ? &p.jacobians
                         : k == "results"    ? &p.results
                                             : nullptr;
    if (!field) return false;
    *field = v.get<std::string>();
    if (field->empty()) throw ConfigError("paths." + k + " must not be empty");
    return true;
  });
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + key + "': '" + parts[i] + "' is not a block");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c;
  each_key(root, "", [&](const std::string& k, const json& v) {
    if (k == "geometry") c.geometry = parse_geometry(v);
    else if (k == "bends") c.dataset.bends = v.get<std::vector<double>>();
    else if (k == "dataset") parse_dataset(v, c.dataset);
    else if (k == "solver") {
      each_key(v, "solver", [&](const std::string& s, const json& b) {
        if (s == "jacobian_vertices") c.solver.jacobian_vertices = b.get<int>();
        else if (s == "tikhonov") c.solver.tikhonov = parse_recon(b, ReconMethod::kTikhonov);
        else if (s == "l1") c.solver.l1 = parse_recon(b, ReconMethod::kL1);
        else if (s == "sbl") c.solver.sbl = parse_recon(b, ReconMethod::kSbl);
        else return false;
        return true;
      });
    } else if (k == "model") c.model = vd2t_config_from_json(v.dump());
    else if (k == "paths") parse_paths(v, c.paths);
    else return false;
    return true;
  });
  c.dataset.validate();
  if (c.solver.jacobian_vertices < kMinMeshVertices)
    throw ConfigError("solver.jacobian_vertices must be at least " + std::to_string(kMinMeshVertices));
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_run_config("", overrides);
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string to_json(const RunConfig& c) {
  const json j = {{"geometry", geometry_json(c.geometry)},
                  {"bends", c.dataset.bends},
                  {"dataset", dataset_json(c.dataset)},
                  {"solver",
                   {{"jacobian_vertices", c.solver.jacobian_vertices},
                    {"tikhonov", recon_json(c.solver.tikhonov)},
                    {"l1", recon_json(c.solver.l1)},
                    {"sbl", recon_json(c.solver.sbl)}}},
                  {"model", json::parse(to_json(c.model))},
                  {"paths", paths_json(c.paths)}};
  return j.dump(2);
}

}  // namespace eskin
