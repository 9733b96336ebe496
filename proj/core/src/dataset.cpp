#include "eskin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "eskin/binary_io.hpp"
#include "eskin/error.hpp"

namespace eskin {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kShardMagic = "ESKSHD01";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Box-Muller from the portable uniform, so noise is identical across
// standard libraries.
double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int unit(int r, int c) { return r * kUnitCols + c; }

std::string pad3(int v) {
  char s[8];
  std::snprintf(s, sizeof s, "%03d", v);
  return s;
}

}  // namespace

const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::kSingleUnit: return "single_unit";
    case PatternKind::kSquare: return "square";
    case PatternKind::kRandomUnits: return "random_units";
    case PatternKind::kPhantom: return "phantom";
  }
  return "?";
}

PatternKind pattern_kind_from_string(const std::string& s) {
  for (auto k : {PatternKind::kSingleUnit, PatternKind::kSquare, PatternKind::kRandomUnits, PatternKind::kPhantom})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown pattern kind '" + s + "'");
}

void validate(const TouchPattern& p) {
  for (int u : p.units)
    if (u < 0 || u >= kUnitCount) throw InvalidArgument("pattern " + p.id + ": unit " + std::to_string(u) + " out of range");
  if (!std::is_sorted(p.units.begin(), p.units.end()) ||
      std::adjacent_find(p.units.begin(), p.units.end()) != p.units.end())
    throw InvalidArgument("pattern " + p.id + ": units must be sorted and distinct");
  const int n = static_cast<int>(p.units.size());
  switch (p.kind) {
    case PatternKind::kSingleUnit:
      if (n != 1) throw InvalidArgument("pattern " + p.id + ": single_unit needs exactly one unit");
      break;
    case PatternKind::kSquare: {
      const int s = static_cast<int>(std::lround(std::sqrt(n)));
      if (s * s != n || s < 2 || s > kUnitRows) throw InvalidArgument("pattern " + p.id + ": not an s x s block");
      const int r0 = p.units.front() / kUnitCols, c0 = p.units.front() % kUnitCols;
      if (r0 + s > kUnitRows || c0 + s > kUnitCols) throw InvalidArgument("pattern " + p.id + ": block leaves the grid");
      for (int i = 0; i < n; ++i)
        if (p.units[i] != unit(r0 + i / s, c0 + i % s))
          throw InvalidArgument("pattern " + p.id + ": units are not a contiguous block");
      break;
    }
    case PatternKind::kRandomUnits:
      if (n < 2 || n > 4) throw InvalidArgument("pattern " + p.id + ": random_units needs 2 to 4 units");
      break;
    case PatternKind::kPhantom:
      break;
  }
}

std::vector<TouchPattern> enumerate_patterns(PatternKind kind, int count_for_random, std::uint64_t seed) {
  std::vector<TouchPattern> out;
  switch (kind) {
    case PatternKind::kSingleUnit:
      for (int u = 0; u < kUnitCount; ++u) out.push_back({kind, {u}, "u" + pad3(u)});
      break;
    case PatternKind::kSquare:
      for (int s = 2; s <= kUnitRows; ++s)
        for (int r = 0; r + s <= kUnitRows; ++r)
          for (int c = 0; c + s <= kUnitCols; ++c) {
            TouchPattern p{kind, {}, "sq" + std::to_string(s) + "_r" + std::to_string(r) + "_c" + std::to_string(c)};
            for (int i = 0; i < s; ++i)
              for (int j = 0; j < s; ++j) p.units.push_back(unit(r + i, c + j));
            out.push_back(std::move(p));
          }
      break;
    case PatternKind::kRandomUnits: {
      if (count_for_random < 0) throw InvalidArgument("random pattern count must be non-negative");
      std::mt19937_64 rng(splitmix64(seed ^ 0x72616e646f6dULL));
      std::set<std::vector<int>> seen;
      std::vector<int> pool(kUnitCount);
      while (static_cast<int>(out.size()) < count_for_random) {
        const int n = 2 + static_cast<int>(rng() % 3);
        for (int i = 0; i < kUnitCount; ++i) pool[i] = i;
        for (int i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng() % static_cast<std::uint64_t>(kUnitCount - i)]);
        std::vector<int> units(pool.begin(), pool.begin() + n);
        std::sort(units.begin(), units.end());
        if (!seen.insert(units).second) continue;
        out.push_back({kind, units, "rnd" + pad3(static_cast<int>(out.size()))});
      }
      break;
    }
    case PatternKind::kPhantom:
      for (const auto& ph : held_out_phantoms()) out.push_back({kind, ph.units, ph.id});
      break;
  }
  return out;
}

FieldAndTarget pattern_to_field(const TouchPattern& p, const ReconGrid& grid, double background, double touched) {
  FieldAndTarget f{ConductivityField::uniform(grid.lattice, background),
                   Eigen::VectorXd::Zero(grid.point_count())};
  std::vector<char> hit(grid.unit_count(), 0);
  for (int u : p.units) hit.at(u) = 1;
  for (int q = 0; q < grid.point_count(); ++q)
    if (hit[grid.unit_of_point[q]]) {
      f.field.values[q] = touched;
      f.target[q] = 1.0;
    }
  return f;
}

MeasurementFrame add_noise(const MeasurementFrame& frame, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db)) throw InvalidArgument("SNR must not be NaN");
  MeasurementFrame out = frame;
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const double power = frame.voltages.squaredNorm() / static_cast<double>(frame.voltages.size());
  const double sigma = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
  std::mt19937_64 rng(seed);
  for (Eigen::Index k = 0; k < out.voltages.size(); ++k) out.voltages[k] += sigma * gaussian(rng);
  return out;
}

std::uint64_t sample_seed(std::uint64_t master, int bend_index, int pattern_index) {
  const std::uint64_t counter = (static_cast<std::uint64_t>(bend_index) << 32) | static_cast<std::uint32_t>(pattern_index);
  return splitmix64(splitmix64(master) ^ counter);
}

std::vector<Phantom> held_out_phantoms() {
  using RC = std::vector<std::pair<int, int>>;
  auto block = [](int r0, int r1, int c0, int c1) {
    RC v;
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) v.push_back({r, c});
    return v;
  };
  auto join = [](RC a, const RC& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const double s = std::numbers::pi / 6.0;
  const std::vector<std::pair<double, RC>> spec = {
      {0.0, join(block(3, 4, 2, 4), block(3, 4, 9, 11))},
      {2 * s, block(4, 4, 4, 9)},
      {2 * s, join({{2, 2}, {2, 3}}, block(4, 6, 9, 10))},
      {3 * s, block(1, 1, 3, 10)},
      {3 * s, join(block(1, 2, 2, 4), block(6, 7, 9, 11))},
      {4 * s, {{6, 2}, {6, 3}, {6, 4}, {2, 9}, {2, 10}, {3, 9}, {3, 10}}},
      {4 * s, {{1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 1}, {6, 11}, {7, 11}, {7, 12}, {6, 12}, {5, 12}}},
      {4 * s, block(2, 4, 5, 8)},
  };
  std::vector<Phantom> out;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    Phantom p{"P" + std::to_string(i + 1), spec[i].first, {}};
    for (auto [r, c] : spec[i].second) p.units.push_back(unit(r, c));
    std::sort(p.units.begin(), p.units.end());
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------- spec

std::vector<double> DatasetSpec::default_bends() {
  const double s = std::numbers::pi / 6.0;
  return {0.0, s, 2 * s, 3 * s, 4 * s};
}

void DatasetSpec::validate() const {
  if (bends.empty()) throw ConfigError("dataset.bends must list at least one bend angle");
  for (double b : bends)
    if (!(b >= 0.0 && b <= std::numbers::pi)) throw ConfigError("dataset.bends entries must lie in [0, pi]");
  if (kinds.empty()) throw ConfigError("dataset.kinds must not be empty");
  if (random_count < 0) throw ConfigError("dataset.random_count must be non-negative");
  if (std::isnan(snr_db)) throw ConfigError("dataset.snr_db must be a number");
  if (mesh_vertices < kMinMeshVertices)
    throw ConfigError("dataset.mesh_vertices must be at least " + std::to_string(kMinMeshVertices));
  if (!(current_mA > 0.0)) throw ConfigError("dataset.current_mA must be positive");
}

std::vector<TouchPattern> DatasetSpec::patterns() const {
  std::vector<TouchPattern> out;
  for (auto k : kinds) {
    auto p = enumerate_patterns(k, random_count, seed);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

namespace {

const char* axis_name(BendAxis a) { return a == BendAxis::kAlongHeight ? "height" : "width"; }

BendAxis axis_from_name(const std::string& s) {
  if (s == "height") return BendAxis::kAlongHeight;
  if (s == "width") return BendAxis::kAlongWidth;
  throw ConfigError("unknown bend axis '" + s + "'");
}

json spec_to_json(const DatasetSpec& s) {
  json kinds = json::array();
  for (auto k : s.kinds) kinds.push_back(to_string(k));
  return {{"bends", s.bends},
          {"kinds", kinds},
          {"random_count", s.random_count},
          // JSON has no infinity.
          {"snr_db", std::isinf(s.snr_db) ? json(nullptr) : json(s.snr_db)},
          {"seed", s.seed},
          {"mesh_vertices", s.mesh_vertices},
          {"current_mA", s.current_mA},
          {"axis", axis_name(s.axis)}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.bends = j.at("bends").get<std::vector<double>>();
  s.kinds.clear();
  for (const auto& k : j.at("kinds")) s.kinds.push_back(pattern_kind_from_string(k.get<std::string>()));
  s.random_count = j.at("random_count").get<int>();
  s.snr_db = j.at("snr_db").is_null() ? std::numeric_limits<double>::infinity() : j.at("snr_db").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.mesh_vertices = j.at("mesh_vertices").get<int>();
  s.current_mA = j.at("current_mA").get<double>();
  s.axis = axis_from_name(j.at("axis").get<std::string>());
  return s;
}

DeformationState bend_state(const DatasetSpec& spec, double angle) {
  DeformationState d;
  d.bend_angle = angle;
  d.axis = spec.axis;
  return d;
}

}  // namespace

// ------------------------------------------------------------ generation

// Shard layout (little-endian):
//   framed header, magic ESKSHD01, JSON with count, shapes and per-sample ids
//   descriptor: rows * cols float64, row-major (shared by the shard's samples)
//   per sample: voltage_len float64 dv, then target_len uint8 target
Manifest generate(const DatasetSpec& spec, const SensorGeometry& g, const std::string& out_dir, const Logger& log) {
  spec.validate();
  fs::create_directories(out_dir);
  const SensingProtocol protocol = make_adjacent_protocol(g.electrode_count);
  const Lattice lattice;
  const auto patterns = spec.patterns();

  const Mesh flat_mesh = make_mesh(g, DeformationState{}, spec.mesh_vertices);
  const MeasurementFrame reference = solve_frame(flat_mesh, ConductivityField::uniform(lattice, 1.0), protocol,
                                                 spec.current_mA, FrameKind::kReferenceFlat);

  Manifest man;
  man.spec = spec;
  for (std::size_t b = 0; b < spec.bends.size(); ++b) {
    const DeformationState state = bend_state(spec, spec.bends[b]);
    const Mesh mesh = make_mesh(g, state, spec.mesh_vertices);
    const ReconGrid grid = make_recon_grid(g, state);
    const DeformationDescriptor desc = analytic_descriptor(g, state, lattice);

    json samples = json::array();
    std::vector<Eigen::VectorXd> dvs;
    std::vector<std::vector<std::uint8_t>> targets;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      const auto& p = patterns[i];
      const std::uint64_t seed = sample_seed(spec.seed, static_cast<int>(b), static_cast<int>(i));
      try {
        const auto ft = pattern_to_field(p, grid);
        const auto touched = add_noise(solve_frame(mesh, ft.field, protocol, spec.current_mA), spec.snr_db, seed);
        Eigen::VectorXd dv = normalized_difference(touched, reference);
        if (!dv.allFinite()) throw NumericalError("non-finite voltage difference");
        std::vector<std::uint8_t> t(ft.target.size());
        for (Eigen::Index q = 0; q < ft.target.size(); ++q) t[q] = ft.target[q] > 0.5 ? 1 : 0;
        dvs.push_back(std::move(dv));
        targets.push_back(std::move(t));
        samples.push_back({{"id", p.id}, {"kind", to_string(p.kind)}, {"units", p.units}, {"noise_seed", hex64(seed)}});
      } catch (const NumericalError& e) {
        man.skipped.push_back(std::to_string(b) + "/" + p.id + ": " + e.what());
        if (log) log("skipped " + man.skipped.back());
      }
    }

    const std::string name = "bend_" + std::to_string(b) + ".shd";
    const std::string path = (fs::path(out_dir) / name).string();
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw IoError("cannot write " + path);
      const json h = {{"format", "eskin-shard"},
                      {"version", 1},
                      {"bend_index", b},
                      {"bend_angle", spec.bends[b]},
                      {"axis", axis_name(spec.axis)},
                      {"count", dvs.size()},
                      {"voltage_len", protocol.independent_count()},
                      {"rows", desc.rows},
                      {"cols", desc.cols},
                      {"target_len", lattice.size()},
                      {"reference_kind", to_string(reference.kind)},
                      {"reference_mesh", hex64(flat_mesh.id)},
                      {"mesh", hex64(mesh.id)},
                      {"grid", hex64(grid.id)},
                      {"samples", samples}};
      write_framed_header(out, kShardMagic, h.dump());
      const Eigen::VectorXd flat_desc = desc.flatten();
      write_array<double>(out, {flat_desc.data(), static_cast<std::size_t>(flat_desc.size())});
      for (std::size_t s = 0; s < dvs.size(); ++s) {
        write_array<double>(out, {dvs[s].data(), static_cast<std::size_t>(dvs[s].size())});
        write_array<std::uint8_t>(out, {targets[s].data(), targets[s].size()});
      }
      if (!out) throw IoError("write failed for " + path);
    }
    man.shards.push_back({name, spec.bends[b], static_cast<int>(dvs.size()), hex64(hash_file(path))});
    man.total_samples += static_cast<int>(dvs.size());
    if (log) log("bend " + std::to_string(spec.bends[b]) + ": " + std::to_string(dvs.size()) + " samples -> " + name);
  }

  json shards = json::array();
  for (const auto& s : man.shards)
    shards.push_back({{"file", s.file}, {"bend_angle", s.bend_angle}, {"count", s.count}, {"hash", s.hash}});
  const json mj = {{"format", "eskin-dataset"},
                   {"version", man.version},
                   {"spec", spec_to_json(spec)},
                   {"geometry",
                    {{"width", g.width},
                     {"height", g.height},
                     {"thickness", g.thickness},
                     {"electrode_count", g.electrode_count},
                     {"layer_offset", g.layer_offset}}},
                   {"reference_kind", man.reference_kind},
                   {"total_samples", man.total_samples},
                   {"shards", shards},
                   {"skipped", man.skipped}};
  const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream mo(mpath);
  if (!mo) throw IoError("cannot write " + mpath);
  mo << mj.dump(2) << "\n";
  if (!mo) throw IoError("write failed for " + mpath);
  return man;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open dataset manifest " + path);
  json j;
  try {
    j = json::parse(in);
    Manifest m;
    if (j.at("format").get<std::string>() != "eskin-dataset") throw IoError(path + ": not a dataset manifest");
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw IoError(path + ": unsupported manifest version");
    m.spec = spec_from_json(j.at("spec"));
    m.reference_kind = j.at("reference_kind").get<std::string>();
    m.total_samples = j.at("total_samples").get<int>();
    for (const auto& s : j.at("shards"))
      m.shards.push_back({s.at("file").get<std::string>(), s.at("bend_angle").get<double>(), s.at("count").get<int>(),
                          s.at("hash").get<std::string>()});
    m.skipped = j.at("skipped").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw IoError(path + ": malformed manifest: " + e.what());
  }
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  ds.manifest = read_manifest((fs::path(dir) / "manifest.json").string());
  if (ds.manifest.reference_kind != to_string(FrameKind::kReferenceFlat))
    throw ConfigError("VD2T requires the flat reference");
  const Lattice lattice;
  const int n = ds.manifest.total_samples;
  const int nv = make_adjacent_protocol().independent_count();
  const int nd = lattice.size();
  ds.data.dv.resize(nv, n);
  ds.data.deform.resize(nd, n);
  ds.data.target.resize(nd, n);
  int col = 0;
  for (const auto& s : ds.manifest.shards) {
    const std::string path = (fs::path(dir) / s.file).string();
    if (hex64(hash_file(path)) != s.hash) throw ProvenanceMismatch(path + ": hash differs from the manifest");
    std::ifstream in(path, std::ios::binary);
    const json h = json::parse(read_framed_header(in, kShardMagic, path));
    if (h.at("reference_kind").get<std::string>() != to_string(FrameKind::kReferenceFlat))
      throw ConfigError("VD2T requires the flat reference");
    const int count = h.at("count").get<int>();
    if (count != s.count || col + count > n) throw ProvenanceMismatch(path + ": sample count differs from the manifest");
    if (h.at("voltage_len").get<int>() != nv || h.at("rows").get<int>() * h.at("cols").get<int>() != nd ||
        h.at("target_len").get<int>() != nd)
      throw ProvenanceMismatch(path + ": sample shapes differ from this build");
    Eigen::VectorXd desc(nd);
    read_array<double>(in, {desc.data(), static_cast<std::size_t>(nd)});
    std::vector<std::uint8_t> t(nd);
    const auto& samples = h.at("samples");
    for (int k = 0; k < count; ++k, ++col) {
      read_array<double>(in, {ds.data.dv.col(col).data(), static_cast<std::size_t>(nv)});
      read_array<std::uint8_t>(in, {t.data(), t.size()});
      ds.data.deform.col(col) = desc;
      for (int q = 0; q < nd; ++q) ds.data.target(q, col) = t[q];
      ds.meta.push_back({s.bend_angle, samples[k].at("id").get<std::string>(),
                         std::stoull(samples[k].at("noise_seed").get<std::string>(), nullptr, 16)});
    }
  }
  if (col != n) throw ProvenanceMismatch(dir + ": manifest lists " + std::to_string(n) + " samples, shards hold " +
                                         std::to_string(col));
  return ds;
}

PhantomCase simulate_phantom(const SensorGeometry& g, const Phantom& p, int index, const DatasetSpec& spec) {
  const SensingProtocol protocol = make_adjacent_protocol(g.electrode_count);
  const Lattice lattice;
  PhantomCase pc;
  pc.phantom = p;
  pc.state = bend_state(spec, p.bend_angle);
  pc.state.label = p.id;
  const auto uniform = ConductivityField::uniform(lattice, 1.0);
  const Mesh flat_mesh = make_mesh(g, DeformationState{}, spec.mesh_vertices);
  pc.reference_flat = solve_frame(flat_mesh, uniform, protocol, spec.current_mA, FrameKind::kReferenceFlat);
  const Mesh mesh = make_mesh(g, pc.state, spec.mesh_vertices);
  pc.reference_deformed = solve_frame(mesh, uniform, protocol, spec.current_mA, FrameKind::kReferenceDeformed);
  const ReconGrid grid = make_recon_grid(g, pc.state);
  const auto ft = pattern_to_field({PatternKind::kPhantom, p.units, p.id}, grid);
  // Bend index -1 keeps phantom noise streams apart from the training set's.
  pc.touched = add_noise(solve_frame(mesh, ft.field, protocol, spec.current_mA), spec.snr_db,
                         sample_seed(spec.seed, -1, index));
  pc.descriptor = analytic_descriptor(g, pc.state, lattice);
  pc.truth = ft.target;
  return pc;
}

}  // namespace eskin
