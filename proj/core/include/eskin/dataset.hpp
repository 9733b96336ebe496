#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eskin/forward.hpp"
#include "eskin/geometry.hpp"
#include "eskin/pointcloud.hpp"
#include "eskin/vd2t.hpp"

namespace eskin {

enum class PatternKind { kSingleUnit, kSquare, kRandomUnits, kPhantom };

const char* to_string(PatternKind k);
PatternKind pattern_kind_from_string(const std::string& s);

// Units are indexed r * kUnitCols + c on the 9 x 14 unit grid, sorted.
struct TouchPattern {
  PatternKind kind = PatternKind::kSingleUnit;
  std::vector<int> units;
  std::string id;
};

// Throws InvalidArgument when the units break the kind's shape rule.
void validate(const TouchPattern& p);

// single_unit: all 126. square: every s x s block, 2 <= s <= 9, that fits.
// random_units: `count_for_random` distinct sets of 2-4 units.
std::vector<TouchPattern> enumerate_patterns(PatternKind kind, int count_for_random = 0, std::uint64_t seed = 0);

struct FieldAndTarget {
  ConductivityField field;
  // 1 at lattice points owned by touched units, 0 elsewhere.
  Eigen::VectorXd target;
};

FieldAndTarget pattern_to_field(const TouchPattern& p, const ReconGrid& grid, double background = 1.0,
                                double touched = 50.0);

// Zero-mean Gaussian noise with variance mean(v^2) * 10^(-snr_db / 10).
// An infinite SNR returns the frame unchanged.
MeasurementFrame add_noise(const MeasurementFrame& frame, double snr_db, std::uint64_t seed);

// Counter-based per-sample seed: independent of generation order.
std::uint64_t sample_seed(std::uint64_t master, int bend_index, int pattern_index);

// Held-out evaluation shapes: at least 5 units, never a square block.
struct Phantom {
  std::string id;
  double bend_angle = 0.0;
  std::vector<int> units;
};

std::vector<Phantom> held_out_phantoms();

struct DatasetSpec {
  std::vector<double> bends;
  std::vector<PatternKind> kinds{PatternKind::kSingleUnit, PatternKind::kSquare, PatternKind::kRandomUnits};
  int random_count = 100;
  double snr_db = 50.0;
  std::uint64_t seed = 1;
  int mesh_vertices = 8671;
  double current_mA = 1.0;
  BendAxis axis = BendAxis::kAlongHeight;

  // {0, pi/6, pi/3, pi/2, 2 pi/3}.
  static std::vector<double> default_bends();
  DatasetSpec() : bends(default_bends()) {}
  // Throws ConfigError.
  void validate() const;
  // Patterns generated for every bend, in kind order.
  std::vector<TouchPattern> patterns() const;
};

struct ShardInfo {
  std::string file;
  double bend_angle = 0.0;
  int count = 0;
  std::string hash;
};

struct Manifest {
  int version = 1;
  DatasetSpec spec;
  int total_samples = 0;
  std::vector<ShardInfo> shards;
  // "bend_index/pattern_id: reason" for samples whose solve failed.
  std::vector<std::string> skipped;
  std::string reference_kind = "reference_flat";
};

using Logger = std::function<void(const std::string&)>;

// Writes one shard per bend plus manifest.json into out_dir (created).
// dv is taken against a single noiseless flat untouched reference frame;
// noise goes on the touched frame; the descriptor is analytic.
Manifest generate(const DatasetSpec& spec, const SensorGeometry& g, const std::string& out_dir,
                  const Logger& log = {});

Manifest read_manifest(const std::string& path);

struct SampleMeta {
  double bend_angle = 0.0;
  std::string pattern_id;
  std::uint64_t noise_seed = 0;
};

struct LoadedDataset {
  Manifest manifest;
  Vd2tData data;
  std::vector<SampleMeta> meta;
};

// Reads every shard listed in dir/manifest.json, verifying hashes and the
// flat-reference contract.
LoadedDataset load_dataset(const std::string& dir);

// Everything needed to reconstruct one phantom with any method.
struct PhantomCase {
  Phantom phantom;
  DeformationState state;
  MeasurementFrame touched;
  MeasurementFrame reference_flat;
  MeasurementFrame reference_deformed;
  DeformationDescriptor descriptor;
  Eigen::VectorXd truth;
};

// Simulated on the data mesh with the configured noise level. The noise seed is
// derived from spec.seed and the phantom's position in the list.
PhantomCase simulate_phantom(const SensorGeometry& g, const Phantom& p, int index, const DatasetSpec& spec);

}  // namespace eskin
