#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eskin/forward.hpp"
#include "eskin/geometry.hpp"

namespace eskin {

enum class ReconMethod { kTikhonov, kL1, kSbl };

const char* to_string(ReconMethod m);
ReconMethod recon_method_from_string(const std::string& s);

struct ReconParams {
  ReconMethod method = ReconMethod::kTikhonov;
  double reg_factor = 1e-3;
  int max_iters = 400;
  // Pattern-coupled SBL only.
  int cluster_size = 4;
  double tolerance = 1e-4;
  double coupling = 0.3;
  // SBL noise variance; re-estimated every iteration when absent.
  std::optional<double> noise_variance;

  // Comparison settings: Tikhonov tau 1e-3; l1 tau 1e-3 with 400
  // iterations; SBL 5 iterations, cluster 4, tolerance 1e-4, coupling 0.3.
  static ReconParams defaults(ReconMethod method);
  void validate() const;
};

// Normalised conductivity change on the reconstruction lattice.
struct TactileMap {
  Lattice lattice;
  Eigen::VectorXd delta_sigma;

  int size() const { return static_cast<int>(delta_sigma.size()); }
};

using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// argmin ||J x - dv||^2 + tau ||x||^2.
Eigen::VectorXd tikhonov(const MatrixRef& j, const VectorRef& dv, double tau);

struct L1Result {
  Eigen::VectorXd x;
  int iterations = 0;
  double lipschitz = 0.0;
  // Objective after every iteration; non-increasing.
  std::vector<double> objective;
};

// Largest eigenvalue of J^T J by power iteration from a fixed start vector.
double power_iteration_lipschitz(const MatrixRef& j, int iterations = 20);

// Accelerated proximal gradient on 1/2 ||J x - dv||^2 + tau ||x||_1, restarting the
// momentum whenever the objective would rise, so the objective never does.
// Stops at max_iters or when the relative objective change drops below 1e-8.
L1Result l1_solve(const MatrixRef& j, const VectorRef& dv, double tau, int max_iters);

double l1_objective(const MatrixRef& j, const VectorRef& dv, double tau, const VectorRef& x);
// One proximal gradient step with step size 1 / lipschitz.
Eigen::VectorXd l1_prox_step(const MatrixRef& j, const VectorRef& dv, double tau, const VectorRef& x,
                             double lipschitz);

struct SblResult {
  Eigen::VectorXd x;
  Eigen::VectorXd alpha;
  double noise_variance = 0.0;
  int iterations = 0;
};

// Pattern-coupled sparse Bayesian learning. Each point's prior precision is
// (1 - coupling) * alpha_q + coupling * mean(alpha over its cluster), with
// clusters formed by consecutive blocks of cluster_size points. Returns
// the posterior mean.
SblResult sbl_solve(const MatrixRef& j, const VectorRef& dv, const ReconParams& p);

Eigen::VectorXd solve(const MatrixRef& j, const VectorRef& dv, const ReconParams& p);

// Normalised difference followed by the selected solver. When
// expected_mesh_id is given, the Jacobian must have been computed on that
// mesh.
TactileMap reconstruct(const MeasurementFrame& touched, const MeasurementFrame& reference, const Jacobian& j,
                       const Lattice& lattice, const ReconParams& p,
                       std::optional<std::uint64_t> expected_mesh_id = std::nullopt);

void write_map_csv(const std::string& path, const TactileMap& map);
TactileMap read_map_csv(const std::string& path, const Lattice& lattice);

}  // namespace eskin
