#include "eskin/recon.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "eskin/binary_io.hpp"
#include "eskin/error.hpp"

namespace eskin {

namespace {

constexpr double kAlphaMin = 1e-12;
constexpr double kAlphaMax = 1e12;
constexpr double kNoiseFloor = 1e-12;

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
  return v.unaryExpr([t](double a) { return a > t ? a - t : (a < -t ? a + t : 0.0); });
}

void check_shapes(const MatrixRef& j, const VectorRef& dv) {
  if (j.rows() != dv.size())
    throw InvalidArgument("Jacobian has " + std::to_string(j.rows()) + " rows but data has " +
                          std::to_string(dv.size()) + " entries");
}

}  // namespace

const char* to_string(ReconMethod m) {
  switch (m) {
    case ReconMethod::kTikhonov:
      return "tikhonov";
    case ReconMethod::kL1:
      return "l1";
    case ReconMethod::kSbl:
      return "sbl";
  }
  return "tikhonov";
}

ReconMethod recon_method_from_string(const std::string& s) {
  if (s == "tikhonov") return ReconMethod::kTikhonov;
  if (s == "l1") return ReconMethod::kL1;
  if (s == "sbl") return ReconMethod::kSbl;
  throw InvalidArgument("unknown reconstruction method '" + s + "'");
}

ReconParams ReconParams::defaults(ReconMethod method) {
  ReconParams p;
  p.method = method;
  switch (method) {
    case ReconMethod::kTikhonov:
      p.reg_factor = 1e-3;
      break;
    case ReconMethod::kL1:
      p.reg_factor = 1e-3;
      p.max_iters = 400;
      break;
    case ReconMethod::kSbl:
      p.max_iters = 5;
      p.cluster_size = 4;
      p.tolerance = 1e-4;
      p.coupling = 0.3;
      break;
  }
  return p;
}

void ReconParams::validate() const {
  switch (method) {
    case ReconMethod::kTikhonov:
      if (!(reg_factor > 0.0)) throw InvalidArgument("Tikhonov regularisation factor must be positive");
      break;
    case ReconMethod::kL1:
      if (!(reg_factor > 0.0)) throw InvalidArgument("l1 regularisation factor must be positive");
      if (max_iters < 1) throw InvalidArgument("l1 needs at least one iteration");
      break;
    case ReconMethod::kSbl:
      if (cluster_size < 1) throw InvalidArgument("SBL cluster size must be at least 1");
      if (!(coupling >= 0.0 && coupling < 1.0)) throw InvalidArgument("SBL coupling must lie in [0, 1)");
      if (max_iters < 1) throw InvalidArgument("SBL needs at least one iteration");
      if (!(tolerance >= 0.0)) throw InvalidArgument("SBL tolerance must be non-negative");
      if (noise_variance && !(*noise_variance > 0.0)) throw InvalidArgument("SBL noise variance must be positive");
      break;
  }
}

Eigen::VectorXd tikhonov(const MatrixRef& j, const VectorRef& dv, double tau) {
  check_shapes(j, dv);
  if (!(tau > 0.0)) throw InvalidArgument("Tikhonov regularisation factor must be positive");
  // (J^T J + tau I)^-1 J^T = J^T (J J^T + tau I)^-1; the second form is
  // m x m with m the number of measurements.
  Eigen::MatrixXd gram = j * j.transpose();
  gram.diagonal().array() += tau;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("Tikhonov normal equations are not positive definite");
  Eigen::VectorXd x = j.transpose() * llt.solve(dv);
  if (!x.allFinite()) throw NumericalError("Tikhonov solve produced non-finite values");
  return x;
}

double power_iteration_lipschitz(const MatrixRef& j, int iterations) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(j.cols()) / std::sqrt(static_cast<double>(j.cols()));
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd w = j.transpose() * (j * v);
    lambda = v.dot(w);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
  }
  return lambda;
}

double l1_objective(const MatrixRef& j, const VectorRef& dv, double tau, const VectorRef& x) {
  return 0.5 * (j * x - dv).squaredNorm() + tau * x.lpNorm<1>();
}

Eigen::VectorXd l1_prox_step(const MatrixRef& j, const VectorRef& dv, double tau, const VectorRef& x,
                             double lipschitz) {
  const Eigen::VectorXd g = j.transpose() * (j * x - dv);
  return soft_threshold(x - g / lipschitz, tau / lipschitz);
}

L1Result l1_solve(const MatrixRef& j, const VectorRef& dv, double tau, int max_iters) {
  check_shapes(j, dv);
  if (!(tau > 0.0)) throw InvalidArgument("l1 regularisation factor must be positive");
  if (max_iters < 1) throw InvalidArgument("l1 needs at least one iteration");

  L1Result r;
  r.x = Eigen::VectorXd::Zero(j.cols());
  r.lipschitz = power_iteration_lipschitz(j, 20);
  if (r.lipschitz == 0.0) {
    r.iterations = 1;
    r.objective.push_back(l1_objective(j, dv, tau, r.x));
    return r;
  }

  Eigen::VectorXd x = r.x;
  Eigen::VectorXd y = x;
  double t = 1.0;
  double f_prev = l1_objective(j, dv, tau, x);
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd z = l1_prox_step(j, dv, tau, y, r.lipschitz);
    double fz = l1_objective(j, dv, tau, z);
    if (!std::isfinite(fz)) throw NumericalError("l1 solver diverged at iteration " + std::to_string(it));
    if (fz > f_prev) {
      // Function-value restart: drop the momentum and take a plain proximal
      // step from the last iterate, which cannot go uphill.
      t = 1.0;
      z = l1_prox_step(j, dv, tau, x, r.lipschitz);
      fz = std::min(l1_objective(j, dv, tau, z), f_prev);
      if (!std::isfinite(fz)) throw NumericalError("l1 solver diverged at iteration " + std::to_string(it));
    }
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / t_new) * (z - x);
    x = std::move(z);
    t = t_new;
    r.objective.push_back(fz);
    r.iterations = it;
    const double change = f_prev - fz;
    f_prev = fz;
    if (change <= 1e-8 * std::max(std::abs(fz + change), std::numeric_limits<double>::min())) break;
  }
  r.x = x;
  return r;
}

SblResult sbl_solve(const MatrixRef& j, const VectorRef& dv, const ReconParams& p) {
  check_shapes(j, dv);
  p.validate();
  const Eigen::Index m = j.rows();
  const Eigen::Index n = j.cols();
  const int cs = p.cluster_size;

  SblResult r;
  r.alpha = Eigen::VectorXd::Ones(n);
  r.noise_variance = p.noise_variance.value_or(std::max(0.1 * dv.squaredNorm() / m, kNoiseFloor));

  Eigen::VectorXd prior(n);
  Eigen::VectorXd mu(n);
  Eigen::VectorXd sigma_diag(n);
  // E-step: posterior mean and marginal variances through the m x m
  // marginal covariance C = s2 I + J diag(1/prior) J^T.
  const auto posterior = [&]() {
    for (Eigen::Index c0 = 0; c0 < n; c0 += cs) {
      const Eigen::Index len = std::min<Eigen::Index>(cs, n - c0);
      const double mean = r.alpha.segment(c0, len).mean();
      prior.segment(c0, len) = (1.0 - p.coupling) * r.alpha.segment(c0, len).array() + p.coupling * mean;
    }
    const Eigen::VectorXd gamma = prior.cwiseInverse();
    Eigen::MatrixXd c = j * gamma.asDiagonal() * j.transpose();
    c.diagonal().array() += r.noise_variance;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
    if (ldlt.info() != Eigen::Success) throw NumericalError("SBL marginal covariance factorisation failed");
    mu = gamma.asDiagonal() * (j.transpose() * ldlt.solve(dv));
    const Eigen::MatrixXd cj = ldlt.solve(j);
    for (Eigen::Index q = 0; q < n; ++q) sigma_diag[q] = gamma[q] - gamma[q] * gamma[q] * j.col(q).dot(cj.col(q));
  };

  for (int it = 1; it <= p.max_iters; ++it) {
    posterior();
    r.iterations = it;
    Eigen::VectorXd alpha_new(n);
    for (Eigen::Index q = 0; q < n; ++q)
      alpha_new[q] = std::clamp(1.0 / (mu[q] * mu[q] + std::max(sigma_diag[q], 0.0)), kAlphaMin, kAlphaMax);
    if (!p.noise_variance) {
      const double well_determined = (1.0 - (prior.array() * sigma_diag.array())).sum();
      const double s2 = ((j * mu - dv).squaredNorm() + r.noise_variance * well_determined) / m;
      if (!std::isfinite(s2) || s2 <= 0.0)
        throw NumericalError("SBL noise variance collapsed at iteration " + std::to_string(it));
      r.noise_variance = std::max(s2, kNoiseFloor);
    }
    const double change = (alpha_new - r.alpha).cwiseAbs().maxCoeff() / r.alpha.cwiseAbs().maxCoeff();
    r.alpha = alpha_new;
    if (change < p.tolerance) break;
  }
  posterior();
  if (!mu.allFinite()) throw NumericalError("SBL produced non-finite estimates");
  r.x = mu;
  return r;
}

Eigen::VectorXd solve(const MatrixRef& j, const VectorRef& dv, const ReconParams& p) {
  p.validate();
  switch (p.method) {
    case ReconMethod::kTikhonov:
      return tikhonov(j, dv, p.reg_factor);
    case ReconMethod::kL1:
      return l1_solve(j, dv, p.reg_factor, p.max_iters).x;
    case ReconMethod::kSbl:
      return sbl_solve(j, dv, p).x;
  }
  throw InvalidArgument("unknown reconstruction method");
}

TactileMap reconstruct(const MeasurementFrame& touched, const MeasurementFrame& reference, const Jacobian& j,
                       const Lattice& lattice, const ReconParams& p, std::optional<std::uint64_t> expected_mesh_id) {
  if (expected_mesh_id && *expected_mesh_id != j.mesh_id)
    throw ProvenanceMismatch("Jacobian was computed on mesh " + hex64(j.mesh_id) + ", expected " +
                             hex64(*expected_mesh_id));
  if (j.n_electrodes != touched.n_electrodes || j.rows() != touched.voltages.size())
    throw ProvenanceMismatch("Jacobian and frames use different protocols");
  if (j.cols() != lattice.size()) throw ProvenanceMismatch("Jacobian columns do not match the reconstruction lattice");
  const Eigen::VectorXd dv = normalized_difference(touched, reference);
  return {lattice, solve(j.normalized(), dv, p)};
}

void write_map_csv(const std::string& path, const TactileMap& map) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "index,row,col,delta_sigma\n" << std::setprecision(17);
  for (int q = 0; q < map.size(); ++q)
    out << q << ',' << q / map.lattice.cols << ',' << q % map.lattice.cols << ',' << map.delta_sigma[q] << '\n';
}

TactileMap read_map_csv(const std::string& path, const Lattice& lattice) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open map file " + path);
  std::string line;
  std::getline(in, line);
  TactileMap map{lattice, Eigen::VectorXd::Zero(lattice.size())};
  int count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell[4];
    for (auto& c : cell) std::getline(ls, c, ',');
    const int q = std::stoi(cell[0]);
    if (q < 0 || q >= lattice.size()) throw IoError(path + ": map index out of range");
    map.delta_sigma[q] = std::stod(cell[3]);
    ++count;
  }
  if (count != lattice.size()) throw IoError(path + ": expected " + std::to_string(lattice.size()) + " entries");
  return map;
}

}  // namespace eskin
