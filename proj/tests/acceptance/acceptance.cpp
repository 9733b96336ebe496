// Acceptance suite: one PASS/FAIL line per criterion, details indented.
// Usage: eskin_acceptance [--work-dir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "eskin/binary_io.hpp"
#include "eskin/dataset.hpp"
#include "eskin/forward.hpp"
#include "eskin/metrics.hpp"
#include "eskin/recon.hpp"
#include "eskin/vd2t.hpp"

using namespace eskin;
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failed = 0;

void verdict(int id, bool ok, const std::string& name, const std::string& summary) {
  std::printf("[%s] C%d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), summary.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

template <typename... A>
void detail(const char* f, A... a) {
  std::printf("    %s\n", fmt(f, a...).c_str());
  std::fflush(stdout);
}

MatrixXd gaussian(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// ---------------------------------------------------------------- C1

void forward_physics() {
  const auto t0 = Clock::now();
  const auto g = make_geometry();
  const Lattice lat;
  const auto proto = make_adjacent_protocol(16);
  auto s = ConductivityField::uniform(lat, 1.0);
  for (int q = 0; q < s.size(); q += 7) s.values[q] = 1.0 + (q % 5);

  double recip = 0.0;
  int pairs = 0;
  for (double th : {0.0, kPi / 3, 2 * kPi / 3}) {
    const ForwardSolver fwd(make_mesh(g, DeformationState{th}, 8671), s);
    for (int d = 0; d < 16; ++d)
      for (int m = 0; m < 16; ++m) {
        if (m == d || m == (d + 1) % 16 || (m + 1) % 16 == d) continue;
        const double a = fwd.measurement(d, m), b = fwd.measurement(m, d);
        recip = std::max(recip, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
        ++pairs;
      }
  }

  const Mesh bent = make_mesh(g, DeformationState{kPi / 2}, 8671);
  const auto v1 = solve_frame(bent, s, proto);
  auto s2 = s;
  s2.values *= 2.0;
  const auto v2 = solve_frame(bent, s2, proto);
  const double homog = (v1.voltages - 2.0 * v2.voltages).cwiseAbs().maxCoeff() / v1.voltages.cwiseAbs().maxCoeff();

  double conv = 0.0;
  const auto uni = ConductivityField::uniform(lat, 1.0);
  for (double th : {0.0, kPi / 3, 2 * kPi / 3}) {
    const auto a = solve_frame(make_mesh(g, DeformationState{th}, 4000), uni, proto);
    const auto b = solve_frame(make_mesh(g, DeformationState{th}, 8000), uni, proto);
    conv = std::max(conv, ((a.voltages - b.voltages).array() / b.voltages.array()).abs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  const bool ok = recip < 1e-8 && homog < 1e-10 && conv < 0.01 && secs < 120;
  verdict(1, ok, "forward physics",
          fmt("reciprocity %.2e over %d exchanges (< 1e-8), homogeneity %.2e (< 1e-10), 4k/8k mesh %.3f%% (< 1%%), "
              "%.1f s (< 120 s)",
              recip, pairs, homog, 100 * conv, secs));
}

// ---------------------------------------------------------------- C2

void jacobian_fd() {
  const auto t0 = Clock::now();
  const auto g = make_geometry();
  const Lattice lat;
  const auto proto = make_adjacent_protocol(16);
  const DeformationState d{kPi / 3};
  const Mesh m = make_mesh(g, d, 4000);
  const auto s0 = ConductivityField::uniform(lat, 1.0);
  const Jacobian j = compute_jacobian(m, s0, proto, make_recon_grid(g, d));
  const auto v0 = solve_frame(m, s0, proto);
  std::mt19937_64 rng(2024);
  const double eps = 1e-4;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int k = static_cast<int>(rng() % j.rows()), q = static_cast<int>(rng() % j.cols());
    auto s = s0;
    s.values[q] += eps;
    const double fd = (solve_frame(m, s, proto).voltages[k] - v0.voltages[k]) / eps;
    worst = std::max(worst, std::abs(j.matrix(k, q) - fd) / std::max(std::abs(j.matrix(k, q)), eps));
  }
  const double secs = seconds_since(t0);
  verdict(2, worst < 1e-3 && secs < 300, "Jacobian vs finite differences",
          fmt("worst of 20 entries %.2e (< 1e-3, eps 1e-4 S/m), %.1f s (< 300 s)", worst, secs));
}

// ---------------------------------------------------------------- C3

// Plain EM sparse Bayesian learning in weight space.
VectorXd plain_sbl(const MatrixXd& j, const VectorXd& y, int max_iters, double tol) {
  const int m = j.rows(), n = j.cols();
  VectorXd alpha = VectorXd::Ones(n);
  double s2 = std::max(0.1 * y.squaredNorm() / m, 1e-12);
  MatrixXd sigma;
  VectorXd mu;
  auto post = [&]() {
    MatrixXd a = j.transpose() * j / s2;
    a.diagonal() += alpha;
    sigma = a.inverse();
    mu = sigma * j.transpose() * y / s2;
  };
  for (int it = 0; it < max_iters; ++it) {
    post();
    VectorXd next(n);
    double gamma = 0;
    for (int q = 0; q < n; ++q) {
      next[q] = 1.0 / (mu[q] * mu[q] + sigma(q, q));
      gamma += 1.0 - alpha[q] * sigma(q, q);
    }
    s2 = std::max(((j * mu - y).squaredNorm() + s2 * gamma) / m, 1e-12);
    const double change = (next - alpha).cwiseAbs().maxCoeff() / alpha.cwiseAbs().maxCoeff();
    alpha = next;
    if (change < tol) break;
  }
  post();
  return mu;
}

void classical_oracles() {
  std::mt19937_64 rng(33);
  // l1 on identity systems against max(|d| - tau, 0) sign(d).
  double l1_err = 0.0;
  {
    const VectorXd dv = (VectorXd(4) << 3, 1, 0.5, 0).finished();
    const VectorXd want = (VectorXd(4) << 2, 0, 0, 0).finished();
    l1_err = (l1_solve(MatrixXd::Identity(4, 4), dv, 1.0, 400).x - want).cwiseAbs().maxCoeff();
    for (int t = 0; t < 5; ++t) {
      const VectorXd d = gaussian(40, 1, rng).col(0);
      const double tau = 0.2 + 0.2 * t;
      const VectorXd w = d.unaryExpr([&](double v) { return std::copysign(std::max(std::abs(v) - tau, 0.0), v); });
      l1_err = std::max(l1_err, (l1_solve(MatrixXd::Identity(40, 40), d, tau, 400).x - w).cwiseAbs().maxCoeff());
    }
  }
  // Pattern-coupled SBL with coupling 0 and cluster 1 against plain SBL.
  double sbl_err = 0.0;
  for (int t = 0; t < 5; ++t) {
    const MatrixXd j = gaussian(10, 20, rng);
    const VectorXd y = gaussian(10, 1, rng).col(0);
    auto p = ReconParams::defaults(ReconMethod::kSbl);
    p.coupling = 0.0;
    p.cluster_size = 1;
    for (int iters : {5, 50}) {
      p.max_iters = iters;
      sbl_err = std::max(sbl_err, (sbl_solve(j, y, p).x - plain_sbl(j, y, iters, p.tolerance)).cwiseAbs().maxCoeff());
    }
  }
  // Tikhonov: no perturbation along 20 random directions lowers the objective.
  int tik_bad = 0;
  {
    const MatrixXd j = gaussian(104, 300, rng);
    const VectorXd dv = gaussian(104, 1, rng).col(0);
    const double tau = 1e-3;
    auto f = [&](const VectorXd& x) { return (j * x - dv).squaredNorm() + tau * x.squaredNorm(); };
    const VectorXd x = tikhonov(j, dv, tau);
    const double f0 = f(x);
    for (int d = 0; d < 20; ++d) {
      const VectorXd dir = gaussian(300, 1, rng).col(0).normalized();
      tik_bad += (f(x + 1e-4 * dir) < f0) + (f(x - 1e-4 * dir) < f0);
    }
  }
  verdict(3, l1_err < 1e-8 && sbl_err < 1e-6 && tik_bad == 0, "classical solver oracles",
          fmt("l1 vs soft threshold %.1e (< 1e-8), SBL vs plain SBL %.1e (< 1e-6), Tikhonov descents found %d/40",
              l1_err, sbl_err, tik_bad));
}

// ---------------------------------------------------------------- C4, C5, C6, C9

// Desk-scale training settings; see the README.
Vd2tConfig desk_model() {
  Vd2tConfig c;
  c.pooling = VoltagePooling::kFlatten;
  c.lr = 1e-3;
  c.batch_size = 32;
  c.epochs = 60;
  c.seed = 0;
  return c;
}

struct PipelineRun {
  std::string manifest_hash, checkpoint_hash, table_hash;
  double gen_s = 0, train_s = 0, eval_s = 0;
  TrainReport report;
  std::vector<MetricReport> rows;       // deformed reference classical + vd2t
  std::vector<MetricReport> flat_rows;  // classical with the flat reference
  double ckpt_val = 0, reload_val = 0;
  int csv_rows = 0;
  double csv_min = 0;
};

PipelineRun run_pipeline(const fs::path& dir, bool verbose) {
  PipelineRun r;
  const auto g = make_geometry();
  const DatasetSpec spec;
  const Lattice lat;
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto t0 = Clock::now();
  generate(spec, g, (dir / "dataset").string());
  r.gen_s = seconds_since(t0);
  r.manifest_hash = hex64(hash_file((dir / "dataset/manifest.json").string()));

  t0 = Clock::now();
  const auto ds = load_dataset((dir / "dataset").string());
  Vd2tModel model(desk_model());
  r.report = train(model, ds.data, [&](int e, double tl, double vl) {
    if (verbose && e % 10 == 0) detail("epoch %d train %.4f val %.4f (%.0f s)", e, tl, vl, seconds_since(t0));
  });
  r.train_s = seconds_since(t0);
  const auto ckpt = (dir / "model.ckpt").string();
  write_checkpoint(ckpt, model, {r.report.best_epoch, r.report.best_val_loss});
  write_loss_csv((dir / "loss.csv").string(), r.report);
  r.checkpoint_hash = hex64(hash_file(ckpt));

  CheckpointInfo info;
  auto reloaded = read_checkpoint(ckpt, &info);
  r.ckpt_val = info.val_loss;
  r.reload_val = evaluate_loss(*reloaded, ds.data, split_indices(ds.data.size(), desk_model().seed).second);
  {
    std::ifstream in(dir / "loss.csv");
    std::string line;
    std::getline(in, line);
    r.csv_min = INFINITY;
    while (std::getline(in, line)) {
      ++r.csv_rows;
      r.csv_min = std::min(r.csv_min, std::stod(line.substr(line.rfind(',') + 1)));
    }
  }

  t0 = Clock::now();
  const auto phantoms = held_out_phantoms();
  std::map<double, Jacobian> jac;
  std::map<double, std::uint64_t> mesh_ids;
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const PhantomCase pc = simulate_phantom(g, phantoms[i], static_cast<int>(i), spec);
    if (!jac.count(pc.state.bend_angle)) {
      const Mesh coarse = make_mesh(g, pc.state, 4000);
      jac.emplace(pc.state.bend_angle, compute_jacobian(coarse, ConductivityField::uniform(lat, 1.0),
                                                        make_adjacent_protocol(16), make_recon_grid(g, pc.state)));
      mesh_ids[pc.state.bend_angle] = coarse.id;
    }
    const Jacobian& j = jac.at(pc.state.bend_angle);
    for (auto m : {ReconMethod::kTikhonov, ReconMethod::kL1, ReconMethod::kSbl}) {
      const auto p = ReconParams::defaults(m);
      const auto def = reconstruct(pc.touched, pc.reference_deformed, j, lat, p, mesh_ids[pc.state.bend_angle]);
      r.rows.push_back(evaluate(pc.phantom.id, to_string(m), def.delta_sigma, pc.truth));
      const auto flat = reconstruct(pc.touched, pc.reference_flat, j, lat, p, mesh_ids[pc.state.bend_angle]);
      r.flat_rows.push_back(evaluate(pc.phantom.id, to_string(m), flat.delta_sigma, pc.truth));
    }
    const auto v = predict_map(*reloaded, pc.touched, pc.reference_flat, pc.descriptor, lat);
    r.rows.push_back(evaluate(pc.phantom.id, "vd2t", v.delta_sigma, pc.truth));
  }
  write_metric_table((dir / "table.csv").string(), r.rows);
  r.table_hash = hex64(hash_file((dir / "table.csv").string()));
  r.eval_s = seconds_since(t0);
  return r;
}

void report_pipeline(const PipelineRun& r) {
  const auto phantoms = held_out_phantoms();
  std::map<std::string, double> bend;
  for (const auto& p : phantoms) bend[p.id] = p.bend_angle;
  std::map<std::string, double> mean;
  std::map<std::pair<std::string, std::string>, double> def_cc, flat_cc;
  for (const auto& row : r.rows) {
    mean[row.method] += row.cc / phantoms.size();
    def_cc[{row.phantom, row.method}] = row.cc;
  }
  for (const auto& row : r.flat_rows) flat_cc[{row.phantom, row.method}] = row.cc;

  detail("%-4s %6s | %-27s | %-27s | %6s", "", "bend", "deformed ref: tik / l1 / sbl", "flat ref: tik / l1 / sbl",
         "vd2t");
  for (const auto& p : phantoms)
    detail("%-4s %6.3f | %8.3f %8.3f %8.3f | %8.3f %8.3f %8.3f | %6.3f", p.id.c_str(), p.bend_angle,
           def_cc[{p.id, "tikhonov"}], def_cc[{p.id, "l1"}], def_cc[{p.id, "sbl"}], flat_cc[{p.id, "tikhonov"}],
           flat_cc[{p.id, "l1"}], flat_cc[{p.id, "sbl"}], def_cc[{p.id, "vd2t"}]);

  // C4
  int out_of_band = 0;
  for (const auto& row : r.rows)
    if (row.method != "vd2t" && (row.cc < 0.4 || row.cc > 0.95)) ++out_of_band;
  const double best_classical = std::max({mean["tikhonov"], mean["l1"], mean["sbl"]});
  const bool band = out_of_band == 0;
  const bool vd2t_high = mean["vd2t"] > 0.9;
  const bool vd2t_beats = mean["vd2t"] > best_classical;
  const bool times = r.gen_s < 1800 && r.train_s < 1800 && r.eval_s < 300;
  verdict(4, band && vd2t_high && vd2t_beats && times, "deformed-reference reconstruction",
          fmt("classical CC in [0.4, 0.95]: %s (%d/24 outside); VD2T mean CC %.3f (> 0.9: %s); beats best classical "
              "mean %.3f: %s; gen %.0f s, train %.0f s, eval %.0f s (limits 1800/1800/300): %s",
              band ? "yes" : "no", out_of_band, mean["vd2t"], vd2t_high ? "yes" : "no", best_classical,
              vd2t_beats ? "yes" : "no", r.gen_s, r.train_s, r.eval_s, times ? "yes" : "no"));
  detail("mean CC: tikhonov %.3f, l1 %.3f, sbl %.3f, vd2t %.3f", mean["tikhonov"], mean["l1"], mean["sbl"],
         mean["vd2t"]);

  // C5
  int checked = 0, violations = 0;
  double min_gap = INFINITY;
  for (const auto& p : phantoms) {
    if (!(bend[p.id] > 0.0)) continue;
    for (const char* m : {"tikhonov", "l1", "sbl"}) {
      const double gap = def_cc[{p.id, m}] - flat_cc[{p.id, m}];
      min_gap = std::min(min_gap, gap);
      violations += !(gap > 0.0);
      ++checked;
    }
  }
  verdict(5, violations == 0, "reference mismatch degrades classical maps",
          fmt("CC(flat ref) < CC(deformed ref) on %d/%d deformed phantom x method pairs, smallest margin %.3f",
              checked - violations, checked, min_gap));
}

// ---------------------------------------------------------------- C6

double gradient_check() {
  Vd2tConfig c;
  c.mlp_widths = {6, 5, 8};
  c.conv1d_channels = {2, 2, 3};
  c.conv1d_kernel = 3;
  c.conv2d_channels = {2, 3};
  c.fusion_widths = {7, 1350};
  c.pooling = VoltagePooling::kFlatten;
  c.seed = 3;
  Vd2tModel m(c);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  const int b = 4;
  const MatrixXd dv = gaussian(104, b, rng), de = gaussian(1350, b, rng);
  MatrixXd y(1350, b);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = static_cast<double>(rng() % 2);
  // Keep ReLUs off their kinks, where only one-sided derivatives exist.
  for (auto& p : m.params())
    if (p.name.find("bias") != std::string::npos)
      for (Eigen::Index i = 0; i < p.value->size(); ++i) p.value->data()[i] = 0.1 * n(rng);
  loss_and_gradient(m, dv, de, y, 77);
  auto ps = m.params();
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    auto& p = ps[rng() % ps.size()];
    const Eigen::Index k = static_cast<Eigen::Index>(rng() % p.value->size());
    const double g = p.grad->data()[k], w = p.value->data()[k], e = 1e-4;
    p.value->data()[k] = w + e;
    const double lp = batch_loss(m, dv, de, y, true, 77);
    p.value->data()[k] = w - e;
    const double lm = batch_loss(m, dv, de, y, true, 77);
    p.value->data()[k] = w;
    worst = std::max(worst, std::abs(g - (lp - lm) / (2 * e)) / std::max(std::abs(g), 1e-6));
  }
  return worst;
}

void training_mechanics(const PipelineRun& r) {
  const double grad = gradient_check();
  const auto& rep = r.report;
  const double min_val = *std::min_element(rep.val_loss.begin(), rep.val_loss.end());
  const bool contract = rep.best_val_loss == min_val && r.ckpt_val == rep.best_val_loss &&
                        std::abs(r.reload_val - rep.best_val_loss) <= 1e-12 * rep.best_val_loss &&
                        r.csv_rows == static_cast<int>(rep.val_loss.size()) && r.csv_min == rep.best_val_loss;
  verdict(6, grad < 1e-3 && contract && rep.best_val_loss < 0.05, "VD2T training mechanics",
          fmt("gradient check worst %.1e over 30 parameters (< 1e-3); best-epoch checkpoint contract %s (epoch %d, "
              "reloaded val %.6f); validation BCE %.4f (< 0.05)",
              grad, contract ? "holds" : "broken", rep.best_epoch, r.reload_val, rep.best_val_loss));
}

// ---------------------------------------------------------------- C7, C8

void distance_error_example() {
  const double de = distance_error(86.7, 90.0);
  const std::string shown = fmt("%.2f%%", 100 * de);
  verdict(7, std::abs(de - 0.0367) < 5e-5 && shown == "3.67%", "distance error worked example",
          fmt("D = 86.7 mm, D_r = 90 mm -> DE = %.6f, shown as %s", de, shown.c_str()));
}

void pattern_counts() {
  std::set<std::vector<int>> brute_sq, brute_one;
  for (int u = 0; u < kUnitCount; ++u) brute_one.insert({u});
  for (int r0 = 0; r0 < kUnitRows; ++r0)
    for (int r1 = r0 + 1; r1 < kUnitRows; ++r1)
      for (int c0 = 0; c0 < kUnitCols; ++c0)
        for (int c1 = c0 + 1; c1 < kUnitCols; ++c1) {
          if (r1 - r0 != c1 - c0) continue;
          std::vector<int> u;
          for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) u.push_back(r * kUnitCols + c);
          brute_sq.insert(u);
        }
  auto sets = [](const std::vector<TouchPattern>& ps) {
    std::set<std::vector<int>> s;
    for (const auto& p : ps) s.insert(p.units);
    return s;
  };
  const auto one = enumerate_patterns(PatternKind::kSingleUnit);
  const auto sq = enumerate_patterns(PatternKind::kSquare);
  const bool ok = one.size() == 126 && sq.size() == 384 && sets(one) == brute_one && sets(sq) == brute_sq;
  verdict(8, ok, "pattern enumeration",
          fmt("single %zu (brute force %zu), square %zu (brute force %zu), sets identical: %s", one.size(),
              brute_one.size(), sq.size(), brute_sq.size(),
              sets(one) == brute_one && sets(sq) == brute_sq ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--work-dir") work = argv[i + 1];
  const auto t0 = Clock::now();
  try {
    forward_physics();
    jacobian_fd();
    classical_oracles();

    detail("%s", "desk pipeline: 3050-sample dataset, flatten pooling, lr 1e-3, batch 32, 60 epochs");
    const PipelineRun a = run_pipeline(work / "run_a", true);
    report_pipeline(a);
    training_mechanics(a);
    distance_error_example();
    pattern_counts();

    const PipelineRun b = run_pipeline(work / "run_b", false);
    const bool same = a.manifest_hash == b.manifest_hash && a.checkpoint_hash == b.checkpoint_hash &&
                      a.table_hash == b.table_hash;
    verdict(9, same, "determinism",
            fmt("manifest %s/%s, checkpoint %s/%s, report %s/%s", a.manifest_hash.c_str(), b.manifest_hash.c_str(),
                a.checkpoint_hash.c_str(), b.checkpoint_hash.c_str(), a.table_hash.c_str(), b.table_hash.c_str()));
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed; total %.0f s\n", g_failed, seconds_since(t0));
  return g_failed == 0 ? 0 : 1;
}
