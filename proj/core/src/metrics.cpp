#include "eskin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>

#include "eskin/error.hpp"

namespace eskin {

namespace {

void check_same_size(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size())
    throw InvalidArgument("metric inputs differ in length (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  if (x.size() == 0) throw InvalidArgument("metric inputs are empty");
}

}  // namespace

double cc(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_same_size(x, y);
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double sx = std::sqrt((dx * dx).sum());
  const double sy = std::sqrt((dy * dy).sum());
  if (sx == 0.0 && sy == 0.0) throw InvalidArgument("correlation is undefined for two constant inputs");
  if (sx == 0.0 || sy == 0.0) return 0.0;
  return std::clamp((dx * dy).sum() / (sx * sy), -1.0, 1.0);
}

Psnr psnr(const Eigen::VectorXd& reconstruction, const Eigen::VectorXd& truth) {
  check_same_size(reconstruction, truth);
  const double mse = (reconstruction - truth).squaredNorm() / static_cast<double>(truth.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  const double peak = truth.cwiseAbs().maxCoeff();
  return {10.0 * std::log10(peak * peak / mse), false};
}

double rie(const Eigen::VectorXd& reconstruction, const Eigen::VectorXd& truth) {
  check_same_size(reconstruction, truth);
  const double n = truth.norm();
  if (n == 0.0) throw InvalidArgument("relative image error is undefined for an all-zero truth");
  return (reconstruction - truth).norm() / n;
}

double distance_error(double measured, double true_distance) {
  if (!(true_distance > 0.0)) throw InvalidArgument("true distance must be positive");
  return std::abs(measured - true_distance) / true_distance;
}

std::vector<std::vector<int>> threshold_components(const Eigen::VectorXd& values, const Lattice& lattice,
                                                   double rel_threshold) {
  if (values.size() != lattice.size()) throw InvalidArgument("map size does not match its lattice");
  const double cut = rel_threshold * values.maxCoeff();
  std::vector<int> label(values.size(), -1);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < lattice.size(); ++s) {
    if (label[s] != -1 || !(values[s] >= cut) || values[s] <= 0.0) continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    std::vector<int> stack{s};
    label[s] = id;
    while (!stack.empty()) {
      const int q = stack.back();
      stack.pop_back();
      comps[id].push_back(q);
      const int r = q / lattice.cols;
      const int c = q % lattice.cols;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nb) {
        if (rc[0] < 0 || rc[0] >= lattice.rows || rc[1] < 0 || rc[1] >= lattice.cols) continue;
        const int k = rc[0] * lattice.cols + rc[1];
        if (label[k] == -1 && values[k] >= cut && values[k] > 0.0) {
          label[k] = id;
          stack.push_back(k);
        }
      }
    }
    std::sort(comps[id].begin(), comps[id].end());
  }
  return comps;
}

double component_gap(const Lattice& lattice, const std::vector<int>& a, const std::vector<int>& b) {
  const double px = lattice.pitch_x();
  const double py = lattice.pitch_y();
  double best = std::numeric_limits<double>::infinity();
  for (int qa : a) {
    const int ra = qa / lattice.cols, ca = qa % lattice.cols;
    for (int qb : b) {
      const int rb = qb / lattice.cols, cb = qb % lattice.cols;
      // Gap between two cells: count of empty cells between them per axis.
      const double gx = std::max(0, std::abs(ca - cb) - 1) * px;
      const double gy = std::max(0, std::abs(ra - rb) - 1) * py;
      best = std::min(best, std::hypot(gx, gy));
    }
  }
  return best;
}

double measured_gap(const TactileMap& map, double rel_threshold) {
  const auto comps = threshold_components(map.delta_sigma, map.lattice, rel_threshold);
  if (comps.size() < 2)
    throw InvalidArgument("distance error needs at least 2 touch regions, found " + std::to_string(comps.size()));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < comps.size(); ++i)
    for (std::size_t k = i + 1; k < comps.size(); ++k)
      best = std::min(best, component_gap(map.lattice, comps[i], comps[k]));
  return best;
}

double distance_error(const TactileMap& map, double rel_threshold, double true_distance) {
  if (!(true_distance > 0.0)) throw InvalidArgument("true distance must be positive");
  return distance_error(measured_gap(map, rel_threshold), true_distance);
}

MetricReport evaluate(const std::string& phantom, const std::string& method, const Eigen::VectorXd& reconstruction,
                      const Eigen::VectorXd& truth) {
  MetricReport r;
  r.phantom = phantom;
  r.method = method;
  r.cc = cc(reconstruction, truth);
  r.psnr = psnr(reconstruction, truth);
  r.rie = rie(reconstruction, truth);
  return r;
}

void write_metric_table(const std::string& path, const std::vector<MetricReport>& rows) {
  std::map<std::string, std::size_t> best_cc, best_psnr, best_rie;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto upd = [&](std::map<std::string, std::size_t>& best, auto better) {
      auto it = best.find(r.phantom);
      if (it == best.end() || better(r, rows[it->second])) best[r.phantom] = i;
    };
    upd(best_cc, [](const MetricReport& a, const MetricReport& b) { return a.cc > b.cc; });
    upd(best_psnr, [](const MetricReport& a, const MetricReport& b) { return a.psnr.db > b.psnr.db; });
    upd(best_rie, [](const MetricReport& a, const MetricReport& b) { return a.rie < b.rie; });
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "phantom,method,cc,psnr_db,rie,best_cc,best_psnr,best_rie\n" << std::setprecision(6) << std::fixed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.phantom << ',' << r.method << ',' << r.cc << ',';
    if (r.psnr.infinite)
      out << "inf";
    else
      out << r.psnr.db;
    out << ',' << r.rie << ',' << (best_cc[r.phantom] == i) << ',' << (best_psnr[r.phantom] == i) << ','
        << (best_rie[r.phantom] == i) << '\n';
  }
}

}  // namespace eskin
