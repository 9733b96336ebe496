#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eskin/geometry.hpp"
#include "eskin/recon.hpp"

namespace eskin {

// Pearson correlation. Throws when both inputs are constant.
double cc(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct Psnr {
  double db = 0.0;
  // Set when reconstruction and truth are identical; db is then +inf.
  bool infinite = false;
};

// 10 log10(peak^2 / MSE) with peak = max |truth|.
Psnr psnr(const Eigen::VectorXd& reconstruction, const Eigen::VectorXd& truth);

// ||x - y|| / ||y||.
double rie(const Eigen::VectorXd& reconstruction, const Eigen::VectorXd& truth);

// |D - D_r| / D_r.
double distance_error(double measured, double true_distance);

// 4-connected components of lattice points whose value is at least
// rel_threshold * max(map). Components are sorted by smallest index.
std::vector<std::vector<int>> threshold_components(const Eigen::VectorXd& values, const Lattice& lattice,
                                                   double rel_threshold);

// Boundary-to-boundary gap (mm) between two components, treating every
// lattice point as its pitch_x x pitch_y cell. Flat distances equal
// surface distances for the cylindrical bends generated here.
double component_gap(const Lattice& lattice, const std::vector<int>& a, const std::vector<int>& b);

// Smallest gap between any two thresholded components of the map.
// Throws InvalidArgument naming the count when fewer than two exist.
double measured_gap(const TactileMap& map, double rel_threshold);

double distance_error(const TactileMap& map, double rel_threshold, double true_distance);

struct MetricReport {
  std::string phantom;
  std::string method;
  double cc = 0.0;
  Psnr psnr;
  double rie = 0.0;
  std::optional<double> de;
};

MetricReport evaluate(const std::string& phantom, const std::string& method, const Eigen::VectorXd& reconstruction,
                      const Eigen::VectorXd& truth);

// phantom,method,cc,psnr_db,rie,best_cc,best_psnr,best_rie. Best flags
// mark the winning method per phantom and metric.
void write_metric_table(const std::string& path, const std::vector<MetricReport>& rows);

}  // namespace eskin
