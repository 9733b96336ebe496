#include "eskin/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <json.hpp>

#include "eskin/error.hpp"

namespace eskin {

namespace {

// Uniform-grid neighbour search. Cell size targets a handful of points per
// cell for clouds sampled from a surface.
class NeighbourGrid {
 public:
  NeighbourGrid(const std::vector<Vec3>& pts, int k) : pts_(pts) {
    lo_ = hi_ = pts[0];
    for (const auto& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    Vec3 ext = (hi_ - lo_).cwiseMax(1e-9);
    std::sort(ext.data(), ext.data() + 3);
    const double area = ext[1] * ext[2];
    cell_ = std::max(std::sqrt(area * k / pts.size()), 1e-9);
    for (int a = 0; a < 3; ++a) dims_[a] = static_cast<int>((hi_[a] - lo_[a]) / cell_) + 1;
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(static_cast<int>(i));
  }

  // Mean distance from point i to its k nearest other points.
  double mean_knn_distance(int i, int k) const {
    const auto c = cell_of(pts_[i]);
    std::vector<double> best;  // max-heap of squared distances
    for (int ring = 0;; ++ring) {
      for (int dx = -ring; dx <= ring; ++dx)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const std::array<int, 3> n = {c[0] + dx, c[1] + dy, c[2] + dz};
            if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= dims_[0] || n[1] >= dims_[1] || n[2] >= dims_[2])
              continue;
            const auto it = cells_.find(key(n));
            if (it == cells_.end()) continue;
            for (int j : it->second) {
              if (j == i) continue;
              const double d2 = (pts_[j] - pts_[i]).squaredNorm();
              if (static_cast<int>(best.size()) < k) {
                best.push_back(d2);
                std::push_heap(best.begin(), best.end());
              } else if (d2 < best.front()) {
                std::pop_heap(best.begin(), best.end());
                best.back() = d2;
                std::push_heap(best.begin(), best.end());
              }
            }
          }
      const bool covered = ring >= std::max({dims_[0], dims_[1], dims_[2]});
      if (covered || (static_cast<int>(best.size()) == k && best.front() <= std::pow(ring * cell_, 2))) break;
    }
    double s = 0.0;
    for (double d2 : best) s += std::sqrt(d2);
    return s / static_cast<double>(best.size());
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>((p[a] - lo_[a]) / cell_), 0, dims_[a] - 1);
    return c;
  }
  std::int64_t key(const std::array<int, 3>& c) const {
    return (static_cast<std::int64_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }

  const std::vector<Vec3>& pts_;
  Vec3 lo_, hi_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

// Flips v so its first clearly non-zero component along the given axis order
// is positive.
Vec3 orient(Vec3 v, std::initializer_list<int> axes) {
  for (int a : axes) {
    if (std::abs(v[a]) > 1e-12) return v[a] < 0.0 ? Vec3(-v) : v;
  }
  return v;
}

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Counter-clockwise convex hull (monotone chain).
std::vector<Vec2> convex_hull(std::vector<Vec2> p) {
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (p.size() < 3) return p;
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross2(h[k - 2], h[k - 1], p[i - 1]) <= 0) --k;
    h[k++] = p[i - 1];
  }
  h.resize(k - 1);
  return h;
}

bool inside_hull(const std::vector<Vec2>& hull, const Vec2& q, double tol) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    if (cross2(a, b, q) < -tol * (b - a).norm()) return false;
  }
  return true;
}

}  // namespace

const char* to_string(CloudSource s) { return s == CloudSource::kSynthetic ? "synthetic" : "external"; }

const char* to_string(RbfKernel k) { return k == RbfKernel::kThinPlate ? "thin-plate" : "gaussian"; }

RbfKernel rbf_kernel_from_string(const std::string& s) {
  if (s == "thin-plate") return RbfKernel::kThinPlate;
  if (s == "gaussian") return RbfKernel::kGaussian;
  throw ConfigError("unknown RBF kernel '" + s + "' (expected thin-plate or gaussian)");
}

void validate(const RawCloud& c) {
  if (c.size() < kMinCloudPoints)
    throw InvalidArgument("point cloud has " + std::to_string(c.size()) + " points; at least " +
                          std::to_string(kMinCloudPoints) + " are required");
  for (int i = 0; i < c.size(); ++i)
    if (!c.points[i].allFinite()) throw InvalidArgument("point " + std::to_string(i) + " is not finite");
}

RawCloud remove_outliers(const RawCloud& c, int k, double z_thresh) {
  if (k < 3) throw InvalidArgument("outlier removal needs k >= 3");
  validate(c);
  const NeighbourGrid grid(c.points, k);
  Eigen::VectorXd d(c.size());
  for (int i = 0; i < c.size(); ++i) d[i] = grid.mean_knn_distance(i, k);
  const double mean = d.mean();
  const double sd = std::sqrt((d.array() - mean).square().mean());
  // Boundary points of a clean, regular cloud sit at up to ~1.5x the typical
  // neighbour distance (corners of a square lattice: 1.84 h vs 1.21 h for
  // k = 8), which a tight spread would flag. Never cut below twice the
  // median.
  Eigen::VectorXd sorted = d;
  std::nth_element(sorted.data(), sorted.data() + sorted.size() / 2, sorted.data() + sorted.size());
  const double cut = std::max(mean + z_thresh * sd, 2.0 * sorted[sorted.size() / 2]);
  RawCloud out;
  out.source = c.source;
  for (int i = 0; i < c.size(); ++i)
    if (d[i] <= cut) out.points.push_back(c.points[i]);
  if (out.size() < kMinCloudPoints)
    throw InvalidArgument("only " + std::to_string(out.size()) + " points remain after outlier removal");
  return out;
}

Alignment align(const RawCloud& c) {
  validate(c);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : c.points) centroid += p;
  centroid /= c.size();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : c.points) cov += (p - centroid) * (p - centroid).transpose();
  cov /= c.size();

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues();  // ascending
  if (!(ev[1] > 1e-12 * ev[2])) throw InvalidArgument("point cloud is degenerate (collinear points)");

  const Vec3 e1 = orient(es.eigenvectors().col(2), {0, 1, 2});
  Vec3 e3 = es.eigenvectors().col(0);
  double m2 = 0.0, m3 = 0.0;
  for (const auto& p : c.points) {
    const double h = (p - centroid).dot(e3);
    m2 += h * h;
    m3 += h * h * h;
  }
  m2 /= c.size();
  m3 /= c.size();
  const double sd = std::sqrt(m2);
  if (sd > 1e-9 * std::sqrt(ev[2]) && std::abs(m3) > 1e-3 * sd * sd * sd) {
    if (m3 < 0.0) e3 = -e3;
  } else {
    e3 = orient(e3, {2, 1, 0});
  }
  const Vec3 e2 = e3.cross(e1);

  Alignment a;
  a.transform.origin = centroid;
  a.transform.rotation.row(0) = e1.transpose();
  a.transform.rotation.row(1) = e2.transpose();
  a.transform.rotation.row(2) = e3.transpose();
  a.cloud.source = c.source;
  a.cloud.points.reserve(c.points.size());
  for (const auto& p : c.points) a.cloud.points.push_back(a.transform.apply(p));
  return a;
}

double rbf_kernel(const RbfParams& p, double r) {
  if (p.kernel == RbfKernel::kThinPlate) return r > 0.0 ? r * r * std::log(r) : 0.0;
  const double s = r / p.gaussian_width;
  return std::exp(-s * s);
}

HeightFunction::HeightFunction(Eigen::MatrixX2d sites, Eigen::VectorXd weights, Eigen::Vector3d affine,
                               RbfParams params)
    : sites_(std::move(sites)), weights_(std::move(weights)), affine_(affine), params_(params) {}

double HeightFunction::operator()(double x, double y) const {
  double z = affine_[0] + affine_[1] * x + affine_[2] * y;
  for (Eigen::Index i = 0; i < sites_.rows(); ++i)
    z += weights_[i] * rbf_kernel(params_, std::hypot(x - sites_(i, 0), y - sites_(i, 1)));
  return z;
}

HeightFunction rbf_fit(const std::vector<Vec3>& points, const RbfParams& p) {
  if (!(p.smoothing >= 0.0)) throw InvalidArgument("RBF smoothing must be >= 0");
  if (p.kernel == RbfKernel::kGaussian && !(p.gaussian_width > 0.0))
    throw InvalidArgument("Gaussian RBF width must be positive");
  const int n = static_cast<int>(points.size());
  if (n < 3) throw InvalidArgument("RBF fit needs at least 3 sites");

  // Duplicate (x, y) sites make the system singular; report the first pair.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return points[a].x() < points[b].x(); });
  double scale = 1.0;
  for (const auto& q : points) scale = std::max(scale, q.head<2>().cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n && points[order[j]].x() - points[order[i]].x() <= tol; ++j)
      if ((points[order[j]].head<2>() - points[order[i]].head<2>()).norm() <= tol) {
        const int a = std::min(order[i], order[j]);
        const int b = std::max(order[i], order[j]);
        std::ostringstream os;
        os << "duplicate RBF sites " << a << " and " << b << " at (x, y) = (" << points[a].x() << ", "
           << points[a].y() << ")";
        throw InvalidArgument(os.str());
      }

  Eigen::MatrixX2d sites(n, 2);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
  for (int i = 0; i < n; ++i) {
    sites(i, 0) = points[i].x();
    sites(i, 1) = points[i].y();
    rhs[i] = points[i].z();
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 3, n + 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double v = rbf_kernel(p, std::hypot(sites(i, 0) - sites(j, 0), sites(i, 1) - sites(j, 1)));
      a(i, j) = v;
      a(j, i) = v;
    }
    a(i, i) = rbf_kernel(p, 0.0) + p.smoothing;
    a(i, n) = a(n, i) = 1.0;
    a(i, n + 1) = a(n + 1, i) = sites(i, 0);
    a(i, n + 2) = a(n + 2, i) = sites(i, 1);
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-15))
    throw NumericalError("RBF system is singular (reciprocal condition " + std::to_string(rcond) + ")");
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) throw NumericalError("RBF solve produced non-finite weights");
  return HeightFunction(std::move(sites), sol.head(n), sol.tail<3>(), p);
}

Footprint Footprint::of(const std::vector<Vec3>& points) {
  if (points.empty()) throw InvalidArgument("footprint of an empty cloud");
  Footprint f{points[0].x(), points[0].x(), points[0].y(), points[0].y()};
  for (const auto& p : points) {
    f.x0 = std::min(f.x0, p.x());
    f.x1 = std::max(f.x1, p.x());
    f.y0 = std::min(f.y0, p.y());
    f.y1 = std::max(f.y1, p.y());
  }
  return f;
}

Footprint Footprint::robust(const std::vector<Vec3>& points, int slabs) {
  const Footprint box = of(points);
  if (slabs < 1) throw InvalidArgument("footprint needs at least one slab");
  // Median over slabs of each slab's extreme coordinate: one noisy point
  // cannot widen the box.
  const auto edge = [&](int axis, bool upper) {
    const int other = 1 - axis;
    const double lo = other == 0 ? box.x0 : box.y0;
    const double span = std::max((other == 0 ? box.x1 : box.y1) - lo, 1e-12);
    std::vector<double> ext(slabs, std::numeric_limits<double>::quiet_NaN());
    for (const auto& p : points) {
      const int s = std::clamp(static_cast<int>((p[other] - lo) / span * slabs), 0, slabs - 1);
      if (std::isnan(ext[s]) || (upper ? p[axis] > ext[s] : p[axis] < ext[s])) ext[s] = p[axis];
    }
    std::erase_if(ext, [](double v) { return std::isnan(v); });
    std::nth_element(ext.begin(), ext.begin() + ext.size() / 2, ext.end());
    return ext[ext.size() / 2];
  };
  return {edge(0, false), edge(0, true), edge(1, false), edge(1, true)};
}

Eigen::VectorXd DeformationDescriptor::flatten() const {
  Eigen::VectorXd v(rows * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) v[r * cols + c] = heights(r, c);
  return v;
}

DeformationDescriptor resample(const HeightFunction& f, const Footprint& fp, const Lattice& lattice,
                               const std::vector<Vec2>& hull_sites) {
  DeformationDescriptor d;
  d.rows = lattice.rows;
  d.cols = lattice.cols;
  d.footprint = fp;
  d.heights.resize(d.rows, d.cols);
  const auto hull = convex_hull(hull_sites);
  const double tol = 1e-9 * std::max({1.0, std::abs(fp.x0), std::abs(fp.x1), std::abs(fp.y0), std::abs(fp.y1)});
  for (int r = 0; r < d.rows; ++r)
    for (int c = 0; c < d.cols; ++c) {
      const double x = fp.x(c, d.cols);
      const double y = fp.y(r, d.rows);
      d.heights(r, c) = f(x, y);
      if (!hull_sites.empty() && !inside_hull(hull, {x, y}, tol)) ++d.extrapolated_sites;
    }
  d.heights.array() -= d.heights.mean();
  return d;
}

std::vector<Vec3> decimate(const std::vector<Vec3>& points, const Footprint& fp, int max_sites) {
  if (max_sites < 4) throw InvalidArgument("decimation needs at least 4 sites");
  const double wx = std::max(fp.x1 - fp.x0, 1e-9);
  const double wy = std::max(fp.y1 - fp.y0, 1e-9);
  const int nx = std::max(2, static_cast<int>(std::floor(std::sqrt(max_sites * wx / wy))));
  const int ny = std::max(2, max_sites / nx);
  // Each point joins its nearest node; nodes include the footprint edges so
  // the fitted surface is pinned there rather than extrapolated.
  std::vector<std::vector<int>> members(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int ix = std::clamp(static_cast<int>(std::lround((points[i].x() - fp.x0) / wx * (nx - 1))), 0, nx - 1);
    const int iy = std::clamp(static_cast<int>(std::lround((points[i].y() - fp.y0) / wy * (ny - 1))), 0, ny - 1);
    members[iy * nx + ix].push_back(static_cast<int>(i));
  }
  const double pitch = std::min(wx / (nx - 1), wy / (ny - 1));
  std::vector<Vec3> out;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const auto& mem = members[iy * nx + ix];
      if (mem.empty()) continue;
      const double xn = fp.x(ix, nx);
      const double yn = fp.y(iy, ny);
      // Local plane through the members, evaluated at the node. Nodes whose
      // members do not span both directions keep the mean height.
      Vec3 mean = Vec3::Zero();
      for (int i : mem) mean += points[i];
      mean /= static_cast<double>(mem.size());
      Eigen::Matrix2d cxx = Eigen::Matrix2d::Zero();
      Eigen::Vector2d cxz = Eigen::Vector2d::Zero();
      for (int i : mem) {
        const Eigen::Vector2d dxy = (points[i] - mean).head<2>();
        cxx += dxy * dxy.transpose();
        cxz += dxy * (points[i].z() - mean.z());
      }
      double z = mean.z();
      const double spread = 0.05 * pitch;
      if (mem.size() >= 3 && Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cxx, Eigen::EigenvaluesOnly)
                                     .eigenvalues()[0] >= spread * spread * static_cast<double>(mem.size()))
        z += cxx.ldlt().solve(cxz).dot(Eigen::Vector2d(xn - mean.x(), yn - mean.y()));
      out.emplace_back(xn, yn, z);
    }
  return out;
}

DeformationDescriptor process_cloud(const RawCloud& c, const Lattice& lattice, const CloudPipelineParams& p) {
  const RawCloud clean = remove_outliers(c, p.knn, p.z_thresh);
  const Alignment a = align(clean);
  const Footprint fp = Footprint::robust(a.cloud.points);
  const std::vector<Vec3> sites =
      a.cloud.size() <= p.direct_limit ? a.cloud.points : decimate(a.cloud.points, fp, p.sites);
  const HeightFunction f = rbf_fit(sites, p.rbf);
  std::vector<Vec2> hull;
  hull.reserve(sites.size());
  for (const auto& s : sites) hull.push_back(s.head<2>());
  DeformationDescriptor d = resample(f, fp, lattice, hull);
  d.frame = a.transform;
  d.source = to_string(c.source);
  return d;
}

DeformationDescriptor analytic_descriptor(const SensorGeometry& g, const DeformationState& d,
                                          const Lattice& lattice) {
  DeformationDescriptor out;
  out.rows = lattice.rows;
  out.cols = lattice.cols;
  out.heights = Eigen::MatrixXd::Zero(out.rows, out.cols);
  const bool along_width = d.axis == BendAxis::kAlongWidth;
  const double bent_len = along_width ? g.width : g.height;
  const double axis_len = along_width ? g.height : g.width;
  const double theta = d.bend_angle;
  if (theta < 0.0 || theta > std::numbers::pi)
    throw InvalidArgument("bend angle outside [0, pi] does not give a height field");

  // Variances of the layer surface along its axis, across the chord, and
  // out of plane (uniform in arc angle). These fix the PCA frame.
  double radius = 0.0, half_chord = 0.5 * bent_len, var_bent = bent_len * bent_len / 12.0, var_z = 0.0,
         mean_lift = 0.0;
  if (theta > 0.0) {
    radius = bent_len / theta + g.layer_offset;
    half_chord = radius * std::sin(0.5 * theta);
    const double sinc_t = std::sin(theta) / theta;
    const double sinc_h = std::sin(0.5 * theta) / (0.5 * theta);
    var_bent = radius * radius * (0.5 - 0.5 * sinc_t);
    var_z = radius * radius * (0.5 + 0.5 * sinc_t - sinc_h * sinc_h);
    mean_lift = radius * (1.0 - sinc_h);
  }
  const double var_axis = axis_len * axis_len / 12.0;
  if (var_z >= std::min(var_bent, var_axis))
    throw InvalidArgument("bend too strong for the principal-axis frame");
  const bool bent_is_x = var_bent > var_axis;

  const auto lift = [&](double s) { return theta > 0.0 ? radius - std::sqrt(radius * radius - s * s) : 0.0; };
  const double half_x = bent_is_x ? half_chord : 0.5 * axis_len;
  const double half_y = bent_is_x ? 0.5 * axis_len : half_chord;
  out.footprint = {-half_x, half_x, -half_y, half_y};
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c)
      out.heights(r, c) = lift(bent_is_x ? out.footprint.x(c, out.cols) : out.footprint.y(r, out.rows));
  out.heights.array() -= out.heights.mean();

  // Frame in the coordinates produced by deform_point_offset.
  const Vec3 bent_dir = along_width ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 axis_dir = along_width ? Vec3::UnitY() : Vec3::UnitX();
  const Vec3 e1 = bent_is_x ? bent_dir : axis_dir;
  const Vec3 e3 = Vec3::UnitZ();
  out.frame.rotation.row(0) = e1.transpose();
  out.frame.rotation.row(1) = e3.cross(e1).transpose();
  out.frame.rotation.row(2) = e3.transpose();
  out.frame.origin = 0.5 * (along_width ? Vec3(g.width, 0, 0) : Vec3(0, g.height, 0)) + 0.5 * axis_len * axis_dir;
  out.frame.origin.z() = mean_lift;
  out.source = "analytic";
  return out;
}

void write_descriptor(const std::string& path, const DeformationDescriptor& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17);
  for (int r = 0; r < d.rows; ++r) {
    for (int c = 0; c < d.cols; ++c) out << (c ? "," : "") << d.heights(r, c);
    out << '\n';
  }
  nlohmann::json side = {
      {"format", "eskin-descriptor"},
      {"version", 1},
      {"rows", d.rows},
      {"cols", d.cols},
      {"source", d.source},
      {"footprint", {d.footprint.x0, d.footprint.x1, d.footprint.y0, d.footprint.y1}},
      {"rotation", std::vector<double>(d.frame.rotation.data(), d.frame.rotation.data() + 9)},
      {"origin", {d.frame.origin.x(), d.frame.origin.y(), d.frame.origin.z()}},
      {"extrapolated_sites", d.extrapolated_sites},
  };
  std::ofstream js(path + ".json");
  if (!js) throw IoError("cannot write " + path + ".json");
  js << side.dump(2) << '\n';
}

DeformationDescriptor read_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("descriptor file not found: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InvalidArgument(path + ": bad number '" + cell + "' on row " + std::to_string(rows.size() + 1));
      }
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw InvalidArgument(path + ": ragged descriptor row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument(path + ": empty descriptor");
  DeformationDescriptor d;
  d.rows = static_cast<int>(rows.size());
  d.cols = static_cast<int>(rows[0].size());
  d.heights.resize(d.rows, d.cols);
  for (int r = 0; r < d.rows; ++r)
    for (int c = 0; c < d.cols; ++c) d.heights(r, c) = rows[r][c];
  d.source = "external";

  std::ifstream js(path + ".json");
  if (js) {
    const auto side = nlohmann::json::parse(js, nullptr, false);
    if (side.is_discarded()) throw InvalidArgument(path + ".json: malformed sidecar");
    if (side.value("rows", d.rows) != d.rows || side.value("cols", d.cols) != d.cols)
      throw InvalidArgument(path + ".json: sidecar shape does not match the CSV");
    d.source = side.value("source", d.source);
    d.extrapolated_sites = side.value("extrapolated_sites", 0);
    if (side.contains("footprint")) {
      const auto f = side["footprint"].get<std::vector<double>>();
      if (f.size() == 4) d.footprint = {f[0], f[1], f[2], f[3]};
    }
    if (side.contains("rotation")) {
      const auto r = side["rotation"].get<std::vector<double>>();
      if (r.size() == 9) d.frame.rotation = Eigen::Map<const Eigen::Matrix3d>(r.data());
    }
    if (side.contains("origin")) {
      const auto o = side["origin"].get<std::vector<double>>();
      if (o.size() == 3) d.frame.origin = Vec3(o[0], o[1], o[2]);
    }
  }
  return d;
}

}  // namespace eskin
