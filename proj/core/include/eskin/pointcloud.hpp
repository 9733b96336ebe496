#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "eskin/geometry.hpp"

namespace eskin {

enum class CloudSource { kSynthetic, kExternal };

const char* to_string(CloudSource s);

constexpr int kMinCloudPoints = 100;

struct RawCloud {
  std::vector<Vec3> points;
  CloudSource source = CloudSource::kExternal;

  int size() const { return static_cast<int>(points.size()); }
};

// Throws InvalidArgument for fewer than kMinCloudPoints or non-finite points.
void validate(const RawCloud& c);

// Statistical outlier removal: drops points whose mean distance to their k
// nearest neighbours exceeds mean + z_thresh * std of that statistic.
RawCloud remove_outliers(const RawCloud& c, int k = 8, double z_thresh = 3.0);

// aligned = rotation * (p - origin). Rows of rotation are the principal axes.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 origin = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * (p - origin); }
};

struct Alignment {
  RawCloud cloud;
  RigidTransform transform;
};

// Centroid shift plus principal-axis rotation: longest extent to x, second
// to y. Signs: the out-of-plane axis points so the height distribution has
// non-negative skew (bent sheets lift their edges), falling back to +z for
// planar clouds; the x axis keeps a non-negative component along the input
// x. Throws InvalidArgument for collinear clouds.
Alignment align(const RawCloud& c);

enum class RbfKernel { kThinPlate, kGaussian };

const char* to_string(RbfKernel k);
RbfKernel rbf_kernel_from_string(const std::string& s);

struct RbfParams {
  RbfKernel kernel = RbfKernel::kThinPlate;
  double smoothing = 0.0;
  // Gaussian kernel width (mm).
  double gaussian_width = 10.0;
};

// z(x, y) = sum_i w_i phi(|p - p_i|) + a0 + a1 x + a2 y.
class HeightFunction {
 public:
  HeightFunction() = default;
  HeightFunction(Eigen::MatrixX2d sites, Eigen::VectorXd weights, Eigen::Vector3d affine, RbfParams params);

  double operator()(double x, double y) const;
  const Eigen::MatrixX2d& sites() const { return sites_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::Vector3d& affine() const { return affine_; }

 private:
  Eigen::MatrixX2d sites_;
  Eigen::VectorXd weights_;
  Eigen::Vector3d affine_ = Eigen::Vector3d::Zero();
  RbfParams params_;
};

double rbf_kernel(const RbfParams& p, double r);

// Fits heights over the (x, y) projection of an aligned cloud. Throws
// InvalidArgument naming the first duplicate (x, y) pair, and
// NumericalError when the system is singular.
HeightFunction rbf_fit(const std::vector<Vec3>& points, const RbfParams& p);

// Axis-aligned bounding box of the aligned cloud's projection.
struct Footprint {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  static Footprint of(const std::vector<Vec3>& points);
  // Edges taken as the median, over `slabs` strips, of each strip's extreme
  // coordinate. Insensitive to scanner noise on the outermost points.
  static Footprint robust(const std::vector<Vec3>& points, int slabs = 32);
  double x(int c, int cols) const { return cols > 1 ? x0 + c * (x1 - x0) / (cols - 1) : 0.5 * (x0 + x1); }
  double y(int r, int rows) const { return rows > 1 ? y0 + r * (y1 - y0) / (rows - 1) : 0.5 * (y0 + y1); }
};

// Out-of-plane displacement on a rows x cols grid spanning the footprint
// (corners included), mean removed. Row r runs along aligned y, column c
// along aligned x.
struct DeformationDescriptor {
  int rows = 27;
  int cols = 50;
  Eigen::MatrixXd heights;
  RigidTransform frame;
  Footprint footprint;
  // Grid sites outside the convex hull of the fitted sites; their heights
  // are RBF extrapolations.
  int extrapolated_sites = 0;
  std::string source = "analytic";

  // Row-major copy, the layout consumed by the model.
  Eigen::VectorXd flatten() const;
};

// Samples f on the footprint grid and removes the mean. hull_sites, when
// non-empty, are used to count extrapolated grid sites.
DeformationDescriptor resample(const HeightFunction& f, const Footprint& fp, const Lattice& lattice,
                               const std::vector<Vec2>& hull_sites = {});

// Reduces a cloud to at most max_sites points on a regular node grid spanning
// the footprint (edges included). Each node takes the height of a local
// least-squares plane through the points nearest to it.
std::vector<Vec3> decimate(const std::vector<Vec3>& points, const Footprint& fp, int max_sites);

struct CloudPipelineParams {
  int knn = 8;
  double z_thresh = 3.0;
  // Clouds up to direct_limit points are interpolated as given; larger ones
  // are decimated to about `sites` nodes first.
  int direct_limit = 1400;
  int sites = 700;
  RbfParams rbf;
};

// remove_outliers -> align -> robust footprint -> decimate -> rbf_fit -> resample.
DeformationDescriptor process_cloud(const RawCloud& c, const Lattice& lattice, const CloudPipelineParams& p = {});

// Closed-form descriptor for the cylindrical bends generated by the geometry
// module (the conductive layer surface), in the same aligned frame the
// pipeline recovers.
DeformationDescriptor analytic_descriptor(const SensorGeometry& g, const DeformationState& d, const Lattice& lattice);

// rows x cols CSV of heights plus a JSON sidecar at path + ".json".
void write_descriptor(const std::string& path, const DeformationDescriptor& d);
DeformationDescriptor read_descriptor(const std::string& path);

}  // namespace eskin
