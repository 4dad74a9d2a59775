#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fleetmap {

constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

// Planar rigid-body pose. theta is always kept normalized to (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  static Pose2 identity() { return {}; }
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// se(2) increment: optimizer steps and relative-pose residuals.
struct Tangent2 {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  double norm() const { return std::sqrt(dx * dx + dy * dy + dtheta * dtheta); }
};

enum class Frame : std::uint8_t { Sensor = 0, Keyframe = 1, World = 2 };

struct PointCloud {
  std::vector<Point3> points;
  Frame frame = Frame::Sensor;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// SE(2) group operations.
Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);
// Relative pose a^-1 * b.
Pose2 between(const Pose2& a, const Pose2& b);

// Exponential / logarithmic maps between SE(2) and se(2).
Pose2 exp_map(const Tangent2& v);
Tangent2 log_map(const Pose2& p);

Point3 transform_point(const Pose2& pose, const Point3& p);

// Applies the pose to x,y of every point (z is carried through) and advances
// the frame tag one stage (Sensor -> Keyframe -> World).
PointCloud transform_cloud(const Pose2& pose, const PointCloud& cloud);

// Voxel-grid downsampling with centroid representatives. Output is sorted by
// voxel index, which makes the operation idempotent. Throws ParameterError
// for voxel <= 0.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

// Keeps points that have at least min_neighbors other points within radius.
// Exact radius search over a uniform hash grid; input order is preserved.
PointCloud remove_outliers(const PointCloud& cloud, double radius, int min_neighbors);

inline double planar_distance(const Pose2& a, const Pose2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double planar_distance(const Point3& a, const Point3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double distance3(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace fleetmap
