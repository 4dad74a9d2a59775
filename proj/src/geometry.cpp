#include "fleetmap/geometry.hpp"

#include <algorithm>
#include <unordered_map>

#include "fleetmap/errors.hpp"

namespace fleetmap {

double wrap_angle(double theta) {
  // Normalize to (-pi, pi].
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta <= -kPi) theta += 2.0 * kPi;
  if (theta > kPi) theta -= 2.0 * kPi;
  return theta;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta);
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta);
}

Pose2 between(const Pose2& a, const Pose2& b) { return compose(inverse(a), b); }

namespace {

// V(theta) couples rotation and translation in the SE(2) exponential:
// t = V(theta) * rho with V = [[a, -b], [b, a]], a = sin/theta, b = (1-cos)/theta.
void exp_coeffs(double theta, double& a, double& b) {
  if (std::abs(theta) < 1e-6) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 * theta - theta * t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta;
  }
}

}  // namespace

Pose2 exp_map(const Tangent2& v) {
  double a, b;
  exp_coeffs(v.dtheta, a, b);
  return Pose2(a * v.dx - b * v.dy, b * v.dx + a * v.dy, v.dtheta);
}

Tangent2 log_map(const Pose2& p) {
  double a, b;
  exp_coeffs(p.theta, a, b);
  const double det = a * a + b * b;
  // V^-1 = 1/det * [[a, b], [-b, a]]
  Tangent2 v;
  v.dx = (a * p.x + b * p.y) / det;
  v.dy = (-b * p.x + a * p.y) / det;
  v.dtheta = p.theta;
  return v;
}

Point3 transform_point(const Pose2& pose, const Point3& p) {
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  return {pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y, p.z};
}

PointCloud transform_cloud(const Pose2& pose, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(transform_point(pose, p));
  out.frame = cloud.frame == Frame::Sensor ? Frame::Keyframe : Frame::World;
  return out;
}

namespace {

struct VoxelKey {
  std::int64_t ix, iy, iz;
  bool operator==(const VoxelKey& o) const { return ix == o.ix && iy == o.iy && iz == o.iz; }
  bool operator<(const VoxelKey& o) const {
    if (ix != o.ix) return ix < o.ix;
    if (iy != o.iy) return iy < o.iy;
    return iz < o.iz;
  }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.ix, k.iy, k.iz}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

std::int64_t bin_index(double v, double size) {
  return static_cast<std::int64_t>(std::floor(v / size));
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw ParameterError("voxel_downsample: voxel size must be positive");

  struct Accum {
    double sx = 0, sy = 0, sz = 0;
    int n = 0;
  };
  std::unordered_map<VoxelKey, Accum, VoxelKeyHash> bins;
  bins.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    VoxelKey key{bin_index(p.x, voxel), bin_index(p.y, voxel), bin_index(p.z, voxel)};
    Accum& a = bins[key];
    a.sx += p.x;
    a.sy += p.y;
    a.sz += p.z;
    a.n += 1;
  }

  std::vector<std::pair<VoxelKey, Accum>> sorted(bins.begin(), bins.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(sorted.size());
  for (const auto& [key, a] : sorted) {
    out.points.push_back({a.sx / a.n, a.sy / a.n, a.sz / a.n});
  }
  return out;
}

PointCloud remove_outliers(const PointCloud& cloud, double radius, int min_neighbors) {
  if (!(radius > 0.0)) throw ParameterError("remove_outliers: radius must be positive");

  std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash> grid;
  grid.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    grid[{bin_index(p.x, radius), bin_index(p.y, radius), bin_index(p.z, radius)}].push_back(i);
  }

  const double r2 = radius * radius;
  PointCloud out;
  out.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const std::int64_t cx = bin_index(p.x, radius);
    const std::int64_t cy = bin_index(p.y, radius);
    const std::int64_t cz = bin_index(p.z, radius);
    int count = 0;
    for (std::int64_t dx = -1; dx <= 1 && count < min_neighbors; ++dx)
      for (std::int64_t dy = -1; dy <= 1 && count < min_neighbors; ++dy)
        for (std::int64_t dz = -1; dz <= 1 && count < min_neighbors; ++dz) {
          auto it = grid.find({cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j == i) continue;
            const auto& q = cloud.points[j];
            const double ddx = p.x - q.x, ddy = p.y - q.y, ddz = p.z - q.z;
            if (ddx * ddx + ddy * ddy + ddz * ddz <= r2) {
              if (++count >= min_neighbors) break;
            }
          }
        }
    if (count >= min_neighbors) out.points.push_back(p);
  }
  return out;
}

}  // namespace fleetmap
