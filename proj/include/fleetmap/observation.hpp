#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>

#include "fleetmap/geometry.hpp"

namespace fleetmap {

struct Aabb3 {
  Point3 min{0, 0, 0};
  Point3 max{0, 0, 0};

  double volume() const {
    return std::max(0.0, max.x - min.x) * std::max(0.0, max.y - min.y) *
           std::max(0.0, max.z - min.z);
  }

  Point3 center() const {
    return {(min.x + max.x) / 2, (min.y + max.y) / 2, (min.z + max.z) / 2};
  }

  bool contains(const Point3& p, double margin = 0.0) const {
    return p.x >= min.x - margin && p.x <= max.x + margin && p.y >= min.y - margin &&
           p.y <= max.y + margin && p.z >= min.z - margin && p.z <= max.z + margin;
  }

  Aabb3 inflated(double pad) const {
    return {{min.x - pad, min.y - pad, min.z - pad}, {max.x + pad, max.y + pad, max.z + pad}};
  }

  static Aabb3 of_points(const std::vector<Point3>& pts) {
    Aabb3 box;
    if (pts.empty()) return box;
    constexpr double inf = std::numeric_limits<double>::infinity();
    box.min = {inf, inf, inf};
    box.max = {-inf, -inf, -inf};
    for (const auto& p : pts) {
      box.min.x = std::min(box.min.x, p.x);
      box.min.y = std::min(box.min.y, p.y);
      box.min.z = std::min(box.min.z, p.z);
      box.max.x = std::max(box.max.x, p.x);
      box.max.y = std::max(box.max.y, p.y);
      box.max.z = std::max(box.max.z, p.z);
    }
    return box;
  }
};

double intersection_volume(const Aabb3& a, const Aabb3& b);
// Intersection over union of two boxes; 0 when disjoint or both degenerate.
double box_iou(const Aabb3& a, const Aabb3& b);

enum class ObservationKind : std::uint8_t { Static = 0, Dynamic = 1 };

constexpr std::int64_t kNoInstance = -1;

// A 3D object detection expressed in the keyframe frame. Open-vocabulary
// class labels are free strings; dynamic observations carry a per-agent
// instance id.
struct ObjectObservation {
  std::uint16_t agent_id = 0;
  std::uint32_t keyframe_id = 0;
  std::uint64_t timestamp_us = 0;
  std::string class_label;
  ObservationKind kind = ObservationKind::Static;
  std::int64_t instance_id = kNoInstance;
  PointCloud points;
  Point3 centroid{0, 0, 0};
  Aabb3 aabb;

  // Centroid and box are derived state; call after any points change.
  void recompute_bounds() {
    centroid = {0, 0, 0};
    aabb = Aabb3::of_points(points.points);
    if (points.empty()) return;
    for (const auto& p : points.points) {
      centroid.x += p.x;
      centroid.y += p.y;
      centroid.z += p.z;
    }
    const double n = static_cast<double>(points.size());
    centroid.x /= n;
    centroid.y /= n;
    centroid.z /= n;
  }
};

}  // namespace fleetmap
