#include "fleetmap/observation.hpp"

namespace fleetmap {

double intersection_volume(const Aabb3& a, const Aabb3& b) {
  const double dx = std::min(a.max.x, b.max.x) - std::max(a.min.x, b.min.x);
  const double dy = std::min(a.max.y, b.max.y) - std::max(a.min.y, b.min.y);
  const double dz = std::min(a.max.z, b.max.z) - std::max(a.min.z, b.min.z);
  if (dx <= 0 || dy <= 0 || dz <= 0) return 0.0;
  return dx * dy * dz;
}

double box_iou(const Aabb3& a, const Aabb3& b) {
  const double inter = intersection_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace fleetmap
