#pragma once

#include <cstdint>
#include <vector>

#include "fleetmap/geometry.hpp"
#include "fleetmap/observation.hpp"
#include "fleetmap/scan_context.hpp"

namespace fleetmap {

// The agent -> server message unit: an odometry pose estimate, the
// downsampled clouds (dynamic-free and raw), the place-recognition
// descriptor, and the object observations gathered at this frame.
struct Keyframe {
  std::uint16_t agent_id = 0;
  std::uint32_t keyframe_id = 0;
  std::uint64_t timestamp_us = 0;
  Pose2 odom_pose;
  PointCloud cloud;      // downsampled, dynamic points removed
  PointCloud cloud_raw;  // downsampled, dynamic points retained
  ScanDescriptor descriptor;
  std::vector<ObjectObservation> observations;
};

}  // namespace fleetmap
