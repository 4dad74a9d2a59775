#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fleetmap/geometry.hpp"
#include "fleetmap/icp.hpp"
#include "fleetmap/keyframe.hpp"
#include "fleetmap/observation.hpp"
#include "fleetmap/rng.hpp"
#include "fleetmap/scan_context.hpp"
#include "fleetmap/sim.hpp"

namespace fleetmap {

struct FrontendConfig {
  IcpConfig icp;
  double scan_voxel = 0.3;
  // Neighbor gate sized for the ray spacing at far range (~2 m at 80 m),
  // so speckle goes but sparse distant structure survives.
  double outlier_radius = 2.0;
  int outlier_min_neighbors = 2;
  // Ground returns carry no planar-translation information and bias
  // point-to-point ICP toward zero motion; points below this sensor-frame
  // height are dropped during preprocessing (-1.6 assumes a ~2 m mount).
  double ground_z_min = -1.6;
  double kf_dist = 2.0;                  // meters
  double kf_angle = 20.0 * kPi / 180.0;  // radians
  double dyn_margin = 0.2;               // AABB inflation for dynamic removal
  double min_inlier_fraction = 0.3;      // below this the match is rejected
  MedianFilterConfig median_filter;
  ScanContextConfig scan_context;
  // Optional odometry corruption for drift studies; applied per scan step.
  double odom_noise_sigma_t = 0.0;
  double odom_noise_sigma_r = 0.0;
  std::uint64_t noise_seed = 0;
};

// Drops every point inside any dynamic observation's box inflated by margin;
// survivor order is preserved.
PointCloud remove_dynamic_points(const PointCloud& cloud,
                                 const std::vector<ObjectObservation>& dynamic_obs,
                                 double margin);

// Per-agent pipeline: scan preprocessing, ICP odometry with constant-velocity
// initialization, keyframe emission, and observation post-processing.
class Frontend {
 public:
  Frontend(std::uint16_t agent_id, const FrontendConfig& cfg);

  struct StepResult {
    Pose2 odom_pose;
    bool degraded = false;  // scan match rejected; increment was coasted
    std::optional<Keyframe> keyframe;
  };

  // Scans must arrive in strictly increasing time order.
  StepResult process_scan(const PointCloud& scan, std::uint64_t t_us,
                          const std::vector<ObjectObservation>& detections);

  PointCloud preprocess(const PointCloud& scan) const;

  // Odometry update against the previous preprocessed scan. Exposed for
  // tests; process_scan is the usual entry point.
  Pose2 step_odometry(const PointCloud& preprocessed, std::uint64_t t_us, bool& degraded);

  std::optional<Keyframe> maybe_emit_keyframe(const Pose2& pose, const PointCloud& preprocessed,
                                              std::uint64_t t_us,
                                              const std::vector<ObjectObservation>& detections);

  const Pose2& pose() const { return pose_; }
  std::uint32_t keyframes_emitted() const { return next_keyframe_id_; }

 private:
  std::uint16_t agent_id_;
  FrontendConfig cfg_;
  Rng noise_;

  Pose2 pose_;
  Pose2 last_increment_;
  PointCloud previous_scan_;
  bool has_previous_ = false;
  std::uint64_t last_t_us_ = 0;

  std::uint32_t next_keyframe_id_ = 0;
  Pose2 last_keyframe_pose_;
  bool has_keyframe_ = false;
};

}  // namespace fleetmap
