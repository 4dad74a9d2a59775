#include "fleetmap/frontend.hpp"

#include <cmath>

#include "fleetmap/errors.hpp"

namespace fleetmap {

PointCloud remove_dynamic_points(const PointCloud& cloud,
                                 const std::vector<ObjectObservation>& dynamic_obs,
                                 double margin) {
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    bool inside = false;
    for (const auto& obs : dynamic_obs) {
      if (obs.kind != ObservationKind::Dynamic) continue;
      if (obs.aabb.contains(p, margin)) {
        inside = true;
        break;
      }
    }
    if (!inside) out.points.push_back(p);
  }
  return out;
}

Frontend::Frontend(std::uint16_t agent_id, const FrontendConfig& cfg)
    : agent_id_(agent_id), cfg_(cfg), noise_(mix_seed(cfg.noise_seed, 0xF407 + agent_id)) {}

PointCloud Frontend::preprocess(const PointCloud& scan) const {
  PointCloud above_ground;
  above_ground.frame = scan.frame;
  above_ground.points.reserve(scan.points.size());
  for (const auto& p : scan.points)
    if (p.z >= cfg_.ground_z_min) above_ground.points.push_back(p);
  PointCloud filtered =
      remove_outliers(above_ground, cfg_.outlier_radius, cfg_.outlier_min_neighbors);
  return voxel_downsample(filtered, cfg_.scan_voxel);
}

Pose2 Frontend::step_odometry(const PointCloud& preprocessed, std::uint64_t t_us,
                              bool& degraded) {
  degraded = false;
  if (has_previous_ && t_us <= last_t_us_)
    throw ParameterError("frontend: scans must arrive in time order");
  last_t_us_ = t_us;

  if (!has_previous_) {
    previous_scan_ = preprocessed;
    has_previous_ = true;
    pose_ = Pose2::identity();
    last_increment_ = Pose2::identity();
    return pose_;
  }

  Pose2 increment = last_increment_;  // constant-velocity initialization
  if (!preprocessed.empty() && !previous_scan_.empty()) {
    const IcpResult r = scan_match(preprocessed, previous_scan_, last_increment_, cfg_.icp);
    if (std::isfinite(r.fitness) && r.inlier_fraction >= cfg_.min_inlier_fraction) {
      increment = r.transform;
    } else {
      degraded = true;  // coast on the previous increment
    }
  } else {
    degraded = true;
  }

  if (cfg_.odom_noise_sigma_t > 0.0 || cfg_.odom_noise_sigma_r > 0.0) {
    increment = compose(increment, Pose2(noise_.normal(0, cfg_.odom_noise_sigma_t),
                                         noise_.normal(0, cfg_.odom_noise_sigma_t),
                                         noise_.normal(0, cfg_.odom_noise_sigma_r)));
  }

  last_increment_ = increment;
  pose_ = compose(pose_, increment);
  previous_scan_ = preprocessed;
  return pose_;
}

std::optional<Keyframe> Frontend::maybe_emit_keyframe(
    const Pose2& pose, const PointCloud& preprocessed, std::uint64_t t_us,
    const std::vector<ObjectObservation>& detections) {
  if (has_keyframe_) {
    const double dist = planar_distance(pose, last_keyframe_pose_);
    const double dtheta = std::abs(wrap_angle(pose.theta - last_keyframe_pose_.theta));
    if (dist < cfg_.kf_dist && dtheta < cfg_.kf_angle) return std::nullopt;
  }

  Keyframe kf;
  kf.agent_id = agent_id_;
  kf.keyframe_id = next_keyframe_id_++;
  kf.timestamp_us = t_us;
  kf.odom_pose = pose;
  kf.cloud_raw = preprocessed;
  kf.cloud_raw.frame = Frame::Keyframe;

  std::vector<ObjectObservation> dynamic;
  for (const auto& obs : detections)
    if (obs.kind == ObservationKind::Dynamic) dynamic.push_back(obs);
  kf.cloud = remove_dynamic_points(kf.cloud_raw, dynamic, cfg_.dyn_margin);
  kf.descriptor = encode_scan(kf.cloud, cfg_.scan_context);

  kf.observations.reserve(detections.size());
  for (const auto& det : detections) {
    ObjectObservation obs = det.kind == ObservationKind::Static
                                ? median_depth_filter(det, {0, 0, 0}, cfg_.median_filter)
                                : det;
    obs.agent_id = agent_id_;
    obs.keyframe_id = kf.keyframe_id;
    obs.timestamp_us = t_us;
    if (!obs.points.empty()) kf.observations.push_back(std::move(obs));
  }

  last_keyframe_pose_ = pose;
  has_keyframe_ = true;
  return kf;
}

Frontend::StepResult Frontend::process_scan(const PointCloud& scan, std::uint64_t t_us,
                                            const std::vector<ObjectObservation>& detections) {
  StepResult result;
  const PointCloud preprocessed = preprocess(scan);
  result.odom_pose = step_odometry(preprocessed, t_us, result.degraded);
  result.keyframe = maybe_emit_keyframe(result.odom_pose, preprocessed, t_us, detections);
  return result;
}

}  // namespace fleetmap
