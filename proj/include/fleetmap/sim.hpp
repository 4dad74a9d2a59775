#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fleetmap/geometry.hpp"
#include "fleetmap/observation.hpp"
#include "fleetmap/rng.hpp"

namespace fleetmap {

struct SensorParams {
  int n_az = 360;
  int n_el = 16;
  double r_max = 80.0;
  double el_min_deg = -15.0;
  double el_max_deg = 15.0;
  double height = 2.0;        // sensor mount height above ground
  double noise_sigma = 0.02;  // Gaussian range noise, meters
};

struct WorldParams {
  int grid_nx = 3;
  int grid_ny = 3;
  double spacing = 70.0;
  double perturb = 4.0;       // intersection jitter
  double lane_width = 3.5;
  double building_margin = 8.0;
  double building_fill = 0.85;
  double building_min_h = 4.0;
  double building_max_h = 18.0;
  int objects_per_intersection = 2;
  // Street furniture along road edges; anchors odometry longitudinally.
  double roadside_object_spacing = 18.0;  // 0 disables
  int n_moving_actors = 3;
  int n_parked_actors = 2;
  bool ground = true;
};

struct StaticObject {
  std::string label;
  Aabb3 box;
};

// Axis-aligned extruded rectangle (walls only; the sensor never sees roofs).
struct Building {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0, height = 0;
};

struct RoadSegment {
  std::string name;
  int a = 0, b = 0;  // intersection indices
  double lane_width = 3.5;
};

enum class RoutePolicy : std::uint8_t { Random = 0, AlwaysTurn = 1, PreferStraight = 2 };

// Dense polyline with per-sample headings; poses are arclength-interpolated.
class Route {
 public:
  Route() = default;
  explicit Route(std::vector<Point3> samples);
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  Pose2 pose_at(double s) const;
  const std::vector<Point3>& samples() const { return samples_; }

 private:
  std::vector<Point3> samples_;
  std::vector<double> cumulative_;
};

struct DynamicActor {
  std::string label;
  Route route;
  double speed = 0.0;  // 0 = parked
  double length = 4.5, width = 1.9, height = 1.5;

  Pose2 pose_at(double t_s) const;
  Aabb3 box_at(double t_s) const;
};

struct World {
  std::uint64_t seed = 0;
  WorldParams params;
  std::vector<Point3> intersections;  // z = 0
  std::vector<RoadSegment> roads;
  std::vector<Building> buildings;
  std::vector<StaticObject> static_objects;
  std::vector<DynamicActor> actors;
  std::vector<std::string> label_pool;
};

// Grid-with-perturbation town, fully determined by the seed.
// Throws ParameterError for grids smaller than 2x2 or non-positive spacing.
World generate_world(std::uint64_t seed, const WorldParams& params);

// Entity ids attached to simulated returns.
constexpr int kEntityGround = 0;
constexpr int kEntityBuildingBase = 1;
constexpr int kEntityStaticBase = 100000;
constexpr int kEntityActorBase = 200000;

struct ScanWithHits {
  PointCloud cloud;           // sensor frame
  std::vector<int> entities;  // parallel to cloud.points
};

// Horizontal ray sweep against ground, buildings, objects, and actors at
// their time-t positions. Deterministic for identical (pose, t, world seed).
ScanWithHits simulate_scan_hits(const Pose2& pose, const World& world, std::uint64_t t_us,
                                const SensorParams& sensor);
PointCloud simulate_scan(const Pose2& pose, const World& world, std::uint64_t t_us,
                         const SensorParams& sensor);

struct OracleNoiseConfig {
  double rho_fp = 0.0;   // background contamination rate (mask bleed)
  double p_miss = 0.0;   // whole-detection dropout
  double p_cls = 0.0;    // class label corruption
  double p_sw = 0.0;     // instance id switch per sighting
  double detect_range = 80.0;
  double min_fp_depth_offset = 2.0;  // contaminants come from other depths
  std::uint64_t seed = 0;
};

// Stands in for the on-agent vision stack: emits noisy 3D observations with
// per-agent persistent instance ids for dynamic actors.
class DetectionOracle {
 public:
  DetectionOracle(std::uint16_t agent_id, const OracleNoiseConfig& cfg);

  std::vector<ObjectObservation> detect(const Pose2& pose, const ScanWithHits& scan,
                                        const World& world, std::uint64_t t_us);

 private:
  std::uint16_t agent_id_;
  OracleNoiseConfig cfg_;
  Rng rng_;
  std::map<int, std::int64_t> instance_of_;  // actor index -> instance id
  std::int64_t next_instance_ = 0;
};

struct MedianFilterConfig {
  double delta_min = 1.0;
  double k_mad = 2.0;
};

// Keeps points whose range from the viewpoint is within
// max(delta_min, k_mad * MAD) of the median range; bounds are recomputed.
// Empty observations pass through unchanged.
ObjectObservation median_depth_filter(const ObjectObservation& obs, const Point3& viewpoint,
                                      const MedianFilterConfig& cfg = {});

// Road-graph walk for agents and actors. start_node < 0 picks one from rng.
Route make_route(const World& world, RoutePolicy policy, double min_length, Rng& rng,
                 int start_node = -1, double corner_radius = 8.0);

// Named road centerline segments, the reference input for intersection
// evaluation.
struct NamedSegment {
  std::string name;
  Point3 a, b;
};
std::vector<NamedSegment> world_road_segments(const World& world);

}  // namespace fleetmap
