#include "fleetmap/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "fleetmap/errors.hpp"

namespace fleetmap {

// ---------------------------------------------------------------------------
// Route

Route::Route(std::vector<Point3> samples) : samples_(std::move(samples)) {
  cumulative_.reserve(samples_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (i > 0) total += planar_distance(samples_[i - 1], samples_[i]);
    cumulative_.push_back(total);
  }
}

Pose2 Route::pose_at(double s) const {
  if (samples_.empty()) return Pose2::identity();
  if (samples_.size() == 1) return Pose2(samples_[0].x, samples_[0].y, 0);
  s = std::clamp(s, 0.0, cumulative_.back());
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t hi = static_cast<std::size_t>(it - cumulative_.begin());
  if (hi == 0) hi = 1;
  if (hi >= samples_.size()) hi = samples_.size() - 1;
  const std::size_t lo = hi - 1;
  const double seg = cumulative_[hi] - cumulative_[lo];
  const double f = seg > 1e-12 ? (s - cumulative_[lo]) / seg : 0.0;
  const double x = samples_[lo].x + f * (samples_[hi].x - samples_[lo].x);
  const double y = samples_[lo].y + f * (samples_[hi].y - samples_[lo].y);
  const double heading =
      std::atan2(samples_[hi].y - samples_[lo].y, samples_[hi].x - samples_[lo].x);
  return Pose2(x, y, heading);
}

Pose2 DynamicActor::pose_at(double t_s) const {
  if (speed <= 0.0 || route.length() <= 0.0) return route.pose_at(0.0);
  // Loop back and forth so actors stay inside the mapped area.
  const double len = route.length();
  double s = std::fmod(speed * t_s, 2.0 * len);
  if (s > len) s = 2.0 * len - s;
  return route.pose_at(s);
}

Aabb3 DynamicActor::box_at(double t_s) const {
  const Pose2 p = pose_at(t_s);
  // Axis-align the footprint to the dominant travel axis.
  const bool along_x = std::abs(std::cos(p.theta)) >= std::abs(std::sin(p.theta));
  const double half_l = (along_x ? length : width) / 2.0;
  const double half_w = (along_x ? width : length) / 2.0;
  return {{p.x - half_l, p.y - half_w, 0.0}, {p.x + half_l, p.y + half_w, height}};
}

// ---------------------------------------------------------------------------
// World generation

World generate_world(std::uint64_t seed, const WorldParams& params) {
  if (params.grid_nx < 2 || params.grid_ny < 2)
    throw ParameterError("generate_world: grid must be at least 2x2");
  if (!(params.spacing > 0.0)) throw ParameterError("generate_world: spacing must be positive");

  World world;
  world.seed = seed;
  world.params = params;
  Rng rng(mix_seed(seed, 0xA11CE));

  const int nx = params.grid_nx, ny = params.grid_ny;
  auto node_index = [&](int i, int j) { return j * nx + i; };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      world.intersections.push_back({i * params.spacing + rng.uniform(-params.perturb,
                                                                      params.perturb),
                                     j * params.spacing + rng.uniform(-params.perturb,
                                                                      params.perturb),
                                     0.0});
    }

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i)
      world.roads.push_back({"Row" + std::to_string(j) + " St", node_index(i, j),
                             node_index(i + 1, j), params.lane_width});
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      world.roads.push_back({"Col" + std::to_string(i) + " Ave", node_index(i, j),
                             node_index(i, j + 1), params.lane_width});

  // Buildings per block, kept clear of the (unperturbed) road lines. Up to
  // two per block in randomly chosen diagonal quadrants.
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const double x_lo = i * params.spacing + params.building_margin;
      const double x_hi = (i + 1) * params.spacing - params.building_margin;
      const double y_lo = j * params.spacing + params.building_margin;
      const double y_hi = (j + 1) * params.spacing - params.building_margin;
      if (x_hi - x_lo < 10 || y_hi - y_lo < 10) continue;
      const double mid_x = (x_lo + x_hi) / 2, mid_y = (y_lo + y_hi) / 2;
      const double quads[4][4] = {{x_lo, y_lo, mid_x, mid_y},
                                  {mid_x, y_lo, x_hi, mid_y},
                                  {x_lo, mid_y, mid_x, y_hi},
                                  {mid_x, mid_y, x_hi, y_hi}};
      for (int q = 0; q < 4; ++q) {
        if (!rng.bernoulli(params.building_fill)) continue;
        const double qx_lo = quads[q][0], qy_lo = quads[q][1];
        const double qx_hi = quads[q][2], qy_hi = quads[q][3];
        const double w = rng.uniform(8.0, std::max(9.0, (qx_hi - qx_lo) * 0.9));
        const double d = rng.uniform(8.0, std::max(9.0, (qy_hi - qy_lo) * 0.9));
        const double bx = rng.uniform(qx_lo, std::max(qx_lo + 0.1, qx_hi - w));
        const double by = rng.uniform(qy_lo, std::max(qy_lo + 0.1, qy_hi - d));
        Building b;
        b.min_x = bx;
        b.min_y = by;
        b.max_x = std::min(bx + w, qx_hi);
        b.max_y = std::min(by + d, qy_hi);
        b.height = rng.uniform(params.building_min_h, params.building_max_h);
        world.buildings.push_back(b);

        // Facade relief: protruding pilasters give walls longitudinal
        // texture, without them flat walls are degenerate for scan matching.
        auto add_pilaster = [&](double cx, double cy) {
          Building p;
          p.min_x = cx - 0.25;
          p.max_x = cx + 0.25;
          p.min_y = cy - 0.25;
          p.max_y = cy + 0.25;
          p.height = b.height;
          world.buildings.push_back(p);
        };
        for (double s = 2.0 + rng.uniform(0, 3.0); s < b.max_x - b.min_x - 1.0; s += 7.0) {
          add_pilaster(b.min_x + s, b.min_y - 0.15);
          add_pilaster(b.min_x + s + rng.uniform(-1.0, 1.0), b.max_y + 0.15);
        }
        for (double s = 2.0 + rng.uniform(0, 3.0); s < b.max_y - b.min_y - 1.0; s += 7.0) {
          add_pilaster(b.min_x - 0.15, b.min_y + s);
          add_pilaster(b.max_x + 0.15, b.min_y + s + rng.uniform(-1.0, 1.0));
        }
      }
    }

  // Street furniture near intersection corners.
  struct Proto {
    const char* label;
    double w, d, h;
  };
  const Proto protos[] = {{"traffic light", 0.4, 0.4, 3.5},
                          {"traffic sign", 0.4, 0.4, 2.5},
                          {"pole", 0.3, 0.3, 4.5},
                          {"hydrant", 0.5, 0.5, 0.9},
                          {"tree", 0.6, 0.6, 6.0}};
  const double corner = params.lane_width + 2.5;
  for (std::size_t k = 0; k < world.intersections.size(); ++k) {
    for (int n = 0; n < params.objects_per_intersection; ++n) {
      const Proto& proto = protos[rng.uniform_int(5)];
      const double sx = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double sy = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double cx = world.intersections[k].x + sx * (corner + rng.uniform(0, 2.0));
      const double cy = world.intersections[k].y + sy * (corner + rng.uniform(0, 2.0));
      StaticObject obj;
      obj.label = proto.label;
      obj.box = {{cx - proto.w / 2, cy - proto.d / 2, 0.0},
                 {cx + proto.w / 2, cy + proto.d / 2, proto.h}};
      world.static_objects.push_back(obj);
    }
  }

  // Poles and trees along the road edges between intersections.
  if (params.roadside_object_spacing > 0.0) {
    const Proto roadside[] = {{"tree", 0.6, 0.6, 6.0},
                              {"pole", 0.3, 0.3, 4.5},
                              {"streetlight", 0.4, 0.4, 5.0}};
    for (const auto& road : world.roads) {
      const Point3& pa = world.intersections[road.a];
      const Point3& pb = world.intersections[road.b];
      const double len = planar_distance(pa, pb);
      const double ux = (pb.x - pa.x) / len, uy = (pb.y - pa.y) / len;
      const double off = road.lane_width + 1.5;
      for (double s = params.roadside_object_spacing / 2; s < len - 5.0;
           s += params.roadside_object_spacing) {
        const Proto& proto = roadside[rng.uniform_int(3)];
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double jitter = rng.uniform(-3.0, 3.0);
        const double cx = pa.x + (s + jitter) * ux - side * off * uy;
        const double cy = pa.y + (s + jitter) * uy + side * off * ux;
        StaticObject obj;
        obj.label = proto.label;
        obj.box = {{cx - proto.w / 2, cy - proto.d / 2, 0.0},
                   {cx + proto.w / 2, cy + proto.d / 2, proto.h}};
        world.static_objects.push_back(obj);
      }
    }
  }

  for (int a = 0; a < params.n_moving_actors; ++a) {
    DynamicActor actor;
    actor.label = "car";
    actor.speed = rng.uniform(4.0, 8.0);
    actor.route = make_route(world, RoutePolicy::Random, 250.0, rng);
    world.actors.push_back(actor);
  }
  for (int a = 0; a < params.n_parked_actors; ++a) {
    DynamicActor actor;
    actor.label = "car";
    actor.speed = 0.0;
    // Curbside spot: a point along a random road, offset laterally.
    const RoadSegment& road = world.roads[rng.uniform_int(world.roads.size())];
    const Point3& pa = world.intersections[road.a];
    const Point3& pb = world.intersections[road.b];
    const double f = rng.uniform(0.25, 0.75);
    const double dx = pb.x - pa.x, dy = pb.y - pa.y;
    const double len = std::hypot(dx, dy);
    const double ox = -dy / len * (road.lane_width * 0.8);
    const double oy = dx / len * (road.lane_width * 0.8);
    actor.route = Route({{pa.x + f * dx + ox, pa.y + f * dy + oy, 0.0}});
    world.actors.push_back(actor);
  }

  std::set<std::string> labels;
  for (const auto& o : world.static_objects) labels.insert(o.label);
  for (const auto& a : world.actors) labels.insert(a.label);
  world.label_pool.assign(labels.begin(), labels.end());
  return world;
}

// ---------------------------------------------------------------------------
// Routes

namespace {

std::vector<std::vector<int>> adjacency(const World& world) {
  std::vector<std::vector<int>> adj(world.intersections.size());
  for (const auto& road : world.roads) {
    adj[road.a].push_back(road.b);
    adj[road.b].push_back(road.a);
  }
  return adj;
}

double heading_of(const Point3& from, const Point3& to) {
  return std::atan2(to.y - from.y, to.x - from.x);
}

}  // namespace

Route make_route(const World& world, RoutePolicy policy, double min_length, Rng& rng,
                 int start_node, double corner_radius) {
  const auto adj = adjacency(world);
  int current = start_node >= 0 ? start_node
                                : static_cast<int>(rng.uniform_int(world.intersections.size()));
  int previous = -1;
  std::vector<int> hops{current};
  double total = 0.0;
  while (total < min_length + world.params.spacing) {
    const auto& neighbors = adj[current];
    if (neighbors.empty()) break;
    std::vector<int> options;
    for (int n : neighbors)
      if (n != previous) options.push_back(n);
    if (options.empty()) options.push_back(previous);  // dead end: turn back

    int next = options[0];
    if (policy == RoutePolicy::Random || previous < 0) {
      next = options[rng.uniform_int(options.size())];
    } else {
      const double incoming = heading_of(world.intersections[previous],
                                         world.intersections[current]);
      std::vector<int> turns, straights;
      for (int n : options) {
        const double out = heading_of(world.intersections[current], world.intersections[n]);
        if (std::abs(wrap_angle(out - incoming)) > kPi / 6.0) turns.push_back(n);
        else straights.push_back(n);
      }
      if (policy == RoutePolicy::AlwaysTurn) {
        const auto& pool = !turns.empty() ? turns : straights;
        next = pool[rng.uniform_int(pool.size())];
      } else {  // PreferStraight
        if (!straights.empty() && (turns.empty() || rng.bernoulli(0.7)))
          next = straights[rng.uniform_int(straights.size())];
        else
          next = turns.empty() ? straights[rng.uniform_int(straights.size())]
                               : turns[rng.uniform_int(turns.size())];
      }
    }
    total += planar_distance(world.intersections[current], world.intersections[next]);
    previous = current;
    current = next;
    hops.push_back(current);
  }

  // Dense polyline with rounded corners so headings change gradually.
  std::vector<Point3> pts;
  auto emit_line = [&](const Point3& a, const Point3& b) {
    const double len = planar_distance(a, b);
    const int n = std::max(1, static_cast<int>(len / 1.0));
    for (int i = 0; i <= n; ++i) {
      const double f = static_cast<double>(i) / n;
      pts.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), 0.0});
    }
  };

  Point3 cursor = world.intersections[hops[0]];
  for (std::size_t h = 1; h < hops.size(); ++h) {
    const Point3& corner_pt = world.intersections[hops[h]];
    if (h + 1 >= hops.size()) {
      emit_line(cursor, corner_pt);
      break;
    }
    const Point3& after = world.intersections[hops[h + 1]];
    const double in_len = planar_distance(cursor, corner_pt);
    const double out_len = planar_distance(corner_pt, after);
    const double h_in = heading_of(cursor, corner_pt);
    const double h_out = heading_of(corner_pt, after);
    const double turn = wrap_angle(h_out - h_in);
    if (std::abs(turn) < 0.05) {
      emit_line(cursor, corner_pt);
      cursor = corner_pt;
      continue;
    }
    double cut = corner_radius * std::tan(std::abs(turn) / 2.0);
    cut = std::min(cut, 0.4 * std::min(in_len, out_len));
    const double radius = cut / std::tan(std::abs(turn) / 2.0);
    const Point3 entry{corner_pt.x - cut * std::cos(h_in), corner_pt.y - cut * std::sin(h_in),
                       0.0};
    emit_line(cursor, entry);
    // Arc from entry to exit, sampled at ~0.5 m.
    const double side = turn > 0 ? 1.0 : -1.0;
    const double cx = entry.x - side * radius * std::sin(h_in);
    const double cy = entry.y + side * radius * std::cos(h_in);
    const double a0 = std::atan2(entry.y - cy, entry.x - cx);
    const int steps = std::max(2, static_cast<int>(std::abs(turn) * radius / 0.5));
    for (int i = 1; i <= steps; ++i) {
      const double a = a0 + side * std::abs(turn) * i / steps;
      pts.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a), 0.0});
    }
    cursor = {corner_pt.x + cut * std::cos(h_out), corner_pt.y + cut * std::sin(h_out), 0.0};
  }
  return Route(std::move(pts));
}

// ---------------------------------------------------------------------------
// Raycasting

namespace {

// Slab test; returns smallest positive hit distance or infinity.
double ray_box(const Point3& origin, const Point3& dir, const Aabb3& box) {
  double t_lo = 0.0, t_hi = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  const double lo[3] = {box.min.x, box.min.y, box.min.z};
  const double hi[3] = {box.max.x, box.max.y, box.max.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-12) {
      if (o[axis] < lo[axis] || o[axis] > hi[axis])
        return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (lo[axis] - o[axis]) / d[axis];
    double t1 = (hi[axis] - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_lo = std::max(t_lo, t0);
    t_hi = std::min(t_hi, t1);
    if (t_lo > t_hi) return std::numeric_limits<double>::infinity();
  }
  return t_lo > 1e-9 ? t_lo : std::numeric_limits<double>::infinity();
}

std::uint64_t pose_bits(const Pose2& p) {
  const std::uint64_t a = std::bit_cast<std::uint64_t>(p.x);
  const std::uint64_t b = std::bit_cast<std::uint64_t>(p.y);
  const std::uint64_t c = std::bit_cast<std::uint64_t>(p.theta);
  return mix_seed(a, mix_seed(b, c));
}

}  // namespace

namespace {

// Per-scan azimuth index over world boxes: each ray only tests boxes whose
// bearing interval (as seen from the sensor) covers its azimuth.
class AzimuthBuckets {
 public:
  AzimuthBuckets(int n_buckets, const Point3& origin) : n_(n_buckets), origin_(origin) {
    buckets_.resize(n_);
  }

  void add(const Aabb3& box, int entity, double r_max) {
    // Bearing interval over the 4 footprint corners; a box containing the
    // sensor goes everywhere.
    if (origin_.x >= box.min.x && origin_.x <= box.max.x && origin_.y >= box.min.y &&
        origin_.y <= box.max.y) {
      for (auto& b : buckets_) b.push_back({box, entity});
      return;
    }
    const double cx[4] = {box.min.x, box.max.x, box.max.x, box.min.x};
    const double cy[4] = {box.min.y, box.min.y, box.max.y, box.max.y};
    double nearest = std::numeric_limits<double>::infinity();
    double ref = 0.0;
    double lo = 0.0, hi = 0.0;
    for (int k = 0; k < 4; ++k) {
      nearest = std::min(nearest, std::hypot(cx[k] - origin_.x, cy[k] - origin_.y));
      const double bearing = std::atan2(cy[k] - origin_.y, cx[k] - origin_.x);
      if (k == 0) {
        ref = bearing;
        continue;
      }
      const double rel = wrap_angle(bearing - ref);
      lo = std::min(lo, rel);
      hi = std::max(hi, rel);
    }
    if (nearest > r_max) return;
    const int from = static_cast<int>(std::floor((ref + lo) / (2.0 * kPi) * n_)) - 1;
    const int to = static_cast<int>(std::ceil((ref + hi) / (2.0 * kPi) * n_)) + 1;
    for (int i = from; i <= to; ++i)
      buckets_[((i % n_) + n_) % n_].push_back({box, entity});
  }

  const std::vector<std::pair<Aabb3, int>>& at(double world_az) const {
    const int i = static_cast<int>(std::floor(world_az / (2.0 * kPi) * n_));
    return buckets_[((i % n_) + n_) % n_];
  }

 private:
  int n_;
  Point3 origin_;
  std::vector<std::vector<std::pair<Aabb3, int>>> buckets_;
};

}  // namespace

ScanWithHits simulate_scan_hits(const Pose2& pose, const World& world, std::uint64_t t_us,
                                const SensorParams& sensor) {
  ScanWithHits out;
  out.cloud.frame = Frame::Sensor;
  Rng noise(mix_seed(world.seed, mix_seed(t_us, pose_bits(pose))));

  const double t_s = static_cast<double>(t_us) * 1e-6;
  const Point3 origin{pose.x, pose.y, sensor.height};

  AzimuthBuckets buckets(256, origin);
  for (std::size_t b = 0; b < world.buildings.size(); ++b) {
    const auto& bd = world.buildings[b];
    buckets.add({{bd.min_x, bd.min_y, 0.0}, {bd.max_x, bd.max_y, bd.height}},
                kEntityBuildingBase + static_cast<int>(b), sensor.r_max);
  }
  for (std::size_t s = 0; s < world.static_objects.size(); ++s)
    buckets.add(world.static_objects[s].box, kEntityStaticBase + static_cast<int>(s),
                sensor.r_max);
  for (std::size_t a = 0; a < world.actors.size(); ++a)
    buckets.add(world.actors[a].box_at(t_s), kEntityActorBase + static_cast<int>(a),
                sensor.r_max);

  const double el_min = sensor.el_min_deg * kPi / 180.0;
  const double el_max = sensor.el_max_deg * kPi / 180.0;

  for (int ia = 0; ia < sensor.n_az; ++ia) {
    const double az = 2.0 * kPi * ia / sensor.n_az;  // sensor frame
    const double world_az = wrap_angle(az + pose.theta);
    const auto& candidates = buckets.at(world_az);
    for (int ie = 0; ie < sensor.n_el; ++ie) {
      const double el = sensor.n_el == 1
                            ? el_min
                            : el_min + (el_max - el_min) * ie / (sensor.n_el - 1);
      const double ce = std::cos(el);
      const Point3 dir{ce * std::cos(world_az), ce * std::sin(world_az), std::sin(el)};

      double best = sensor.r_max;
      int entity = -1;
      if (world.params.ground && dir.z < -1e-9) {
        const double t_ground = -origin.z / dir.z;
        if (t_ground < best) {
          best = t_ground;
          entity = kEntityGround;
        }
      }
      for (const auto& [box, box_entity] : candidates) {
        const double t = ray_box(origin, dir, box);
        if (t < best) {
          best = t;
          entity = box_entity;
        }
      }
      if (entity < 0) continue;

      double range = best;
      if (sensor.noise_sigma > 0.0)
        range = std::max(0.05, range + noise.normal(0, sensor.noise_sigma));
      // Sensor-frame coordinates (azimuth relative to the heading).
      out.cloud.points.push_back(
          {range * ce * std::cos(az), range * ce * std::sin(az), range * std::sin(el)});
      out.entities.push_back(entity);
    }
  }
  return out;
}

PointCloud simulate_scan(const Pose2& pose, const World& world, std::uint64_t t_us,
                         const SensorParams& sensor) {
  return simulate_scan_hits(pose, world, t_us, sensor).cloud;
}

// ---------------------------------------------------------------------------
// Detection oracle

DetectionOracle::DetectionOracle(std::uint16_t agent_id, const OracleNoiseConfig& cfg)
    : agent_id_(agent_id), cfg_(cfg), rng_(mix_seed(cfg.seed, 0xD47EC7 + agent_id)) {}

std::vector<ObjectObservation> DetectionOracle::detect(const Pose2& /*pose*/,
                                                       const ScanWithHits& scan,
                                                       const World& world, std::uint64_t t_us) {
  // Group returns by object entity; std::map keeps the order deterministic.
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < scan.entities.size(); ++i) {
    const int e = scan.entities[i];
    if (e >= kEntityStaticBase) members[e].push_back(i);
  }

  // Azimuth bin per point, for bearing-window contamination sampling.
  const std::size_t n_points = scan.cloud.points.size();
  std::vector<double> azimuth(n_points);
  std::vector<double> range(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const auto& p = scan.cloud.points[i];
    azimuth[i] = std::atan2(p.y, p.x);
    range[i] = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  }

  std::vector<ObjectObservation> observations;
  for (const auto& [entity, indices] : members) {
    ObjectObservation obs;
    obs.agent_id = agent_id_;
    obs.timestamp_us = t_us;
    obs.points.frame = Frame::Keyframe;

    const bool is_actor = entity >= kEntityActorBase;
    if (is_actor) {
      const int actor = entity - kEntityActorBase;
      obs.kind = ObservationKind::Dynamic;
      obs.class_label = world.actors[actor].label;
      auto it = instance_of_.find(actor);
      if (it == instance_of_.end()) {
        instance_of_[actor] = next_instance_++;
      } else if (cfg_.p_sw > 0.0 && rng_.bernoulli(cfg_.p_sw)) {
        instance_of_[actor] = next_instance_++;
      }
      obs.instance_id = instance_of_[actor];
    } else {
      const int idx = entity - kEntityStaticBase;
      obs.kind = ObservationKind::Static;
      obs.class_label = world.static_objects[idx].label;
    }

    for (std::size_t i : indices) obs.points.points.push_back(scan.cloud.points[i]);
    obs.recompute_bounds();
    const double centroid_range =
        std::sqrt(obs.centroid.x * obs.centroid.x + obs.centroid.y * obs.centroid.y);
    if (centroid_range > cfg_.detect_range) continue;

    if (cfg_.p_miss > 0.0 && rng_.bernoulli(cfg_.p_miss)) continue;
    if (cfg_.p_cls > 0.0 && rng_.bernoulli(cfg_.p_cls) && world.label_pool.size() > 1) {
      std::string corrupted = obs.class_label;
      while (corrupted == obs.class_label)
        corrupted = world.label_pool[rng_.uniform_int(world.label_pool.size())];
      obs.class_label = corrupted;
    }

    if (cfg_.rho_fp > 0.0) {
      // Mask bleed: one Bernoulli trial per true point; contaminants are
      // depth-offset background returns inside the object's bearing window.
      int draw = 0;
      for (std::size_t k = 0; k < indices.size(); ++k)
        if (rng_.bernoulli(cfg_.rho_fp)) ++draw;
      if (draw > 0) {
        const double pad = 1.5 * kPi / 180.0;
        double med = 0.0;
        {
          std::vector<double> rs;
          rs.reserve(indices.size());
          for (std::size_t i : indices) rs.push_back(range[i]);
          std::sort(rs.begin(), rs.end());
          med = rs[rs.size() / 2];
        }
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < n_points; ++i) {
          if (scan.entities[i] == entity) continue;
          if (std::abs(range[i] - med) < cfg_.min_fp_depth_offset) continue;
          bool in_window = false;
          for (std::size_t j : indices) {
            if (std::abs(wrap_angle(azimuth[i] - azimuth[j])) <= pad) {
              in_window = true;
              break;
            }
          }
          if (in_window) candidates.push_back(i);
        }
        for (int k = 0; k < draw && !candidates.empty(); ++k) {
          const std::size_t pick = rng_.uniform_int(candidates.size());
          obs.points.points.push_back(scan.cloud.points[candidates[pick]]);
          candidates.erase(candidates.begin() + pick);
        }
        obs.recompute_bounds();
      }
    }

    observations.push_back(std::move(obs));
  }
  return observations;
}

// ---------------------------------------------------------------------------
// Median depth filter

ObjectObservation median_depth_filter(const ObjectObservation& obs, const Point3& viewpoint,
                                      const MedianFilterConfig& cfg) {
  if (obs.points.empty()) return obs;

  std::vector<double> ranges;
  ranges.reserve(obs.points.size());
  for (const auto& p : obs.points.points) ranges.push_back(distance3(p, viewpoint));

  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med = median_of(ranges);
  std::vector<double> dev;
  dev.reserve(ranges.size());
  for (double r : ranges) dev.push_back(std::abs(r - med));
  const double mad = median_of(dev);
  const double band = std::max(cfg.delta_min, cfg.k_mad * mad);

  ObjectObservation out = obs;
  out.points.points.clear();
  for (std::size_t i = 0; i < obs.points.points.size(); ++i) {
    if (std::abs(ranges[i] - med) <= band) out.points.points.push_back(obs.points.points[i]);
  }
  out.recompute_bounds();
  return out;
}

std::vector<NamedSegment> world_road_segments(const World& world) {
  std::vector<NamedSegment> segments;
  segments.reserve(world.roads.size());
  for (const auto& road : world.roads)
    segments.push_back({road.name, world.intersections[road.a], world.intersections[road.b]});
  return segments;
}

}  // namespace fleetmap
