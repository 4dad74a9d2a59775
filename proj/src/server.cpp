#include "fleetmap/server.hpp"

#include <algorithm>
#include <cassert>
#include <tuple>
#include <cmath>
#include <iostream>

#include "fleetmap/errors.hpp"
#include "fleetmap/wire.hpp"

namespace fleetmap {

SlamServer::SlamServer(const ServerConfig& cfg) : cfg_(cfg), index_(cfg.scan_context) {}

NodeId SlamServer::find_root(NodeId id) const {
  while (parent_[id] != id) {
    parent_[id] = parent_[parent_[id]];
    id = parent_[id];
  }
  return id;
}

NodeId SlamServer::component_root(NodeId id) const { return find_root(id); }

std::size_t SlamServer::component_count() const {
  std::size_t count = 0;
  for (NodeId i = 0; i < parent_.size(); ++i)
    if (find_root(i) == i) ++count;
  return count;
}

void SlamServer::union_components(NodeId a, NodeId b, NodeId kept_anchor) {
  const NodeId ra = find_root(a), rb = find_root(b);
  if (ra == rb) return;
  const NodeId root = std::min(ra, rb);
  const NodeId child = std::max(ra, rb);
  parent_[child] = root;
  anchor_of_.erase(ra);
  anchor_of_.erase(rb);
  anchor_of_[root] = kept_anchor;
}

Info3 SlamServer::odometry_information() const {
  const double it = 1.0 / (cfg_.odom_sigma_t * cfg_.odom_sigma_t);
  const double ir = 1.0 / (cfg_.odom_sigma_r * cfg_.odom_sigma_r);
  return diagonal_info(it, it, ir);
}

Info3 SlamServer::loop_information(double fitness) const {
  const double scale = std::min(1.0 / std::max(fitness, 1e-4), cfg_.loop_info_cap);
  Info3 info = odometry_information();
  for (double& v : info) v *= scale;
  return info;
}

std::optional<MapUpdate> SlamServer::ingest_message(const std::vector<std::uint8_t>& bytes) {
  const Keyframe kf =
      decode_keyframe(bytes, cfg_.scan_context.n_ring, cfg_.scan_context.n_sector);
  stats_.bandwidth_bytes[kf.agent_id] += bytes.size();
  return ingest_keyframe(kf);
}

std::optional<MapUpdate> SlamServer::ingest_keyframe(const Keyframe& kf) {
  AgentTrack& track = agents_[kf.agent_id];
  if (track.seen &&
      (kf.keyframe_id <= track.last_keyframe_id || kf.timestamp_us <= track.last_timestamp_us)) {
    ++stats_.dropped_messages;
    std::cerr << "server: dropping out-of-order keyframe " << kf.keyframe_id << " of agent "
              << kf.agent_id << "\n";
    return std::nullopt;
  }

  MapUpdate update;
  update.revision = ++revision_;

  NodeId node_id;
  if (!track.seen) {
    const auto prior = cfg_.anchor_priors.find(kf.agent_id);
    const Pose2 anchor_pose =
        prior != cfg_.anchor_priors.end() ? prior->second : Pose2::identity();
    node_id = graph_.add_node(kf.agent_id, kf.keyframe_id, anchor_pose, true);
    parent_.push_back(node_id);
    anchor_of_[node_id] = node_id;
  } else {
    const Pose2 increment = between(track.last_odom, kf.odom_pose);
    const Pose2 world_init = compose(graph_.node(track.last_node).pose, increment);
    node_id = graph_.add_node(kf.agent_id, kf.keyframe_id, world_init, false);
    parent_.push_back(node_id);
    GraphEdge edge;
    edge.from = track.last_node;
    edge.to = node_id;
    edge.measurement = increment;
    edge.information = odometry_information();
    edge.kind = EdgeKind::Odometry;
    graph_.add_edge(edge);
    union_components(track.last_node, node_id, anchor_of_.at(find_root(track.last_node)));
  }
  track.seen = true;
  track.last_node = node_id;
  track.last_odom = kf.odom_pose;
  track.last_keyframe_id = kf.keyframe_id;
  track.last_timestamp_us = kf.timestamp_us;
  keyframes_[node_id] = kf;
  index_.insert(node_id, kf.descriptor);
  update_join_times(kf.timestamp_us);

  bool loop_added = false;
  for (const LoopCandidate& candidate : find_candidates(node_id)) {
    const auto edge = validate_candidate(candidate);
    if (!edge) {
      ++stats_.rejected_candidates;
      continue;
    }
    loop_added = true;
    ++update.loops_accepted;
    if (edge->kind == EdgeKind::LoopInter) {
      ++stats_.inter_loops;
      if (!stats_.first_inter_closure_us) stats_.first_inter_closure_us = kf.timestamp_us;
    } else {
      ++stats_.intra_loops;
    }

    apply_closure(*edge, update);
    update_join_times(kf.timestamp_us);
  }

  ++keyframes_since_opt_;
  if (loop_added || keyframes_since_opt_ >= cfg_.n_opt) {
    update.max_pose_delta = std::max(update.max_pose_delta, run_optimize());
    update.optimized = true;
    keyframes_since_opt_ = 0;
  }
  return update;
}

void SlamServer::update_join_times(std::uint64_t t_us) {
  if (parent_.empty()) return;
  const NodeId anchor_root = find_root(0);
  for (const auto& [agent, track] : agents_) {
    if (!track.seen || stats_.join_time_us.count(agent)) continue;
    if (find_root(track.last_node) == anchor_root) stats_.join_time_us[agent] = t_us;
  }
}

std::vector<LoopCandidate> SlamServer::find_candidates(NodeId node_id) const {
  const GraphNode& query = graph_.node(node_id);
  const Keyframe& query_kf = keyframes_.at(node_id);
  const NodeId query_root = find_root(node_id);

  auto recent_same_agent = [&](const GraphNode& other) {
    return other.agent_id == query.agent_id &&
           other.keyframe_id + static_cast<std::uint32_t>(cfg_.w_recent) >= query.keyframe_id;
  };

  // Radius candidates within the query's component, nearest first.
  std::vector<std::pair<double, NodeId>> in_radius;
  for (const auto& other : graph_.nodes()) {
    if (other.node_id == node_id) continue;
    if (find_root(other.node_id) != query_root) continue;
    if (recent_same_agent(other)) continue;
    const double dist = planar_distance(other.pose, query.pose);
    if (dist <= cfg_.r_loop) in_radius.emplace_back(dist, other.node_id);
  }
  std::sort(in_radius.begin(), in_radius.end());

  std::vector<LoopCandidate> candidates;
  for (const auto& [dist, match] : in_radius) {
    LoopCandidate c;
    c.query = node_id;
    c.match = match;
    c.source = CandidateSource::Radius;
    c.init_guess = between(graph_.node(match).pose, query.pose);
    candidates.push_back(c);
    if (static_cast<int>(candidates.size()) >= cfg_.c_max) break;
  }

  // Descriptor candidates: other components, plus same-component entries
  // beyond the radius window.
  const auto exclude = [&](std::uint64_t handle) {
    if (handle == node_id) return true;
    const GraphNode& other = graph_.node(handle);
    if (recent_same_agent(other)) return true;
    return find_root(handle) == query_root &&
           planar_distance(other.pose, query.pose) <= cfg_.r_loop;
  };
  for (const QueryResult& result : index_.query(query_kf.descriptor, cfg_.c_max, exclude)) {
    if (static_cast<int>(candidates.size()) >= cfg_.c_max) break;
    LoopCandidate c;
    c.query = node_id;
    c.match = result.handle;
    c.source = CandidateSource::Descriptor;
    c.descriptor_distance = result.distance;
    c.init_guess =
        Pose2(0, 0, result.shift * 2.0 * kPi / cfg_.scan_context.n_sector);
    candidates.push_back(c);
  }
  return candidates;
}

std::optional<GraphEdge> SlamServer::validate_candidate(const LoopCandidate& c) const {
  const Keyframe& query_kf = keyframes_.at(c.query);
  const Keyframe& match_kf = keyframes_.at(c.match);
  if (query_kf.cloud.empty() || match_kf.cloud.empty()) return std::nullopt;

  // Dynamic-free clouds; the transform maps the query cloud into the match
  // keyframe frame, which is the from=match -> to=query measurement.
  const IcpResult r = scan_match(query_kf.cloud, match_kf.cloud, c.init_guess, cfg_.icp);
  if (!r.converged || !(r.fitness <= cfg_.f_max) || r.inlier_fraction < cfg_.i_min)
    return std::nullopt;
  assert(r.fitness <= cfg_.f_max);

  GraphEdge edge;
  edge.from = c.match;
  edge.to = c.query;
  edge.measurement = r.transform;
  edge.information = loop_information(r.fitness);
  edge.kind = graph_.node(c.query).agent_id == graph_.node(c.match).agent_id
                  ? EdgeKind::LoopIntra
                  : EdgeKind::LoopInter;
  return edge;
}

void SlamServer::apply_closure(const GraphEdge& edge, MapUpdate& update) {
  if (find_root(edge.from) == find_root(edge.to)) {
    graph_.add_edge(edge);  // same component: constraint only, no merge
    return;
  }

  // The component with the younger anchor moves; the older component keeps
  // its frame (and its GNSS-style prior) intact.
  const NodeId anchor_a = anchor_of_.at(find_root(edge.from));
  const NodeId anchor_b = anchor_of_.at(find_root(edge.to));
  const NodeId kept = std::min(anchor_a, anchor_b);
  const NodeId moved_anchor = std::max(anchor_a, anchor_b);
  const NodeId moved_root = find_root(moved_anchor);

  // Re-express the moved component so the closure residual is zero.
  Pose2 correction;
  if (find_root(edge.to) == moved_root) {
    const Pose2 target = compose(graph_.node(edge.from).pose, edge.measurement);
    correction = compose(target, inverse(graph_.node(edge.to).pose));
  } else {
    const Pose2 target = compose(graph_.node(edge.to).pose, inverse(edge.measurement));
    correction = compose(target, inverse(graph_.node(edge.from).pose));
  }
  for (const auto& n : graph_.nodes()) {
    if (find_root(n.node_id) != moved_root) continue;
    const Pose2 moved = compose(correction, n.pose);
    update.max_pose_delta = std::max(update.max_pose_delta, planar_distance(moved, n.pose));
    graph_.node(n.node_id).pose = moved;
  }
  graph_.set_fixed(moved_anchor, false);
  union_components(edge.from, edge.to, kept);
  update.merged_components.emplace_back(anchor_a, anchor_b);
  graph_.add_edge(edge);
}

MapUpdate SlamServer::merge_components(const GraphEdge& edge) {
  MapUpdate update;
  update.revision = ++revision_;
  apply_closure(edge, update);
  if (!keyframes_.empty())
    update_join_times(keyframes_.at(std::max(edge.from, edge.to)).timestamp_us);
  update.max_pose_delta = std::max(update.max_pose_delta, run_optimize());
  update.optimized = true;
  return update;
}

double SlamServer::run_optimize() {
  const OptimizeReport report = graph_.optimize(cfg_.optimize);
  return report.max_pose_delta;
}

MapUpdate SlamServer::force_optimize() {
  MapUpdate update;
  update.revision = ++revision_;
  update.max_pose_delta = run_optimize();
  update.optimized = true;
  keyframes_since_opt_ = 0;
  return update;
}

SemanticCloud SlamServer::assemble_map() const {
  // Voxel accumulation with a per-voxel label vote. Bins are keyed on the
  // voxel index and emitted in sorted order for determinism.
  struct Accum {
    double sx = 0, sy = 0, sz = 0;
    int n = 0;
    std::map<std::string, int> votes;
  };
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Accum> bins;
  const double voxel = cfg_.map_voxel;

  for (const auto& [node_id, kf] : keyframes_) {
    const Pose2& pose = graph_.node(node_id).pose;
    std::vector<const ObjectObservation*> statics;
    for (const auto& obs : kf.observations)
      if (obs.kind == ObservationKind::Static) statics.push_back(&obs);

    for (const auto& p : kf.cloud.points) {
      std::string label = "unlabeled";
      for (const ObjectObservation* obs : statics) {
        if (obs->aabb.contains(p)) {
          label = obs->class_label;
          break;
        }
      }
      const Point3 w = transform_point(pose, p);
      const auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(w.x / voxel)),
                                       static_cast<std::int64_t>(std::floor(w.y / voxel)),
                                       static_cast<std::int64_t>(std::floor(w.z / voxel)));
      Accum& a = bins[key];
      a.sx += w.x;
      a.sy += w.y;
      a.sz += w.z;
      a.n += 1;
      a.votes[label] += 1;
    }
  }

  SemanticCloud out;
  out.cloud.frame = Frame::World;
  out.cloud.points.reserve(bins.size());
  out.labels.reserve(bins.size());
  for (const auto& [key, a] : bins) {
    out.cloud.points.push_back({a.sx / a.n, a.sy / a.n, a.sz / a.n});
    // majority vote; ties resolve lexicographically via map order
    const std::string* best = nullptr;
    int best_count = -1;
    for (const auto& [label, count] : a.votes) {
      if (count > best_count) {
        best = &label;
        best_count = count;
      }
    }
    out.labels.push_back(*best);
  }
  return out;
}

std::map<std::pair<std::uint16_t, std::uint32_t>, Pose2> SlamServer::poses_by_keyframe() const {
  std::map<std::pair<std::uint16_t, std::uint32_t>, Pose2> poses;
  for (const auto& n : graph_.nodes())
    poses[{n.agent_id, n.keyframe_id}] = n.pose;
  return poses;
}

std::map<std::uint16_t, std::vector<std::pair<std::uint64_t, Pose2>>> SlamServer::trajectories()
    const {
  std::map<std::uint16_t, std::vector<std::pair<std::uint64_t, Pose2>>> out;
  for (const auto& [node_id, kf] : keyframes_)
    out[kf.agent_id].emplace_back(kf.timestamp_us, graph_.node(node_id).pose);
  for (auto& [agent, samples] : out)
    std::sort(samples.begin(), samples.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace fleetmap
