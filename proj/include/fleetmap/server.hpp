#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetmap/icp.hpp"
#include "fleetmap/keyframe.hpp"
#include "fleetmap/pose_graph.hpp"
#include "fleetmap/scan_context.hpp"

namespace fleetmap {

struct ServerConfig {
  double r_loop = 15.0;      // radius-search window, meters
  int w_recent = 30;         // same-agent recency exclusion, keyframes
  double f_max = 0.5;        // fitness acceptance gate, m^2
  double i_min = 0.6;        // inlier-fraction acceptance gate
  int c_max = 5;             // candidates validated per keyframe
  int n_opt = 10;            // optimize every n keyframes (or on any loop)
  double odom_sigma_t = 0.1;     // odometry edge noise model, meters
  double odom_sigma_r = 0.01;    // radians
  double loop_info_cap = 10.0;   // loop information cap, in odometry weights
  double map_voxel = 0.5;
  IcpConfig icp;
  ScanContextConfig scan_context;
  OptimizeConfig optimize;
  std::map<std::uint16_t, Pose2> anchor_priors;  // absent agents anchor at identity
};

enum class CandidateSource : std::uint8_t { Radius = 0, Descriptor = 1 };

struct LoopCandidate {
  NodeId query = 0;
  NodeId match = 0;
  CandidateSource source = CandidateSource::Radius;
  Pose2 init_guess;
  std::optional<double> descriptor_distance;
};

struct MapUpdate {
  std::uint64_t revision = 0;
  double max_pose_delta = 0.0;
  std::vector<std::pair<NodeId, NodeId>> merged_components;  // anchor node ids
  int loops_accepted = 0;
  bool optimized = false;
};

struct ServerStats {
  std::uint64_t intra_loops = 0;
  std::uint64_t inter_loops = 0;
  std::uint64_t rejected_candidates = 0;
  std::uint64_t dropped_messages = 0;
  std::map<std::uint16_t, std::uint64_t> bandwidth_bytes;
  std::optional<std::uint64_t> first_inter_closure_us;
  // Timestamp at which each agent's component merged with the anchor
  // component (the one holding the globally first node).
  std::map<std::uint16_t, std::uint64_t> join_time_us;
};

// World-frame map cloud with a parallel label channel.
struct SemanticCloud {
  PointCloud cloud;
  std::vector<std::string> labels;
};

// Centralized backend: aggregates keyframes from all agents into one pose
// graph, validates intra-/inter-agent loop closures, merges unaligned
// components, and schedules optimization.
class SlamServer {
 public:
  explicit SlamServer(const ServerConfig& cfg);

  // Returns nullopt when the message violates per-agent ordering (dropped
  // and counted, as required by the wire protocol).
  std::optional<MapUpdate> ingest_keyframe(const Keyframe& kf);
  // Decodes a wire message, accounts its exact byte size, and ingests it.
  std::optional<MapUpdate> ingest_message(const std::vector<std::uint8_t>& bytes);

  std::vector<LoopCandidate> find_candidates(NodeId node_id) const;
  // Runs validation scan matching; returns the loop edge when accepted.
  std::optional<GraphEdge> validate_candidate(const LoopCandidate& c) const;
  // Re-expresses the younger component through the closure, keeps the older
  // component's anchor fixed, and optimizes.
  MapUpdate merge_components(const GraphEdge& edge);

  // Full optimization outside the regular schedule (e.g. end of run).
  MapUpdate force_optimize();

  // World-frame concatenation of keyframe clouds under the optimized poses,
  // voxel-downsampled, with per-point class labels where observations
  // provide them ("unlabeled" otherwise).
  SemanticCloud assemble_map() const;

  const PoseGraph& graph() const { return graph_; }
  const Keyframe& keyframe(NodeId id) const { return keyframes_.at(id); }
  bool has_keyframe(NodeId id) const { return keyframes_.count(id) > 0; }
  const ServerStats& stats() const { return stats_; }
  std::uint64_t revision() const { return revision_; }
  const ServerConfig& config() const { return cfg_; }

  NodeId component_root(NodeId id) const;
  std::size_t component_count() const;
  std::map<std::pair<std::uint16_t, std::uint32_t>, Pose2> poses_by_keyframe() const;
  // Optimized keyframe (timestamp, pose) sequences per agent.
  std::map<std::uint16_t, std::vector<std::pair<std::uint64_t, Pose2>>> trajectories() const;

 private:
  struct AgentTrack {
    NodeId last_node = 0;
    Pose2 last_odom;
    std::uint32_t last_keyframe_id = 0;
    std::uint64_t last_timestamp_us = 0;
    bool seen = false;
  };

  NodeId find_root(NodeId id) const;
  void union_components(NodeId a, NodeId b, NodeId kept_anchor);
  // Adds a validated loop edge, re-expressing and unifying components when
  // the endpoints live in different ones.
  void apply_closure(const GraphEdge& edge, MapUpdate& update);
  Info3 odometry_information() const;
  Info3 loop_information(double fitness) const;
  double run_optimize();
  void update_join_times(std::uint64_t t_us);

  ServerConfig cfg_;
  PoseGraph graph_;
  DescriptorIndex index_;
  std::map<NodeId, Keyframe> keyframes_;
  std::map<std::uint16_t, AgentTrack> agents_;
  mutable std::vector<NodeId> parent_;  // union-find over nodes
  std::map<NodeId, NodeId> anchor_of_;  // component root -> fixed anchor node
  ServerStats stats_;
  std::uint64_t revision_ = 0;
  int keyframes_since_opt_ = 0;
};

}  // namespace fleetmap
