#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fleetmap/geometry.hpp"

namespace fleetmap {

using NodeId = std::uint64_t;

enum class EdgeKind : std::uint8_t { Odometry = 0, LoopIntra = 1, LoopInter = 2 };

const char* edge_kind_name(EdgeKind kind);

struct GraphNode {
  NodeId node_id = 0;
  std::uint16_t agent_id = 0;
  std::uint32_t keyframe_id = 0;
  Pose2 pose;
  bool fixed = false;
};

// Symmetric 3x3 information matrix stored densely (row-major).
using Info3 = std::array<double, 9>;

Info3 diagonal_info(double ixx, double iyy, double itt);

struct GraphEdge {
  NodeId from = 0;
  NodeId to = 0;
  Pose2 measurement;  // relative pose, from -> to
  Info3 information = diagonal_info(1, 1, 1);
  EdgeKind kind = EdgeKind::Odometry;
};

struct OptimizeConfig {
  int max_iters = 100;
  double chi2_rel_tol = 1e-9;
  double step_tol = 1e-8;
  bool robust_loops = true;    // Cauchy kernel on loop edges only
  double cauchy_scale = 1.0;   // kernel scale, 1 m-equivalent
};

struct OptimizeReport {
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  int iterations = 0;
  double max_pose_delta = 0.0;  // largest planar node movement
};

class PoseGraph {
 public:
  NodeId add_node(std::uint16_t agent_id, std::uint32_t keyframe_id, const Pose2& pose,
                  bool fixed = false);
  // Validates endpoints, from != to, and that the information matrix is
  // symmetric positive definite (ParameterError otherwise).
  void add_edge(const GraphEdge& edge);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  GraphNode& node(NodeId id);
  const GraphNode& node(NodeId id) const;
  bool has_node(NodeId id) const { return id < nodes_.size(); }
  void set_fixed(NodeId id, bool fixed);

  // r = log(measurement^-1 * (pose_from^-1 * pose_to)); zero iff the poses
  // satisfy the measurement exactly. GraphError on missing nodes.
  Tangent2 residual(const GraphEdge& edge) const;

  // Analytic Jacobians of the residual w.r.t. the (x, y, theta) coordinates
  // of both endpoints; row-major 3x3.
  void residual_jacobians(const GraphEdge& edge, Tangent2& r, std::array<double, 9>& j_from,
                          std::array<double, 9>& j_to) const;

  // Robust total chi^2 under the given config.
  double chi2(const OptimizeConfig& cfg = {}) const;

  // Sparse Levenberg-Marquardt. Every connected component must contain a
  // fixed anchor (GraphError otherwise). Never increases chi^2.
  OptimizeReport optimize(const OptimizeConfig& cfg = {});

  // Equivalence classes under edge connectivity, each sorted ascending and
  // ordered by smallest member.
  std::vector<std::vector<NodeId>> connected_components() const;

  // Text dump: one record per line, NODE / EDGE, lossless float formatting.
  void dump(std::ostream& os) const;
  static PoseGraph load(std::istream& is);

 private:
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
};

}  // namespace fleetmap
