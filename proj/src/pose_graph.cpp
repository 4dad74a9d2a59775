#include "fleetmap/pose_graph.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "fleetmap/errors.hpp"

namespace fleetmap {

const char* edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Odometry: return "Odometry";
    case EdgeKind::LoopIntra: return "LoopIntra";
    case EdgeKind::LoopInter: return "LoopInter";
  }
  return "Odometry";
}

Info3 diagonal_info(double ixx, double iyy, double itt) {
  return {ixx, 0, 0, 0, iyy, 0, 0, 0, itt};
}

namespace {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

Mat3 to_eigen(const Info3& m) {
  Mat3 out;
  out << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
  return out;
}

void check_information(const Info3& info) {
  const Mat3 m = to_eigen(info);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff()))
    throw ParameterError("edge information matrix is not symmetric");
  Eigen::LLT<Mat3> llt(m);
  if (llt.info() != Eigen::Success)
    throw ParameterError("edge information matrix is not positive definite");
}

// a = sin(t)/t, b = (1-cos(t))/t and their derivatives, series near zero.
void v_coeffs(double t, double& a, double& b, double& da, double& db) {
  const double t2 = t * t;
  if (std::abs(t) < 1e-5) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 * t - t * t2 / 24.0;
    da = -t / 3.0 + t * t2 / 30.0;
    db = 0.5 - t2 / 8.0;
  } else {
    const double st = std::sin(t), ct = std::cos(t);
    a = st / t;
    b = (1.0 - ct) / t;
    da = (t * ct - st) / t2;
    db = (t * st - 1.0 + ct) / t2;
  }
}

// r = (V(e_theta)^-1 e_t, e_theta) and d(V^-1)/dtheta for the Jacobian chain.
void log_chart(double et_x, double et_y, double e_theta, Vec3& r, Eigen::Matrix2d& v_inv,
               Eigen::Vector2d& dv_inv_et) {
  double a, b, da, db;
  v_coeffs(e_theta, a, b, da, db);
  const double det = a * a + b * b;
  v_inv << a / det, b / det, -b / det, a / det;

  const double ddet = 2.0 * (a * da + b * db);
  Eigen::Matrix2d dW;
  dW << da, db, -db, da;
  Eigen::Matrix2d W;
  W << a, b, -b, a;
  const Eigen::Matrix2d dv = dW / det - W * (ddet / (det * det));
  const Eigen::Vector2d et(et_x, et_y);
  dv_inv_et = dv * et;

  const Eigen::Vector2d rt = v_inv * et;
  r << rt.x(), rt.y(), e_theta;
}

double cauchy_rho(double s, double c2) { return c2 * std::log1p(s / c2); }
double cauchy_weight(double s, double c2) { return 1.0 / (1.0 + s / c2); }

}  // namespace

NodeId PoseGraph::add_node(std::uint16_t agent_id, std::uint32_t keyframe_id, const Pose2& pose,
                           bool fixed) {
  GraphNode n;
  n.node_id = nodes_.size();
  n.agent_id = agent_id;
  n.keyframe_id = keyframe_id;
  n.pose = pose;
  n.fixed = fixed;
  nodes_.push_back(n);
  return n.node_id;
}

void PoseGraph::add_edge(const GraphEdge& edge) {
  if (edge.from == edge.to) throw GraphError("edge endpoints must differ");
  if (!has_node(edge.from) || !has_node(edge.to)) throw GraphError("edge references missing node");
  check_information(edge.information);
  edges_.push_back(edge);
}

GraphNode& PoseGraph::node(NodeId id) {
  if (!has_node(id)) throw GraphError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

const GraphNode& PoseGraph::node(NodeId id) const {
  if (!has_node(id)) throw GraphError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

void PoseGraph::set_fixed(NodeId id, bool fixed) { node(id).fixed = fixed; }

Tangent2 PoseGraph::residual(const GraphEdge& edge) const {
  Tangent2 r;
  std::array<double, 9> j_from, j_to;
  residual_jacobians(edge, r, j_from, j_to);
  return r;
}

void PoseGraph::residual_jacobians(const GraphEdge& edge, Tangent2& r_out,
                                   std::array<double, 9>& j_from,
                                   std::array<double, 9>& j_to) const {
  const Pose2& xi = node(edge.from).pose;
  const Pose2& xj = node(edge.to).pose;
  const Pose2& m = edge.measurement;

  const double ci = std::cos(xi.theta), si = std::sin(xi.theta);
  const double cm = std::cos(m.theta), sm = std::sin(m.theta);

  // Chart components of the error pose m^-1 * (xi^-1 * xj).
  const double dx = xj.x - xi.x, dy = xj.y - xi.y;
  const double ax = ci * dx + si * dy;   // R_i^T * (t_j - t_i)
  const double ay = -si * dx + ci * dy;
  const double et_x = cm * (ax - m.x) + sm * (ay - m.y);
  const double et_y = -sm * (ax - m.x) + cm * (ay - m.y);
  const double e_theta = wrap_angle(xj.theta - xi.theta - m.theta);

  Vec3 r;
  Eigen::Matrix2d v_inv;
  Eigen::Vector2d dv_et;
  log_chart(et_x, et_y, e_theta, r, v_inv, dv_et);
  r_out = {r.x(), r.y(), r.z()};

  // Chain rule: J = L * G with L the log-chart Jacobian and G the chart
  // Jacobian w.r.t. the endpoint coordinates.
  Eigen::Matrix2d rm_t, ri_t;
  rm_t << cm, sm, -sm, cm;
  ri_t << ci, si, -si, ci;
  const Eigen::Matrix2d rmi = rm_t * ri_t;

  // d(R_i^T)/dtheta * (t_j - t_i) = -S * [ax, ay]^T = [ay, -ax]^T.
  const Eigen::Vector2d de_t_dthi = rm_t * Eigen::Vector2d(ay, -ax);

  Mat3 g_from = Mat3::Zero(), g_to = Mat3::Zero();
  g_from.block<2, 2>(0, 0) = -rmi;
  g_from.block<2, 1>(0, 2) = de_t_dthi;
  g_from(2, 2) = -1.0;
  g_to.block<2, 2>(0, 0) = rmi;
  g_to(2, 2) = 1.0;

  Mat3 l = Mat3::Zero();
  l.block<2, 2>(0, 0) = v_inv;
  l.block<2, 1>(0, 2) = dv_et;
  l(2, 2) = 1.0;

  const Mat3 jf = l * g_from;
  const Mat3 jt = l * g_to;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) {
      j_from[row * 3 + col] = jf(row, col);
      j_to[row * 3 + col] = jt(row, col);
    }
}

double PoseGraph::chi2(const OptimizeConfig& cfg) const {
  const double c2 = cfg.cauchy_scale * cfg.cauchy_scale;
  double total = 0.0;
  for (const auto& e : edges_) {
    const Tangent2 r = residual(e);
    const Vec3 rv(r.dx, r.dy, r.dtheta);
    const double s = rv.dot(to_eigen(e.information) * rv);
    const bool robust = cfg.robust_loops && e.kind != EdgeKind::Odometry;
    total += robust ? cauchy_rho(s, c2) : s;
  }
  return total;
}

std::vector<std::vector<NodeId>> PoseGraph::connected_components() const {
  std::vector<NodeId> parent(nodes_.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<NodeId(NodeId)> find = [&](NodeId v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  for (const auto& e : edges_) {
    const NodeId a = find(e.from), b = find(e.to);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<NodeId, std::vector<NodeId>> groups;
  for (NodeId v = 0; v < nodes_.size(); ++v) groups[find(v)].push_back(v);
  std::vector<std::vector<NodeId>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

OptimizeReport PoseGraph::optimize(const OptimizeConfig& cfg) {
  for (const auto& e : edges_) check_information(e.information);
  for (const auto& comp : connected_components()) {
    const bool anchored = std::any_of(comp.begin(), comp.end(),
                                      [&](NodeId id) { return nodes_[id].fixed; });
    if (!anchored)
      throw GraphError("connected component without a fixed anchor (first node " +
                       std::to_string(comp.front()) + ")");
  }

  OptimizeReport report;
  report.initial_chi2 = chi2(cfg);
  report.final_chi2 = report.initial_chi2;
  const std::vector<Pose2> initial_poses = [&] {
    std::vector<Pose2> p;
    p.reserve(nodes_.size());
    for (const auto& n : nodes_) p.push_back(n.pose);
    return p;
  }();

  // Parameter blocks for free nodes only.
  std::vector<int> block_of(nodes_.size(), -1);
  int n_blocks = 0;
  for (const auto& n : nodes_)
    if (!n.fixed) block_of[n.node_id] = n_blocks++;

  if (n_blocks == 0 || edges_.empty() || report.initial_chi2 == 0.0) {
    return report;
  }

  const double c2 = cfg.cauchy_scale * cfg.cauchy_scale;
  const int dim = 3 * n_blocks;
  double current_chi2 = report.initial_chi2;
  double lambda = -1.0;  // initialized from the first Hessian diagonal

  std::vector<Eigen::Triplet<double>> triplets;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    triplets.clear();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    std::vector<Mat3> h_diag(n_blocks, Mat3::Zero());
    std::vector<std::tuple<int, int, Mat3>> h_off;

    for (const auto& e : edges_) {
      Tangent2 rt;
      std::array<double, 9> jf_arr, jt_arr;
      residual_jacobians(e, rt, jf_arr, jt_arr);
      Mat3 jf, jt;
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) {
          jf(row, col) = jf_arr[row * 3 + col];
          jt(row, col) = jt_arr[row * 3 + col];
        }
      const Vec3 r(rt.dx, rt.dy, rt.dtheta);
      Mat3 omega = to_eigen(e.information);
      const double s = r.dot(omega * r);
      if (cfg.robust_loops && e.kind != EdgeKind::Odometry) omega *= cauchy_weight(s, c2);

      const int bf = block_of[e.from], bt = block_of[e.to];
      if (bf >= 0) {
        h_diag[bf] += jf.transpose() * omega * jf;
        rhs.segment<3>(3 * bf) -= jf.transpose() * omega * r;
      }
      if (bt >= 0) {
        h_diag[bt] += jt.transpose() * omega * jt;
        rhs.segment<3>(3 * bt) -= jt.transpose() * omega * r;
      }
      if (bf >= 0 && bt >= 0) {
        h_off.emplace_back(bf, bt, jf.transpose() * omega * jt);
      }
    }

    double max_diag = 0.0;
    for (const auto& h : h_diag) max_diag = std::max(max_diag, h.diagonal().maxCoeff());
    if (lambda < 0.0) lambda = 1e-6 * std::max(max_diag, 1.0);

    bool accepted = false;
    double step_norm = 0.0;
    double new_chi2 = current_chi2;
    std::vector<Pose2> saved;
    while (!accepted && lambda < 1e14) {
      triplets.clear();
      for (int b = 0; b < n_blocks; ++b) {
        Mat3 h = h_diag[b];
        for (int k = 0; k < 3; ++k) h(k, k) += lambda * std::max(h(k, k), 1e-12);
        for (int row = 0; row < 3; ++row)
          for (int col = 0; col < 3; ++col)
            triplets.emplace_back(3 * b + row, 3 * b + col, h(row, col));
      }
      for (const auto& [bf, bt, h] : h_off) {
        for (int row = 0; row < 3; ++row)
          for (int col = 0; col < 3; ++col) {
            triplets.emplace_back(3 * bf + row, 3 * bt + col, h(row, col));
            triplets.emplace_back(3 * bt + col, 3 * bf + row, h(row, col));
          }
      }
      Eigen::SparseMatrix<double> h_sparse(dim, dim);
      h_sparse.setFromTriplets(triplets.begin(), triplets.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h_sparse);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(rhs);
      if (solver.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }

      saved.clear();
      saved.reserve(nodes_.size());
      for (const auto& n : nodes_) saved.push_back(n.pose);
      for (auto& n : nodes_) {
        const int b = block_of[n.node_id];
        if (b < 0) continue;
        n.pose = Pose2(n.pose.x + delta[3 * b], n.pose.y + delta[3 * b + 1],
                       n.pose.theta + delta[3 * b + 2]);
      }
      new_chi2 = chi2(cfg);
      if (new_chi2 <= current_chi2) {
        accepted = true;
        step_norm = delta.norm();
        lambda = std::max(lambda / 3.0, 1e-15);
      } else {
        for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].pose = saved[i];
        lambda *= 10.0;
      }
    }
    if (!accepted) break;

    report.iterations = iter + 1;
    const double decrease = current_chi2 - new_chi2;
    current_chi2 = new_chi2;
    if (step_norm < cfg.step_tol) break;
    if (decrease < cfg.chi2_rel_tol * std::max(current_chi2, 1e-300)) break;
  }

  report.final_chi2 = current_chi2;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    report.max_pose_delta =
        std::max(report.max_pose_delta, planar_distance(nodes_[i].pose, initial_poses[i]));
  }
  return report;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void PoseGraph::dump(std::ostream& os) const {
  for (const auto& n : nodes_) {
    os << "NODE " << n.node_id << ' ' << n.agent_id << ' ' << n.keyframe_id << ' '
       << fmt_double(n.pose.x) << ' ' << fmt_double(n.pose.y) << ' ' << fmt_double(n.pose.theta)
       << ' ' << (n.fixed ? 1 : 0) << '\n';
  }
  for (const auto& e : edges_) {
    const Info3& m = e.information;
    os << "EDGE " << e.from << ' ' << e.to << ' ' << fmt_double(e.measurement.x) << ' '
       << fmt_double(e.measurement.y) << ' ' << fmt_double(e.measurement.theta) << ' '
       << fmt_double(m[0]) << ' ' << fmt_double(m[1]) << ' ' << fmt_double(m[2]) << ' '
       << fmt_double(m[4]) << ' ' << fmt_double(m[5]) << ' ' << fmt_double(m[8]) << ' '
       << edge_kind_name(e.kind) << '\n';
  }
}

PoseGraph PoseGraph::load(std::istream& is) {
  PoseGraph g;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "NODE") {
      NodeId id;
      int agent, fixed;
      std::uint32_t kf;
      double x, y, theta;
      ss >> id >> agent >> kf >> x >> y >> theta >> fixed;
      if (!ss) throw DataError("malformed NODE record: " + line);
      g.add_node(static_cast<std::uint16_t>(agent), kf, Pose2(x, y, theta), fixed != 0);
    } else if (tag == "EDGE") {
      GraphEdge e;
      double x, y, theta, i11, i12, i13, i22, i23, i33;
      std::string kind;
      ss >> e.from >> e.to >> x >> y >> theta >> i11 >> i12 >> i13 >> i22 >> i23 >> i33 >> kind;
      if (!ss) throw DataError("malformed EDGE record: " + line);
      e.measurement = Pose2(x, y, theta);
      e.information = {i11, i12, i13, i12, i22, i23, i13, i23, i33};
      if (kind == "LoopIntra") e.kind = EdgeKind::LoopIntra;
      else if (kind == "LoopInter") e.kind = EdgeKind::LoopInter;
      else e.kind = EdgeKind::Odometry;
      g.add_edge(e);
    } else {
      throw DataError("unknown graph record: " + line);
    }
  }
  return g;
}

}  // namespace fleetmap
