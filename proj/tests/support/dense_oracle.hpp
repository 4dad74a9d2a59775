#pragma once

// Test-only brute-force reference optimizer for small planar pose graphs.
// Independent of the library's optimizer path: dense matrices, finite
// difference Jacobians, and its own SE(2) evaluation written from the
// residual definition. Only suitable for a handful of nodes.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace oracle {

struct Node {
  double x = 0, y = 0, theta = 0;
  bool fixed = false;
};

struct Edge {
  int from = 0, to = 0;
  double mx = 0, my = 0, mtheta = 0;
  Eigen::Matrix3d info = Eigen::Matrix3d::Identity();
  bool robust = false;  // Cauchy kernel applied when true
};

inline double wrap(double t) {
  t = std::fmod(t, 2.0 * M_PI);
  if (t <= -M_PI) t += 2.0 * M_PI;
  if (t > M_PI) t -= 2.0 * M_PI;
  return t;
}

inline Eigen::Vector3d edge_residual(const Edge& e, const std::vector<Node>& nodes) {
  const Node& ni = nodes[e.from];
  const Node& nj = nodes[e.to];
  const double ci = std::cos(ni.theta), si = std::sin(ni.theta);
  const double ax = ci * (nj.x - ni.x) + si * (nj.y - ni.y);
  const double ay = -si * (nj.x - ni.x) + ci * (nj.y - ni.y);
  const double cm = std::cos(e.mtheta), sm = std::sin(e.mtheta);
  const double ex = cm * (ax - e.mx) + sm * (ay - e.my);
  const double ey = -sm * (ax - e.mx) + cm * (ay - e.my);
  const double eth = wrap(nj.theta - ni.theta - e.mtheta);

  double a, b;
  if (std::abs(eth) < 1e-6) {
    a = 1.0 - eth * eth / 6.0;
    b = 0.5 * eth - eth * eth * eth / 24.0;
  } else {
    a = std::sin(eth) / eth;
    b = (1.0 - std::cos(eth)) / eth;
  }
  const double det = a * a + b * b;
  return {(a * ex + b * ey) / det, (-b * ex + a * ey) / det, eth};
}

inline double total_cost(const std::vector<Edge>& edges, const std::vector<Node>& nodes,
                         double cauchy_scale) {
  const double c2 = cauchy_scale * cauchy_scale;
  double total = 0.0;
  for (const auto& e : edges) {
    const Eigen::Vector3d r = edge_residual(e, nodes);
    const double s = r.dot(e.info * r);
    total += e.robust ? c2 * std::log1p(s / c2) : s;
  }
  return total;
}

// Dense IRLS Levenberg-Marquardt with central-difference Jacobians.
inline std::vector<Node> solve(std::vector<Node> nodes, const std::vector<Edge>& edges,
                               double cauchy_scale = 1.0, int max_iters = 500) {
  const double c2 = cauchy_scale * cauchy_scale;
  std::vector<int> block(nodes.size(), -1);
  int n_free = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].fixed) block[i] = n_free++;
  if (n_free == 0) return nodes;
  const int dim = 3 * n_free;

  auto get = [&](const std::vector<Node>& ns, int node, int coord) {
    return coord == 0 ? ns[node].x : coord == 1 ? ns[node].y : ns[node].theta;
  };
  auto set = [&](std::vector<Node>& ns, int node, int coord, double v) {
    if (coord == 0) ns[node].x = v;
    else if (coord == 1) ns[node].y = v;
    else ns[node].theta = v;
  };

  double cost = total_cost(edges, nodes, cauchy_scale);
  double lambda = 1e-6;
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    const double fd = 1e-7;
    for (const auto& e : edges) {
      const Eigen::Vector3d r = edge_residual(e, nodes);
      const double s = r.dot(e.info * r);
      const double w = e.robust ? 1.0 / (1.0 + s / c2) : 1.0;
      const Eigen::Matrix3d womega = w * e.info;

      // Central-difference Jacobian over the six endpoint coordinates.
      Eigen::Matrix<double, 3, 6> jac;
      const int endpoints[2] = {e.from, e.to};
      for (int k = 0; k < 2; ++k)
        for (int coord = 0; coord < 3; ++coord) {
          std::vector<Node> plus = nodes, minus = nodes;
          set(plus, endpoints[k], coord, get(nodes, endpoints[k], coord) + fd);
          set(minus, endpoints[k], coord, get(nodes, endpoints[k], coord) - fd);
          jac.col(3 * k + coord) =
              (edge_residual(e, plus) - edge_residual(e, minus)) / (2.0 * fd);
        }

      const int bf = block[e.from], bt = block[e.to];
      const Eigen::Matrix3d jf = jac.block<3, 3>(0, 0);
      const Eigen::Matrix3d jt = jac.block<3, 3>(0, 3);
      if (bf >= 0) {
        h.block<3, 3>(3 * bf, 3 * bf) += jf.transpose() * womega * jf;
        g.segment<3>(3 * bf) += jf.transpose() * womega * r;
      }
      if (bt >= 0) {
        h.block<3, 3>(3 * bt, 3 * bt) += jt.transpose() * womega * jt;
        g.segment<3>(3 * bt) += jt.transpose() * womega * r;
      }
      if (bf >= 0 && bt >= 0) {
        h.block<3, 3>(3 * bf, 3 * bt) += jf.transpose() * womega * jt;
        h.block<3, 3>(3 * bt, 3 * bf) += jt.transpose() * womega * jf;
      }
    }

    bool accepted = false;
    while (!accepted && lambda < 1e14) {
      Eigen::MatrixXd damped = h;
      for (int d = 0; d < dim; ++d) damped(d, d) += lambda * std::max(h(d, d), 1e-12);
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      std::vector<Node> trial = nodes;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (block[i] < 0) continue;
        trial[i].x += delta[3 * block[i]];
        trial[i].y += delta[3 * block[i] + 1];
        trial[i].theta = wrap(trial[i].theta + delta[3 * block[i] + 2]);
      }
      const double trial_cost = total_cost(edges, trial, cauchy_scale);
      if (trial_cost <= cost) {
        accepted = true;
        nodes = trial;
        const double decrease = cost - trial_cost;
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-15);
        if (delta.norm() < 1e-13 || decrease < 1e-16) return nodes;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return nodes;
}

}  // namespace oracle
