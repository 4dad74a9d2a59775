#include "fleetmap/icp.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "fleetmap/errors.hpp"

namespace fleetmap {

namespace {

// Planar hash grid over the target cloud; cell size equals the gate so a
// 3x3 neighborhood covers every candidate. z enters the distance only.
class CorrespondenceGrid {
 public:
  CorrespondenceGrid(const PointCloud& target, double cell) : target_(target), cell_(cell) {
    cells_.reserve(target.points.size());
    for (std::size_t i = 0; i < target.points.size(); ++i) {
      cells_[key_of(target.points[i].x, target.points[i].y)].push_back(i);
    }
  }

  // Nearest target point to p within gate; returns squared distance or -1.
  double nearest(const Point3& p, double gate2, std::size_t& index) const {
    const std::int64_t cx = coord(p.x), cy = coord(p.y);
    double best = gate2;
    bool found = false;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(pack(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second) {
          const auto& q = target_.points[j];
          const double ddx = p.x - q.x, ddy = p.y - q.y, ddz = p.z - q.z;
          const double d2 = ddx * ddx + ddy * ddy + ddz * ddz;
          if (d2 <= best) {
            best = d2;
            index = j;
            found = true;
          }
        }
      }
    return found ? best : -1.0;
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t pack(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(y));
  }
  std::uint64_t key_of(double x, double y) const { return pack(coord(x), coord(y)); }

  const PointCloud& target_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

IcpResult scan_match(const PointCloud& source, const PointCloud& target, const Pose2& init,
                     const IcpConfig& cfg) {
  if (source.empty() || target.empty())
    throw RegistrationError("scan_match: empty source or target cloud");

  const double gate2 = cfg.max_corr_dist * cfg.max_corr_dist;
  CorrespondenceGrid grid(target, cfg.max_corr_dist);

  IcpResult result;
  result.transform = init;

  std::vector<std::size_t> src_idx, tgt_idx;
  src_idx.reserve(source.size());
  tgt_idx.reserve(source.size());

  bool anneal = cfg.final_corr_dist < cfg.max_corr_dist;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    result.iterations = iter + 1;
    const double gate = anneal
                            ? std::max(cfg.final_corr_dist,
                                       cfg.max_corr_dist * std::pow(0.7, iter))
                            : cfg.max_corr_dist;
    const double iter_gate2 = gate * gate;

    src_idx.clear();
    tgt_idx.clear();
    const double c = std::cos(result.transform.theta), s = std::sin(result.transform.theta);
    PointCloud moved_cloud;
    moved_cloud.points.reserve(source.size());
    for (const auto& p : source.points)
      moved_cloud.points.push_back({result.transform.x + c * p.x - s * p.y,
                                    result.transform.y + s * p.x + c * p.y, p.z});
    for (std::size_t i = 0; i < moved_cloud.points.size(); ++i) {
      std::size_t j;
      if (grid.nearest(moved_cloud.points[i], iter_gate2, j) >= 0.0) {
        src_idx.push_back(i);
        tgt_idx.push_back(j);
      }
    }
    if (src_idx.empty() && iter > 0 && anneal) {
      // The tightened gate lost every pair; fall back to the full gate.
      anneal = false;
      for (std::size_t i = 0; i < moved_cloud.points.size(); ++i) {
        std::size_t j;
        if (grid.nearest(moved_cloud.points[i], gate2, j) >= 0.0) {
          src_idx.push_back(i);
          tgt_idx.push_back(j);
        }
      }
    }
    if (cfg.reciprocal && !src_idx.empty()) {
      CorrespondenceGrid back_grid(moved_cloud, cfg.max_corr_dist);
      std::size_t kept = 0;
      for (std::size_t k = 0; k < src_idx.size(); ++k) {
        std::size_t back;
        if (back_grid.nearest(target.points[tgt_idx[k]], gate2, back) >= 0.0 &&
            back == src_idx[k]) {
          src_idx[kept] = src_idx[k];
          tgt_idx[kept] = tgt_idx[k];
          ++kept;
        }
      }
      if (kept > 0) {
        src_idx.resize(kept);
        tgt_idx.resize(kept);
      }
    }

    if (src_idx.empty()) {
      // No overlap at the current estimate; flag for rejection.
      result.converged = false;
      result.fitness = std::numeric_limits<double>::infinity();
      result.inlier_fraction = 0.0;
      return result;
    }

    // Weighted closed-form 2D Procrustes on current correspondences (full
    // transform, recomputed from raw points each iteration).
    std::vector<double> weight(src_idx.size(), 1.0);
    if (cfg.robust_scale > 0.0) {
      const double s2 = cfg.robust_scale * cfg.robust_scale;
      for (std::size_t k = 0; k < src_idx.size(); ++k) {
        const auto& mp = moved_cloud.points[src_idx[k]];
        const auto& tp = target.points[tgt_idx[k]];
        const double dx = mp.x - tp.x, dy = mp.y - tp.y, dz = mp.z - tp.z;
        weight[k] = 1.0 / (1.0 + (dx * dx + dy * dy + dz * dz) / s2);
      }
    }
    double wsum = 0, csx = 0, csy = 0, ctx = 0, cty = 0;
    for (std::size_t k = 0; k < src_idx.size(); ++k) {
      const double w = weight[k];
      wsum += w;
      csx += w * source.points[src_idx[k]].x;
      csy += w * source.points[src_idx[k]].y;
      ctx += w * target.points[tgt_idx[k]].x;
      cty += w * target.points[tgt_idx[k]].y;
    }
    csx /= wsum; csy /= wsum; ctx /= wsum; cty /= wsum;

    // M = sum w * (t - ct)(s - cs)^T
    double m11 = 0, m12 = 0, m21 = 0, m22 = 0;
    for (std::size_t k = 0; k < src_idx.size(); ++k) {
      const double w = weight[k];
      const double sx = source.points[src_idx[k]].x - csx;
      const double sy = source.points[src_idx[k]].y - csy;
      const double tx = target.points[tgt_idx[k]].x - ctx;
      const double ty = target.points[tgt_idx[k]].y - cty;
      m11 += w * tx * sx;
      m12 += w * tx * sy;
      m21 += w * ty * sx;
      m22 += w * ty * sy;
    }
    const double theta = std::atan2(m21 - m12, m11 + m22);
    const double nc = std::cos(theta), ns = std::sin(theta);
    Pose2 next(ctx - (nc * csx - ns * csy), cty - (ns * csx + nc * csy), theta);

    const double delta = std::abs(next.x - result.transform.x) +
                         std::abs(next.y - result.transform.y) +
                         std::abs(wrap_angle(next.theta - result.transform.theta));
    result.transform = next;
    if (delta < cfg.tol) {
      result.converged = true;
      break;
    }
  }

  // Final correspondence pass for fitness / inlier statistics.
  const double c = std::cos(result.transform.theta), s = std::sin(result.transform.theta);
  double sum2 = 0.0;
  std::size_t inliers = 0;
  for (const auto& p : source.points) {
    Point3 moved{result.transform.x + c * p.x - s * p.y, result.transform.y + s * p.x + c * p.y,
                 p.z};
    std::size_t j;
    const double d2 = grid.nearest(moved, gate2, j);
    if (d2 >= 0.0) {
      sum2 += d2;
      ++inliers;
    }
  }
  if (inliers == 0) {
    result.converged = false;
    result.fitness = std::numeric_limits<double>::infinity();
    result.inlier_fraction = 0.0;
    return result;
  }
  result.fitness = sum2 / static_cast<double>(inliers);
  result.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(source.size());
  return result;
}

}  // namespace fleetmap
