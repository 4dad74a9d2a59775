#pragma once

#include "fleetmap/geometry.hpp"

namespace fleetmap {

struct IcpConfig {
  double max_corr_dist = 2.0;  // correspondence gate, meters (3D distance)
  double tol = 1e-6;           // per-iteration parameter-change threshold
  int max_iters = 50;
  // The gate anneals geometrically from max_corr_dist toward this value.
  // Equal to max_corr_dist disables annealing.
  double final_corr_dist = 2.0;
  // Cauchy weight scale for the per-iteration closed-form alignment. Pairs
  // snapping across the coarse angular sampling (residuals of several dm)
  // get downweighted against exactly re-observed structure; 0 disables.
  double robust_scale = 0.15;
  // Keep only mutual nearest-neighbor pairs during alignment.
  bool reciprocal = false;
};

struct IcpResult {
  Pose2 transform;              // maps source points into the target frame
  double fitness = 0.0;         // mean squared inlier residual, m^2 (+inf = rejection)
  double inlier_fraction = 0.0; // inlier correspondences / source size
  int iterations = 0;
  bool converged = false;
};

// Point-to-point ICP in 2.5D: correspondences are nearest neighbors in 3D,
// the per-iteration alignment is the closed-form planar Procrustes solution
// (z is carried, not aligned). Throws RegistrationError on empty input. A
// start pose with zero correspondences yields converged=false and an
// infinite-fitness rejection sentinel.
IcpResult scan_match(const PointCloud& source, const PointCloud& target, const Pose2& init,
                     const IcpConfig& cfg = {});

}  // namespace fleetmap
