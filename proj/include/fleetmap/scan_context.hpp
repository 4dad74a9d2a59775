#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "fleetmap/geometry.hpp"

namespace fleetmap {

struct ScanContextConfig {
  int n_ring = 20;
  int n_sector = 60;
  double r_max = 80.0;          // meters; points beyond are ignored
  double sensor_height = 0.0;   // added to z before the >= 0 clamp
  int n_ringkey = 10;           // ring-key prefilter size
  double d_sc = 0.25;           // acceptance threshold on descriptor distance
  int w_recent = 30;            // recency exclusion window (keyframes)
};

// Polar grid of maximum point heights plus a per-ring occupancy vector.
// "Occupied" means the bin holds a positive clamped height, so the ring key
// is recomputable from the grid alone (which is what goes over the wire).
struct ScanDescriptor {
  int n_ring = 0;
  int n_sector = 0;
  std::vector<float> grid;      // row-major, n_ring x n_sector
  std::vector<float> ring_key;  // occupancy ratio per ring, in [0, 1]

  float at(int ring, int sector) const { return grid[ring * n_sector + sector]; }
  float& at(int ring, int sector) { return grid[ring * n_sector + sector]; }
};

struct DescriptorMatch {
  double distance = 1.0;  // in [0, 1]
  int shift = 0;          // best cyclic column shift (sectors)
};

// Builds the descriptor for a cloud in the sensor/keyframe frame (sensor at
// the origin). Deterministic and independent of point order.
ScanDescriptor encode_scan(const PointCloud& cloud, const ScanContextConfig& cfg);

// Rebuilds ring_key from the grid (used after wire transfer).
void recompute_ring_key(ScanDescriptor& d);

// Column-shift cosine distance: min over cyclic shifts of the mean
// (1 - cosine similarity) over columns where both sides are non-zero.
// Throws ParameterError on dimension mismatch; all-degenerate pairs score 1.
DescriptorMatch descriptor_distance(const ScanDescriptor& a, const ScanDescriptor& b);

struct QueryResult {
  std::uint64_t handle = 0;
  double distance = 1.0;
  int shift = 0;
};

// Exact ring-key prefilter + full-descriptor refinement. Handles are opaque
// (the server uses pose-graph node ids). Callers exclude the query's own
// handle through the predicate.
class DescriptorIndex {
 public:
  explicit DescriptorIndex(const ScanContextConfig& cfg) : cfg_(cfg) {}

  void insert(std::uint64_t handle, const ScanDescriptor& descriptor);
  std::size_t size() const { return entries_.size(); }

  // Top-k entries with descriptor distance <= cfg.d_sc, sorted ascending.
  std::vector<QueryResult> query(const ScanDescriptor& q, int k,
                                 const std::function<bool(std::uint64_t)>& exclude) const;

  const ScanContextConfig& config() const { return cfg_; }

 private:
  ScanContextConfig cfg_;
  std::map<std::uint64_t, ScanDescriptor> entries_;
};

}  // namespace fleetmap
