#include "fleetmap/scan_context.hpp"

#include <algorithm>
#include <cmath>

#include "fleetmap/errors.hpp"

namespace fleetmap {

ScanDescriptor encode_scan(const PointCloud& cloud, const ScanContextConfig& cfg) {
  ScanDescriptor d;
  d.n_ring = cfg.n_ring;
  d.n_sector = cfg.n_sector;
  d.grid.assign(static_cast<std::size_t>(cfg.n_ring) * cfg.n_sector, 0.0f);

  const double ring_width = cfg.r_max / cfg.n_ring;
  for (const auto& p : cloud.points) {
    const double r = std::hypot(p.x, p.y);
    if (r > cfg.r_max) continue;
    int ring = static_cast<int>(std::floor(r / ring_width));
    if (ring >= cfg.n_ring) ring = cfg.n_ring - 1;  // r == r_max boundary
    // atan2 in (-pi, pi]; +pi maps onto a full turn, which wraps to sector 0.
    const double bearing = std::atan2(p.y, p.x) + kPi;
    int sector = static_cast<int>(std::floor(bearing / (2.0 * kPi) * cfg.n_sector));
    sector %= cfg.n_sector;
    const double h = std::max(0.0, p.z + cfg.sensor_height);
    float& cell = d.at(ring, sector);
    cell = std::max(cell, static_cast<float>(h));
  }
  recompute_ring_key(d);
  return d;
}

void recompute_ring_key(ScanDescriptor& d) {
  d.ring_key.assign(d.n_ring, 0.0f);
  for (int r = 0; r < d.n_ring; ++r) {
    int occupied = 0;
    for (int s = 0; s < d.n_sector; ++s)
      if (d.at(r, s) > 0.0f) ++occupied;
    d.ring_key[r] = static_cast<float>(occupied) / static_cast<float>(d.n_sector);
  }
}

DescriptorMatch descriptor_distance(const ScanDescriptor& a, const ScanDescriptor& b) {
  if (a.n_ring != b.n_ring || a.n_sector != b.n_sector)
    throw ParameterError("descriptor_distance: dimension mismatch");

  const int rings = a.n_ring, sectors = a.n_sector;

  // Precompute column norms once.
  std::vector<double> norm_a(sectors, 0.0), norm_b(sectors, 0.0);
  for (int j = 0; j < sectors; ++j) {
    double na = 0.0, nb = 0.0;
    for (int r = 0; r < rings; ++r) {
      na += static_cast<double>(a.at(r, j)) * a.at(r, j);
      nb += static_cast<double>(b.at(r, j)) * b.at(r, j);
    }
    norm_a[j] = std::sqrt(na);
    norm_b[j] = std::sqrt(nb);
  }

  DescriptorMatch best;
  best.distance = 1.0;
  best.shift = 0;
  for (int shift = 0; shift < sectors; ++shift) {
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < sectors; ++j) {
      const int jb = (j + shift) % sectors;
      if (norm_a[j] == 0.0 || norm_b[jb] == 0.0) continue;  // degenerate column
      double dot = 0.0;
      for (int r = 0; r < rings; ++r)
        dot += static_cast<double>(a.at(r, j)) * b.at(r, jb);
      sum += 1.0 - dot / (norm_a[j] * norm_b[jb]);
      ++used;
    }
    const double dist = used > 0 ? sum / used : 1.0;
    if (dist < best.distance) {
      best.distance = dist;
      best.shift = shift;
    }
  }
  return best;
}

void DescriptorIndex::insert(std::uint64_t handle, const ScanDescriptor& descriptor) {
  entries_[handle] = descriptor;
}

std::vector<QueryResult> DescriptorIndex::query(
    const ScanDescriptor& q, int k, const std::function<bool(std::uint64_t)>& exclude) const {
  // Stage 1: exact ring-key nearest neighbors.
  std::vector<std::pair<double, std::uint64_t>> ranked;
  ranked.reserve(entries_.size());
  for (const auto& [handle, d] : entries_) {
    if (exclude && exclude(handle)) continue;
    double dist2 = 0.0;
    for (int r = 0; r < q.n_ring; ++r) {
      const double diff = static_cast<double>(q.ring_key[r]) - d.ring_key[r];
      dist2 += diff * diff;
    }
    ranked.emplace_back(dist2, handle);
  }
  const std::size_t keep = std::min<std::size_t>(cfg_.n_ringkey, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end());
  ranked.resize(keep);

  // Stage 2: full column-shift distance.
  std::vector<QueryResult> results;
  for (const auto& [rk_dist, handle] : ranked) {
    const DescriptorMatch m = descriptor_distance(q, entries_.at(handle));
    if (m.distance <= cfg_.d_sc) {
      results.push_back({handle, m.distance, m.shift});
    }
  }
  std::sort(results.begin(), results.end(), [](const QueryResult& x, const QueryResult& y) {
    return x.distance != y.distance ? x.distance < y.distance : x.handle < y.handle;
  });
  if (static_cast<int>(results.size()) > k) results.resize(k);
  return results;
}

}  // namespace fleetmap
