#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fleetmap/keyframe.hpp"
#include "fleetmap/observation.hpp"

namespace fleetmap {

// Little-endian binary wire formats.
//
// Keyframe message (length-prefixed):
//   u32 body_length
//   u16 agent_id, u32 keyframe_id, u64 timestamp_us
//   f64 x, y, theta
//   cloud {u32 count, count * (f32 x, y, z)}      -- dynamic-free
//   cloud {u32 count, count * (f32 x, y, z)}      -- raw
//   descriptor {n_ring*n_sector f32}              -- dimensions from config
//   u32 observation_count, observation records
//
// Observation record (self-delimiting):
//   u16 agent_id, u32 keyframe_id, u64 timestamp_us
//   u8 kind, i64 instance_id (-1 = none)
//   u16 class_length, class bytes (UTF-8)
//   u32 point_count, count * (f32 x, y, z)

std::size_t observation_wire_size(const ObjectObservation& obs);
void append_observation(std::vector<std::uint8_t>& buf, const ObjectObservation& obs);
// Reads one record starting at offset; advances offset. Bounds are recomputed
// from the decoded points. Throws DataError on truncation.
ObjectObservation parse_observation(const std::vector<std::uint8_t>& buf, std::size_t& offset);

std::size_t keyframe_wire_size(const Keyframe& kf);
std::vector<std::uint8_t> encode_keyframe(const Keyframe& kf);
// n_ring/n_sector must match the sender's descriptor layout.
Keyframe decode_keyframe(const std::vector<std::uint8_t>& buf, int n_ring, int n_sector);

}  // namespace fleetmap
