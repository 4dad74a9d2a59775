#include "fleetmap/wire.hpp"

#include <cstring>

#include "fleetmap/errors.hpp"
#include "fleetmap/scan_context.hpp"

namespace fleetmap {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
  if (offset + sizeof(T) > buf.size()) throw DataError("wire: truncated message");
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

void put_cloud(std::vector<std::uint8_t>& buf, const PointCloud& cloud) {
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cloud.size()));
  for (const auto& p : cloud.points) {
    put<float>(buf, static_cast<float>(p.x));
    put<float>(buf, static_cast<float>(p.y));
    put<float>(buf, static_cast<float>(p.z));
  }
}

PointCloud take_cloud(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
  PointCloud cloud;
  const std::uint32_t count = take<std::uint32_t>(buf, offset);
  cloud.points.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const float x = take<float>(buf, offset);
    const float y = take<float>(buf, offset);
    const float z = take<float>(buf, offset);
    cloud.points.push_back({x, y, z});
  }
  return cloud;
}

}  // namespace

std::size_t observation_wire_size(const ObjectObservation& obs) {
  return 2 + 4 + 8 + 1 + 8 + 2 + obs.class_label.size() + 4 + 12 * obs.points.size();
}

void append_observation(std::vector<std::uint8_t>& buf, const ObjectObservation& obs) {
  put<std::uint16_t>(buf, obs.agent_id);
  put<std::uint32_t>(buf, obs.keyframe_id);
  put<std::uint64_t>(buf, obs.timestamp_us);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(obs.kind));
  put<std::int64_t>(buf, obs.instance_id);
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(obs.class_label.size()));
  buf.insert(buf.end(), obs.class_label.begin(), obs.class_label.end());
  put_cloud(buf, obs.points);
}

ObjectObservation parse_observation(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
  ObjectObservation obs;
  obs.agent_id = take<std::uint16_t>(buf, offset);
  obs.keyframe_id = take<std::uint32_t>(buf, offset);
  obs.timestamp_us = take<std::uint64_t>(buf, offset);
  obs.kind = static_cast<ObservationKind>(take<std::uint8_t>(buf, offset));
  obs.instance_id = take<std::int64_t>(buf, offset);
  const std::uint16_t len = take<std::uint16_t>(buf, offset);
  if (offset + len > buf.size()) throw DataError("wire: truncated class label");
  obs.class_label.assign(reinterpret_cast<const char*>(buf.data() + offset), len);
  offset += len;
  obs.points = take_cloud(buf, offset);
  obs.points.frame = Frame::Keyframe;
  obs.recompute_bounds();
  return obs;
}

std::size_t keyframe_wire_size(const Keyframe& kf) {
  std::size_t body = 2 + 4 + 8 + 3 * 8;
  body += 4 + 12 * kf.cloud.size();
  body += 4 + 12 * kf.cloud_raw.size();
  body += 4 * kf.descriptor.grid.size();
  body += 4;
  for (const auto& obs : kf.observations) body += observation_wire_size(obs);
  return 4 + body;  // length prefix included
}

std::vector<std::uint8_t> encode_keyframe(const Keyframe& kf) {
  std::vector<std::uint8_t> buf;
  buf.reserve(keyframe_wire_size(kf));
  put<std::uint32_t>(buf, 0);  // patched below
  put<std::uint16_t>(buf, kf.agent_id);
  put<std::uint32_t>(buf, kf.keyframe_id);
  put<std::uint64_t>(buf, kf.timestamp_us);
  put<double>(buf, kf.odom_pose.x);
  put<double>(buf, kf.odom_pose.y);
  put<double>(buf, kf.odom_pose.theta);
  put_cloud(buf, kf.cloud);
  put_cloud(buf, kf.cloud_raw);
  for (float v : kf.descriptor.grid) put<float>(buf, v);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(kf.observations.size()));
  for (const auto& obs : kf.observations) append_observation(buf, obs);

  const std::uint32_t body = static_cast<std::uint32_t>(buf.size() - 4);
  std::memcpy(buf.data(), &body, 4);
  return buf;
}

Keyframe decode_keyframe(const std::vector<std::uint8_t>& buf, int n_ring, int n_sector) {
  std::size_t offset = 0;
  const std::uint32_t body = take<std::uint32_t>(buf, offset);
  if (buf.size() - 4 != body) throw DataError("wire: keyframe length prefix mismatch");

  Keyframe kf;
  kf.agent_id = take<std::uint16_t>(buf, offset);
  kf.keyframe_id = take<std::uint32_t>(buf, offset);
  kf.timestamp_us = take<std::uint64_t>(buf, offset);
  const double x = take<double>(buf, offset);
  const double y = take<double>(buf, offset);
  const double theta = take<double>(buf, offset);
  kf.odom_pose = Pose2(x, y, theta);
  kf.cloud = take_cloud(buf, offset);
  kf.cloud.frame = Frame::Keyframe;
  kf.cloud_raw = take_cloud(buf, offset);
  kf.cloud_raw.frame = Frame::Keyframe;

  kf.descriptor.n_ring = n_ring;
  kf.descriptor.n_sector = n_sector;
  kf.descriptor.grid.resize(static_cast<std::size_t>(n_ring) * n_sector);
  for (auto& v : kf.descriptor.grid) v = take<float>(buf, offset);
  recompute_ring_key(kf.descriptor);

  const std::uint32_t n_obs = take<std::uint32_t>(buf, offset);
  kf.observations.reserve(n_obs);
  for (std::uint32_t i = 0; i < n_obs; ++i)
    kf.observations.push_back(parse_observation(buf, offset));
  if (offset != buf.size()) throw DataError("wire: trailing bytes in keyframe message");
  return kf;
}

}  // namespace fleetmap
