#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fleetmap/errors.hpp"
#include "fleetmap/rng.hpp"
#include "fleetmap/wire.hpp"

using namespace fleetmap;

namespace {

ObjectObservation random_observation(Rng& rng, ObservationKind kind) {
  ObjectObservation obs;
  obs.agent_id = static_cast<std::uint16_t>(rng.uniform_int(8));
  obs.keyframe_id = static_cast<std::uint32_t>(rng.uniform_int(1000));
  obs.timestamp_us = rng.uniform_int(1'000'000'000);
  obs.kind = kind;
  obs.instance_id = kind == ObservationKind::Dynamic
                        ? static_cast<std::int64_t>(rng.uniform_int(50))
                        : kNoInstance;
  const char* labels[] = {"traffic light", "traffic sign", "pole", "car"};
  obs.class_label = labels[rng.uniform_int(4)];
  const int n = 1 + static_cast<int>(rng.uniform_int(40));
  for (int i = 0; i < n; ++i)
    obs.points.points.push_back({rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(0, 5)});
  obs.points.frame = Frame::Keyframe;
  obs.recompute_bounds();
  return obs;
}

Keyframe sample_keyframe(Rng& rng) {
  Keyframe kf;
  kf.agent_id = 2;
  kf.keyframe_id = 17;
  kf.timestamp_us = 123456789;
  kf.odom_pose = Pose2(1.5, -2.25, 0.75);
  for (int i = 0; i < 100; ++i)
    kf.cloud_raw.points.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0, 4)});
  kf.cloud = kf.cloud_raw;
  kf.cloud.points.resize(80);  // dynamic-free subset
  ScanContextConfig sc;
  kf.descriptor = encode_scan(kf.cloud, sc);
  kf.observations.push_back(random_observation(rng, ObservationKind::Static));
  kf.observations.push_back(random_observation(rng, ObservationKind::Dynamic));
  return kf;
}

}  // namespace

TEST_CASE("observation record round trip") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto obs = random_observation(
        rng, trial % 2 == 0 ? ObservationKind::Static : ObservationKind::Dynamic);
    std::vector<std::uint8_t> buf;
    append_observation(buf, obs);
    CHECK(buf.size() == observation_wire_size(obs));

    std::size_t offset = 0;
    const ObjectObservation back = parse_observation(buf, offset);
    CHECK(offset == buf.size());
    CHECK(back.agent_id == obs.agent_id);
    CHECK(back.keyframe_id == obs.keyframe_id);
    CHECK(back.timestamp_us == obs.timestamp_us);
    CHECK(back.kind == obs.kind);
    CHECK(back.instance_id == obs.instance_id);
    CHECK(back.class_label == obs.class_label);
    REQUIRE(back.points.size() == obs.points.size());
    for (std::size_t i = 0; i < obs.points.size(); ++i) {
      // f32 on the wire
      CHECK(back.points.points[i].x ==
            doctest::Approx(static_cast<float>(obs.points.points[i].x)));
    }
    // bounds are recomputed on decode
    CHECK(back.centroid.x == doctest::Approx(obs.centroid.x).epsilon(1e-5));
    CHECK(back.aabb.min.z == doctest::Approx(obs.aabb.min.z).epsilon(1e-5));
  }
}

TEST_CASE("keyframe message round trip with exact size accounting") {
  Rng rng(22);
  const Keyframe kf = sample_keyframe(rng);
  const auto buf = encode_keyframe(kf);
  CHECK(buf.size() == keyframe_wire_size(kf));

  const Keyframe back = decode_keyframe(buf, kf.descriptor.n_ring, kf.descriptor.n_sector);
  CHECK(back.agent_id == kf.agent_id);
  CHECK(back.keyframe_id == kf.keyframe_id);
  CHECK(back.timestamp_us == kf.timestamp_us);
  CHECK(back.odom_pose.x == doctest::Approx(kf.odom_pose.x));
  CHECK(back.odom_pose.theta == doctest::Approx(kf.odom_pose.theta));
  CHECK(back.cloud.size() == kf.cloud.size());
  CHECK(back.cloud_raw.size() == kf.cloud_raw.size());
  CHECK(back.descriptor.grid == kf.descriptor.grid);
  CHECK(back.descriptor.ring_key == kf.descriptor.ring_key);
  REQUIRE(back.observations.size() == kf.observations.size());
  CHECK(back.observations[1].instance_id == kf.observations[1].instance_id);
}

TEST_CASE("truncated buffers raise DataError") {
  Rng rng(23);
  const Keyframe kf = sample_keyframe(rng);
  auto buf = encode_keyframe(kf);
  buf.resize(buf.size() - 7);
  CHECK_THROWS_AS(decode_keyframe(buf, kf.descriptor.n_ring, kf.descriptor.n_sector), DataError);

  std::vector<std::uint8_t> tiny{1, 2, 3};
  std::size_t offset = 0;
  CHECK_THROWS_AS(parse_observation(tiny, offset), DataError);
}

TEST_CASE("box intersection and IoU") {
  Aabb3 unit{{0, 0, 0}, {1, 1, 1}};
  Aabb3 shifted{{0.5, 0, 0}, {1.5, 1, 1}};
  CHECK(intersection_volume(unit, unit) == doctest::Approx(1.0));
  CHECK(intersection_volume(unit, shifted) == doctest::Approx(0.5));
  CHECK(box_iou(unit, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  Aabb3 far{{5, 5, 5}, {6, 6, 6}};
  CHECK(box_iou(unit, far) == 0.0);
}
