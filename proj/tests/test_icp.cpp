#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fleetmap/errors.hpp"
#include "fleetmap/icp.hpp"
#include "fleetmap/rng.hpp"

using namespace fleetmap;

namespace {

// Structured random cloud: a few wall-like segments plus scatter, so the
// planar registration problem is well conditioned.
PointCloud synthetic_scan(Rng& rng, int n = 500) {
  PointCloud cloud;
  cloud.points.reserve(n);
  const int walls = 4;
  for (int w = 0; w < walls; ++w) {
    const double x0 = rng.uniform(-20, 20), y0 = rng.uniform(-20, 20);
    const double dir = rng.uniform(-kPi, kPi);
    const double len = rng.uniform(8, 20);
    const int per_wall = n / (walls + 1);
    for (int i = 0; i < per_wall; ++i) {
      const double t = rng.uniform(0, len);
      cloud.points.push_back(
          {x0 + t * std::cos(dir), y0 + t * std::sin(dir), rng.uniform(0, 3)});
    }
  }
  while (static_cast<int>(cloud.size()) < n)
    cloud.points.push_back({rng.uniform(-25, 25), rng.uniform(-25, 25), rng.uniform(0, 2)});
  return cloud;
}

PointCloud apply(const Pose2& pose, const PointCloud& cloud) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = transform_point(pose, p);
  return out;
}

}  // namespace

TEST_CASE("cloud against itself is identity") {
  Rng rng(42);
  PointCloud cloud = synthetic_scan(rng);
  IcpResult r = scan_match(cloud, cloud, Pose2::identity());
  CHECK(r.converged);
  CHECK(r.fitness < 1e-12);
  CHECK(std::abs(r.transform.x) < 1e-9);
  CHECK(std::abs(r.transform.y) < 1e-9);
  CHECK(std::abs(r.transform.theta) < 1e-9);
  CHECK(r.inlier_fraction == doctest::Approx(1.0));
}

TEST_CASE("recovers a known transform noise-free") {
  Rng rng(7);
  PointCloud source = synthetic_scan(rng);
  const Pose2 truth(0.3, -0.2, 5.0 * kPi / 180.0);
  // target = source moved by truth, so scan_match(source, target) = truth.
  PointCloud target = apply(truth, source);
  IcpResult r = scan_match(source, target, Pose2::identity());
  CHECK(r.converged);
  CHECK(std::abs(r.transform.x - truth.x) < 1e-3);
  CHECK(std::abs(r.transform.y - truth.y) < 1e-3);
  CHECK(std::abs(wrap_angle(r.transform.theta - truth.theta)) < 0.05 * kPi / 180.0);
}

TEST_CASE("disjoint clouds are rejected with the infinite-fitness sentinel") {
  PointCloud a, b;
  for (int i = 0; i < 10; ++i) {
    a.points.push_back({i * 0.1, 0, 0});
    b.points.push_back({1000.0 + i * 0.1, 0, 0});
  }
  IcpResult r = scan_match(a, b, Pose2::identity());
  CHECK_FALSE(r.converged);
  CHECK(std::isinf(r.fitness));
  CHECK(r.inlier_fraction == 0.0);
}

TEST_CASE("empty cloud raises") {
  PointCloud empty, one;
  one.points.push_back({0, 0, 0});
  CHECK_THROWS_AS(scan_match(empty, one, Pose2::identity()), RegistrationError);
  CHECK_THROWS_AS(scan_match(one, empty, Pose2::identity()), RegistrationError);
}

TEST_CASE("forward and inverse runs compose to identity") {
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud source = synthetic_scan(rng);
    const Pose2 truth(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                      rng.uniform(-10, 10) * kPi / 180.0);
    PointCloud target = apply(truth, source);
    IcpResult fwd = scan_match(source, target, Pose2::identity());
    IcpResult bwd = scan_match(target, source, inverse(fwd.transform));
    const Pose2 loop = compose(fwd.transform, bwd.transform);
    CHECK(std::hypot(loop.x, loop.y) < 1e-2);
  }
}
