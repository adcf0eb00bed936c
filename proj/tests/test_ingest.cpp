#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "implace/scan.hpp"
#include "implace/synth.hpp"

using namespace implace;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("scan decode: single record") {
  float rec[4] = {1.0f, 2.0f, 3.0f, 0.5f};
  Scan scan = decode_scan(reinterpret_cast<const std::uint8_t*>(rec), 16);
  REQUIRE(scan.size() == 1);
  CHECK(scan.points[0] == Vec3(1, 2, 3));
  CHECK(scan.intensity[0] == 0.5f);
}

TEST_CASE("scan decode: empty file rejected") {
  std::vector<std::uint8_t> empty;
  CHECK_THROWS_WITH(decode_scan(empty.data(), 0), Catch::Matchers::ContainsSubstring("empty scan"));
}

TEST_CASE("scan decode: truncated record rejected") {
  std::vector<std::uint8_t> bytes(10, 0);
  CHECK_THROWS_WITH(decode_scan(bytes.data(), 10),
                    Catch::Matchers::ContainsSubstring("truncated record"));
}

TEST_CASE("scan decode: non-finite value reported with index") {
  float recs[8] = {0, 0, 0, 0, std::numeric_limits<float>::infinity(), 0, 0, 0};
  CHECK_THROWS_WITH(decode_scan(reinterpret_cast<const std::uint8_t*>(recs), 32),
                    Catch::Matchers::ContainsSubstring("record 1"));
}

TEST_CASE("scan format: decode of encode is the identity") {
  Rng rng = make_rng(101);
  std::uniform_real_distribution<float> u(-80.0f, 80.0f);
  Scan scan;
  for (int i = 0; i < 500; ++i) {
    scan.points.emplace_back(u(rng), u(rng), u(rng));
    scan.intensity.push_back(std::abs(u(rng)) / 80.0f);
  }
  // points are stored float32, so first quantize through one round trip
  Scan q = decode_scan(encode_scan(scan).data(), scan.size() * 16);
  auto bytes = encode_scan(q);
  Scan rt = decode_scan(bytes.data(), bytes.size());
  REQUIRE(rt.size() == q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(rt.points[i] == q.points[i]);
    CHECK(rt.intensity[i] == q.intensity[i]);
  }
  CHECK(encode_scan(rt) == bytes);
}

TEST_CASE("scan file io round trip") {
  Scan scan;
  scan.points = {{1, 2, 3}, {-4, 5, -6}};
  scan.intensity = {0.25f, 0.75f};
  auto path = temp_path("implace_scan_io.bin");
  save_scan_file(path, scan);
  Scan loaded = load_scan_file(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.points[1].y() == 5.0);
  std::filesystem::remove(path);
}

TEST_CASE("pose file: kitti 3x4 row-major layout") {
  auto path = temp_path("implace_poses.txt");
  {
    std::ofstream out(path);
    out << "1 0 0 10 0 1 0 20 0 0 1 30\n";
    out << "0 -1 0 1  1 0 0 2  0 0 1 3\n";
  }
  auto poses = load_pose_file(path);
  REQUIRE(poses.size() == 2);
  CHECK((poses[0].translation - Vec3(10, 20, 30)).norm() < 1e-12);
  // second pose rotates x onto y
  Vec3 v = poses[1].rotation * Vec3(1, 0, 0);
  CHECK((v - Vec3(0, 1, 0)).norm() < 1e-12);

  save_pose_file(path, poses);
  auto again = load_pose_file(path);
  CHECK((again[1].translation - poses[1].translation).norm() < 1e-15);
  CHECK(again[1].rotation.angularDistance(poses[1].rotation) < 1e-12);
  std::filesystem::remove(path);
}

TEST_CASE("accumulate: 5 m per frame with tau 25 gives 6-frame submaps") {
  std::vector<Scan> scans(18);
  std::vector<Pose> poses(18);
  for (int i = 0; i < 18; ++i) {
    scans[i].points = {{0, 0, 0}};
    poses[i].translation = Vec3(5.0 * i, 0, 0);
  }
  auto submaps = accumulate_submaps(scans, poses, 25.0);
  REQUIRE(submaps.size() == 3);
  for (const auto& sm : submaps) {
    CHECK(sm.frames.size() == 6);
    CHECK(sm.travel_distance >= 25.0);
    CHECK_FALSE(sm.partial);
  }
}

TEST_CASE("accumulate: stationary stream stays one partial submap") {
  std::vector<Scan> scans(10);
  std::vector<Pose> poses(10);
  for (auto& s : scans) s.points = {{1, 1, 1}};
  auto submaps = accumulate_submaps(scans, poses, 25.0);
  REQUIRE(submaps.size() == 1);
  CHECK(submaps[0].partial);
  CHECK(submaps[0].travel_distance == 0.0);
}

TEST_CASE("accumulate: 100 frames at 1 m per frame") {
  // 100 frames span 99 m of travel; sealing at >= 25 m internal travel
  // consumes 26 frames per submap, so 3 sealed plus a partial remainder.
  std::vector<Scan> scans(100);
  std::vector<Pose> poses(100);
  for (int i = 0; i < 100; ++i) {
    scans[i].points = {{0, 0, 0}};
    poses[i].translation = Vec3(static_cast<double>(i), 0, 0);
  }
  auto submaps = accumulate_submaps(scans, poses, 25.0);
  REQUIRE(submaps.size() == 4);
  std::size_t total = 0;
  for (std::size_t k = 0; k < submaps.size(); ++k) {
    total += submaps[k].frames.size();
    if (k + 1 < submaps.size()) {
      CHECK(submaps[k].frames.size() == 26);
      CHECK(submaps[k].travel_distance >= 25.0);
      CHECK_FALSE(submaps[k].partial);
    } else {
      CHECK(submaps[k].partial);
    }
  }
  CHECK(total == 100);  // exhaustive, order-preserving partition
}

TEST_CASE("accumulate: scan/pose mismatch raises") {
  std::vector<Scan> scans(3);
  std::vector<Pose> poses(2);
  CHECK_THROWS_AS(accumulate_submaps(scans, poses, 10.0), InvalidInput);
}

TEST_CASE("submap centroid is the mean of frame translations") {
  Submap sm;
  for (int i = 0; i < 4; ++i) {
    Pose p;
    p.translation = Vec3(i, 2.0 * i, 0);
    sm.frames.emplace_back(Scan{}, p);
  }
  CHECK((sm.centroid() - Vec3(1.5, 3.0, 0)).norm() < 1e-12);
}

TEST_CASE("synth: downward ray onto ground plane") {
  SceneSpec scene;
  Primitive ground;
  ground.kind = Primitive::Kind::Plane;
  ground.normal = Vec3(0, 0, 1);
  ground.offset = 0.0;
  scene.primitives.push_back(ground);
  scene.lidar.rings = 1;
  scene.lidar.azimuth_steps = 1;
  scene.lidar.fov_min_deg = -90.0;
  scene.lidar.fov_max_deg = -90.0;
  scene.lidar.sigma = 0.0;
  PassSpec pass;
  pass.waypoints = {{0, 0, 1.5}, {0.5, 0, 1.5}};
  pass.frame_spacing = 10.0;  // one frame
  scene.passes.push_back(pass);
  auto result = synth_scene(scene);
  REQUIRE(result.scans.size() == 1);
  REQUIRE(result.scans[0].size() == 1);
  CHECK(std::abs(result.scans[0].points[0].norm() - 1.5) < 1e-9);
}

TEST_CASE("synth: ray from (10,0,0) toward sphere at origin hits at range 8") {
  Primitive sphere;
  sphere.kind = Primitive::Kind::Sphere;
  sphere.radius = 2.0;
  Vec3 origin(10, 0, 0);
  Vec3 dir = (Vec3(0, 0, 0) - origin).normalized();
  auto t = sphere.ray_hit(origin, dir);
  REQUIRE(t.has_value());
  CHECK(std::abs(*t - 8.0) < 1e-12);
  Vec3 hit = origin + dir * *t;
  CHECK((hit - Vec3(2, 0, 0)).norm() < 1e-12);
}

TEST_CASE("synth: deterministic for a fixed seed") {
  SceneSpec scene;
  Primitive ground;
  ground.kind = Primitive::Kind::Plane;
  scene.primitives.push_back(ground);
  Primitive box;
  box.kind = Primitive::Kind::Box;
  box.center = Vec3(8, 0, 1);
  box.half_extent = Vec3(1, 1, 1);
  scene.primitives.push_back(box);
  scene.seed = 99;
  scene.lidar.rings = 4;
  scene.lidar.azimuth_steps = 90;
  PassSpec pass;
  pass.waypoints = {{0, 0, 1.5}, {5, 0, 1.5}};
  pass.frame_spacing = 1.0;
  scene.passes.push_back(pass);

  auto a = synth_scene(scene);
  auto b = synth_scene(scene);
  REQUIRE(a.scans.size() == b.scans.size());
  for (std::size_t f = 0; f < a.scans.size(); ++f) {
    REQUIRE(a.scans[f].size() == b.scans[f].size());
    CHECK(encode_scan(a.scans[f]) == encode_scan(b.scans[f]));
  }
}

TEST_CASE("synth: noiseless hits lie on the analytic surface") {
  SceneSpec scene;
  Primitive ground;
  ground.kind = Primitive::Kind::Plane;
  scene.primitives.push_back(ground);
  Primitive sphere;
  sphere.kind = Primitive::Kind::Sphere;
  sphere.center = Vec3(6, 2, 1);
  sphere.radius = 1.5;
  scene.primitives.push_back(sphere);
  Primitive cyl;
  cyl.kind = Primitive::Kind::Cylinder;
  cyl.center = Vec3(-5, 4, 0);
  cyl.radius = 1.0;
  cyl.height = 3.0;
  scene.primitives.push_back(cyl);
  Primitive box;
  box.kind = Primitive::Kind::Box;
  box.center = Vec3(0, -6, 1);
  box.half_extent = Vec3(2, 1, 1);
  box.yaw = deg2rad(30.0);
  scene.primitives.push_back(box);

  scene.lidar.sigma = 0.0;
  scene.lidar.rings = 8;
  scene.lidar.azimuth_steps = 180;
  PassSpec pass;
  pass.waypoints = {{0, 0, 1.5}, {2, 0, 1.5}};
  pass.frame_spacing = 1.0;
  scene.passes.push_back(pass);

  auto result = synth_scene(scene);
  REQUIRE_FALSE(result.scans.empty());
  std::size_t checked = 0;
  for (std::size_t f = 0; f < result.scans.size(); ++f) {
    const auto& scan = result.scans[f];
    const auto& pose = result.poses[f];
    for (const auto& p : scan.points) {
      Vec3 world = pose.apply(p);
      CHECK(std::abs(scene.sdf_static(world)) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("synth: empty scene raises") {
  SceneSpec scene;
  PassSpec pass;
  pass.waypoints = {{0, 0, 0}, {1, 0, 0}};
  scene.passes.push_back(pass);
  CHECK_THROWS_AS(synth_scene(scene), InvalidInput);
}

TEST_CASE("scene spec parser") {
  std::istringstream in(R"(
# test scene
seed = 11
lidar.rings = 8
lidar.azimuth_steps = 120
lidar.r_max = 30
lidar.sigma = 0.01
lidar.fov_deg = -20 2
plane = 0 0 1 0
sphere = 3 4 1 2
box = 1 2 3 0.5 0.5 0.5 45 until=3.5
cylinder = -2 0 0 1 4
pass = spacing=2.0 yaw_offset=20 azimuth_scale=0.5
waypoint = 0 0 1.5
waypoint = 10 0 1.5
)");
  SceneSpec scene = parse_scene_spec(in);
  CHECK(scene.seed == 11);
  CHECK(scene.lidar.rings == 8);
  CHECK(scene.lidar.fov_max_deg == 2.0);
  REQUIRE(scene.primitives.size() == 4);
  CHECK(scene.primitives[2].t_until == 3.5);
  CHECK(scene.primitives[2].yaw == Catch::Approx(deg2rad(45)));
  CHECK_FALSE(scene.primitives[2].permanent());
  CHECK(scene.primitives[0].permanent());
  REQUIRE(scene.passes.size() == 1);
  CHECK(scene.passes[0].yaw_offset_deg == 20.0);
  CHECK(scene.passes[0].waypoints.size() == 2);

  // frames every 2 m over a 10 m segment -> 6 frames, half azimuth
  auto result = synth_scene(scene);
  CHECK(result.poses.size() == 6);
}

TEST_CASE("submap partitioning preserves the stream order") {
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> step(0.0, 3.0);
  std::vector<Scan> scans;
  std::vector<Pose> poses;
  Vec3 pos = Vec3::Zero();
  for (int i = 0; i < 60; ++i) {
    Scan s;
    s.points = {{static_cast<double>(i), 0, 0}};
    scans.push_back(s);
    Pose p;
    pos += Vec3(step(rng), step(rng) * 0.2, 0);
    p.translation = pos;
    poses.push_back(p);
  }
  auto submaps = accumulate_submaps(scans, poses, 10.0);
  std::size_t i = 0;
  for (const auto& sm : submaps)
    for (const auto& [scan, pose] : sm.frames) {
      CHECK(scan.points[0].x() == static_cast<double>(i));
      ++i;
    }
  CHECK(i == 60);
}
