#include <catch2/catch_amalgamated.hpp>

#include "implace/synth.hpp"
#include "implace/train.hpp"

using namespace implace;

namespace {

// Flat ground plus one wall; a small, fast-to-fit scene.
SceneSpec plane_scene() {
  SceneSpec scene;
  Primitive ground;
  ground.kind = Primitive::Kind::Plane;
  scene.primitives.push_back(ground);
  Primitive wall;
  wall.kind = Primitive::Kind::Box;
  wall.center = Vec3(8, 0, 1.5);
  wall.half_extent = Vec3(0.2, 6, 1.5);
  scene.primitives.push_back(wall);
  scene.lidar.rings = 12;
  scene.lidar.azimuth_steps = 360;
  scene.lidar.sigma = 0.0;
  scene.lidar.r_max = 25.0;
  scene.lidar.fov_min_deg = -30;
  scene.lidar.fov_max_deg = 2;
  scene.seed = 3;
  PassSpec pass;
  pass.waypoints = {{-4, 0, 1.4}, {4, 0, 1.4}};
  pass.frame_spacing = 1.0;
  scene.passes.push_back(pass);
  return scene;
}

Submap make_submap(const SynthResult& data) {
  Submap sm;
  for (std::size_t i = 0; i < data.scans.size(); ++i)
    sm.frames.emplace_back(data.scans[i], data.poses[i]);
  return sm;
}

}  // namespace

TEST_CASE("train_submap: zero iterations is a no-op") {
  auto scene = plane_scene();
  auto data = synth_scene(scene);
  MapConfig mc;
  NeuralPointMap map(mc);
  for (std::size_t i = 0; i < data.scans.size(); ++i)
    map.insert_scan(data.scans[i], data.poses[i], 0.1 * i);
  auto before = map.raw_features();
  auto params_before = map.decoder().flatten();
  TrainConfig tc;
  tc.iterations = 0;
  train_submap(map, make_submap(data), tc);
  CHECK(map.raw_features() == before);
  CHECK(map.decoder().flatten() == params_before);
}

TEST_CASE("train_submap: fits the plane scene to 5 cm mean error") {
  auto scene = plane_scene();
  auto data = synth_scene(scene);
  MapConfig mc;
  mc.r_max = scene.lidar.r_max;
  NeuralPointMap map(mc);
  for (std::size_t i = 0; i < data.scans.size(); ++i)
    map.insert_scan(data.scans[i], data.poses[i], 0.1 * i);

  TrainConfig tc;
  tc.iterations = 200;
  auto stats = train_submap(map, make_submap(data), tc);
  CHECK(stats.final_val_loss < stats.initial_val_loss);

  // 1000 held-out near-surface probes against the analytic oracle
  Rng rng = make_rng(777);
  std::uniform_real_distribution<double> ux(-3, 7), uy(-5, 5), uo(-0.3, 0.3);
  double err_sum = 0.0;
  int n = 0;
  while (n < 1000) {
    Vec3 surface(ux(rng), uy(rng), 0.0);
    Vec3 probe = surface + Vec3(0, 0, uo(rng));
    auto s = map.query_sdf(probe);
    if (!s) continue;
    err_sum += std::abs(*s - scene.sdf_static(probe));
    ++n;
  }
  double mean_err = err_sum / n;
  INFO("mean |sdf - analytic| = " << mean_err);
  CHECK(mean_err < 0.05);
}

TEST_CASE("train_submap: deterministic for a fixed seed") {
  auto scene = plane_scene();
  auto data = synth_scene(scene);
  MapConfig mc;
  TrainConfig tc;
  tc.iterations = 40;

  auto run = [&]() {
    NeuralPointMap map(mc);
    for (std::size_t i = 0; i < data.scans.size(); ++i)
      map.insert_scan(data.scans[i], data.poses[i], 0.1 * i);
    auto stats = train_submap(map, make_submap(data), tc);
    return std::make_pair(stats.final_val_loss, map.decoder().flatten());
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("update_stability: consistency counter and ordering") {
  // Synthetic wall watched repeatedly; later the scan sees through a point
  // placed in front of it, which must decay.
  MapConfig mc;
  mc.voxel_size = 0.3;
  mc.stability_band = 0.1;
  NeuralPointMap map(mc);

  // one wall slice at x = 5
  Scan wall;
  for (double y = -1.0; y <= 1.0; y += 0.25)
    for (double z = 0.0; z <= 1.0; z += 0.25) wall.points.emplace_back(5.0, y, z);
  map.insert_scan(wall, Pose{}, 0.0);
  REQUIRE(map.size() > 0);

  // freshly created points have zero stability
  for (const auto& p : map.points()) CHECK(p.stability == 0.0);

  // train-free shortcut: an untrained decoder's |sdf| will usually exceed the
  // band, so drive the consistency path through geometry instead by using
  // the free-space branch: a point hanging in front of the wall decays.
  Scan ghost;
  ghost.points.emplace_back(2.5, 0.0, 0.5);
  map.insert_scan(ghost, Pose{}, 0.5);
  std::size_t ghost_idx = map.size() - 1;
  auto& pts = map.mutable_points();
  pts[ghost_idx].stability = 8.0;

  // five wall re-observations; rays pass through the ghost's location
  for (int t = 1; t <= 5; ++t) map.update_stability(wall, Pose{}, static_cast<double>(t));
  CHECK(map.points()[ghost_idx].stability < 8.0 * 0.1);  // halved five times
}
