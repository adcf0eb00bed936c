#pragma once

#include <map>
#include <optional>

#include "implace/scan.hpp"

namespace implace {

// Analytic scene primitive. Every primitive supports both an exact SDF and a
// closed-form ray intersection so ray casting needs no iterative marching.
// A primitive may carry a lifetime [t_from, t_until) to model objects that
// appear or depart during a sequence.
struct Primitive {
  enum class Kind { Plane, Box, Sphere, Cylinder };
  Kind kind = Kind::Plane;

  Vec3 normal{0, 0, 1};  // plane: unit normal, plane is n.x = offset
  double offset = 0.0;
  Vec3 center{Vec3::Zero()};
  Vec3 half_extent{Vec3::Zero()};  // box
  double radius = 0.0;             // sphere / cylinder
  double height = 0.0;             // cylinder, z-extent from center.z()
  double yaw = 0.0;                // box rotation about z

  double t_from = -std::numeric_limits<double>::infinity();
  double t_until = std::numeric_limits<double>::infinity();

  bool alive(double t) const { return t >= t_from && t < t_until; }
  bool permanent() const {
    return t_from == -std::numeric_limits<double>::infinity() &&
           t_until == std::numeric_limits<double>::infinity();
  }

  double sdf(const Vec3& p) const {
    switch (kind) {
      case Kind::Plane:
        return normal.dot(p) - offset;
      case Kind::Sphere:
        return (p - center).norm() - radius;
      case Kind::Box: {
        Vec3 local = p - center;
        double c = std::cos(-yaw), s = std::sin(-yaw);
        Vec3 q(c * local.x() - s * local.y(), s * local.x() + c * local.y(), local.z());
        Vec3 d = q.cwiseAbs() - half_extent;
        Vec3 outside = d.cwiseMax(0.0);
        double inside = std::min(d.maxCoeff(), 0.0);
        return outside.norm() + inside;
      }
      case Kind::Cylinder: {
        Vec3 local = p - center;
        double dr = std::hypot(local.x(), local.y()) - radius;
        double dz = std::abs(local.z() - height * 0.5) - height * 0.5;
        double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
        return std::min(std::max(dr, dz), 0.0) + std::hypot(ox, oz);
      }
    }
    return std::numeric_limits<double>::max();
  }

  // Smallest t > 0 with origin + t*dir on the surface, if any.
  std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir) const {
    constexpr double kEps = 1e-12;
    switch (kind) {
      case Kind::Plane: {
        double denom = normal.dot(dir);
        if (std::abs(denom) < kEps) return std::nullopt;
        double t = (offset - normal.dot(origin)) / denom;
        if (t <= kEps) return std::nullopt;
        return t;
      }
      case Kind::Sphere: {
        Vec3 oc = origin - center;
        double b = oc.dot(dir);
        double c = oc.squaredNorm() - radius * radius;
        double disc = b * b - c;
        if (disc < 0) return std::nullopt;
        double sq = std::sqrt(disc);
        double t = -b - sq;
        if (t <= kEps) t = -b + sq;
        if (t <= kEps) return std::nullopt;
        return t;
      }
      case Kind::Box: {
        double cy = std::cos(-yaw), sy = std::sin(-yaw);
        Vec3 lo = origin - center;
        Vec3 o(cy * lo.x() - sy * lo.y(), sy * lo.x() + cy * lo.y(), lo.z());
        Vec3 d(cy * dir.x() - sy * dir.y(), sy * dir.x() + cy * dir.y(), dir.z());
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          if (std::abs(d[a]) < kEps) {
            if (std::abs(o[a]) > half_extent[a]) return std::nullopt;
            continue;
          }
          double t1 = (-half_extent[a] - o[a]) / d[a];
          double t2 = (half_extent[a] - o[a]) / d[a];
          if (t1 > t2) std::swap(t1, t2);
          tmin = std::max(tmin, t1);
          tmax = std::min(tmax, t2);
          if (tmin > tmax) return std::nullopt;
        }
        double t = tmin > kEps ? tmin : tmax;
        if (t <= kEps) return std::nullopt;
        return t;
      }
      case Kind::Cylinder: {
        double z0 = center.z(), z1 = center.z() + height;
        Vec3 oc = origin - center;
        double a = dir.x() * dir.x() + dir.y() * dir.y();
        double best = std::numeric_limits<double>::max();
        if (a > kEps) {
          double b = oc.x() * dir.x() + oc.y() * dir.y();
          double c = oc.x() * oc.x() + oc.y() * oc.y() - radius * radius;
          double disc = b * b - a * c;
          if (disc >= 0) {
            double sq = std::sqrt(disc);
            for (double t : {(-b - sq) / a, (-b + sq) / a}) {
              if (t <= kEps) continue;
              double z = origin.z() + t * dir.z();
              if (z >= z0 && z <= z1) best = std::min(best, t);
            }
          }
        }
        // end caps
        if (std::abs(dir.z()) > kEps) {
          for (double zc : {z0, z1}) {
            double t = (zc - origin.z()) / dir.z();
            if (t <= kEps) continue;
            double x = origin.x() + t * dir.x() - center.x();
            double y = origin.y() + t * dir.y() - center.y();
            if (x * x + y * y <= radius * radius) best = std::min(best, t);
          }
        }
        if (best == std::numeric_limits<double>::max()) return std::nullopt;
        return best;
      }
    }
    return std::nullopt;
  }
};

struct LidarSpec {
  int rings = 16;
  int azimuth_steps = 360;
  double r_max = 50.0;
  double sigma = 0.02;
  double fov_min_deg = -24.0;
  double fov_max_deg = 2.0;
};

// One traversal of a waypoint polyline. Frames are placed every
// frame_spacing meters; heading follows the direction of travel plus
// yaw_offset_deg. azimuth_scale thins the horizontal ray count.
struct PassSpec {
  std::vector<Vec3> waypoints;
  double frame_spacing = 1.0;
  double yaw_offset_deg = 0.0;
  double azimuth_scale = 1.0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  LidarSpec lidar;
  double frame_dt = 0.1;
  std::vector<Primitive> primitives;
  std::vector<PassSpec> passes;

  // Union SDF over primitives alive at time t.
  double sdf_at(const Vec3& p, double t) const {
    double best = std::numeric_limits<double>::max();
    for (const auto& prim : primitives)
      if (prim.alive(t)) best = std::min(best, prim.sdf(p));
    return best;
  }
  // Union SDF over permanent primitives; the oracle for static scenes.
  double sdf_static(const Vec3& p) const {
    double best = std::numeric_limits<double>::max();
    for (const auto& prim : primitives)
      if (prim.permanent()) best = std::min(best, prim.sdf(p));
    return best;
  }
};

namespace detail {

// Frames at arc-length positions 0, s, 2s, ... along the waypoint polyline,
// heading aligned with the local direction of travel.
inline std::vector<Pose> pass_poses(const PassSpec& pass) {
  std::vector<Pose> poses;
  if (pass.waypoints.size() == 1) {
    Pose p;
    p.translation = pass.waypoints[0];
    poses.push_back(p);
    return poses;
  }
  if (pass.waypoints.size() < 2) return poses;
  double spacing = std::max(1e-6, pass.frame_spacing);
  double next_d = 0.0;  // arc length of the next frame to emit
  double walked = 0.0;
  for (std::size_t s = 0; s + 1 < pass.waypoints.size(); ++s) {
    Vec3 a = pass.waypoints[s], b = pass.waypoints[s + 1];
    Vec3 seg = b - a;
    double len = seg.norm();
    if (len < 1e-9) continue;
    Vec3 dir = seg / len;
    double yaw = std::atan2(dir.y(), dir.x()) + deg2rad(pass.yaw_offset_deg);
    Quat rot(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    while (next_d <= walked + len + 1e-9) {
      Pose p;
      p.translation = a + dir * (next_d - walked);
      p.rotation = rot;
      poses.push_back(p);
      next_d += spacing;
    }
    walked += len;
  }
  return poses;
}

}  // namespace detail

struct SynthResult {
  std::vector<Scan> scans;
  std::vector<Pose> poses;
};

// Casts the configured ray pattern against the union of alive primitives from
// every trajectory frame. Range noise is Gaussian along the ray. Frames use
// independent seeded generators, so output is reproducible regardless of
// evaluation order.
inline SynthResult synth_scene(const SceneSpec& scene) {
  if (scene.primitives.empty()) throw InvalidInput("synthetic scene has no primitives");
  SynthResult out;
  std::size_t frame_index = 0;
  for (const auto& pass : scene.passes) {
    auto poses = detail::pass_poses(pass);
    int az_steps = std::max(1, static_cast<int>(std::lround(
                                    scene.lidar.azimuth_steps * pass.azimuth_scale)));
    for (const auto& pose : poses) {
      Scan scan;
      scan.timestamp = scene.frame_dt * static_cast<double>(frame_index);
      Rng rng = make_rng(scene.seed, frame_index);
      std::normal_distribution<double> noise(0.0, scene.lidar.sigma);
      for (int ring = 0; ring < scene.lidar.rings; ++ring) {
        double frac = scene.lidar.rings > 1
                          ? static_cast<double>(ring) / (scene.lidar.rings - 1)
                          : 0.5;
        double elev = deg2rad(scene.lidar.fov_min_deg +
                              frac * (scene.lidar.fov_max_deg - scene.lidar.fov_min_deg));
        for (int az = 0; az < az_steps; ++az) {
          double theta = 2.0 * kPi * az / az_steps;
          Vec3 dir_sensor(std::cos(elev) * std::cos(theta),
                          std::cos(elev) * std::sin(theta), std::sin(elev));
          Vec3 dir_world = pose.rotation * dir_sensor;
          double best = std::numeric_limits<double>::max();
          for (const auto& prim : scene.primitives) {
            if (!prim.alive(scan.timestamp)) continue;
            if (auto t = prim.ray_hit(pose.translation, dir_world))
              best = std::min(best, *t);
          }
          if (best > scene.lidar.r_max) continue;
          double range = best;
          if (scene.lidar.sigma > 0.0) range += noise(rng);
          range = std::max(0.05, range);
          scan.points.push_back(dir_sensor * range);
          scan.intensity.push_back(0.5f);
        }
      }
      out.scans.push_back(std::move(scan));
      out.poses.push_back(pose);
      ++frame_index;
    }
  }
  return out;
}

// --- scene config text format -------------------------------------------
//
//   seed = 42
//   lidar.rings = 16
//   lidar.azimuth_steps = 360
//   lidar.r_max = 50
//   lidar.sigma = 0.02
//   lidar.fov_deg = -24 2
//   plane = nx ny nz offset
//   box = cx cy cz hx hy hz [yaw_deg] [until=T] [from=T]
//   sphere = cx cy cz r
//   cylinder = cx cy zbase r h
//   pass = spacing=1.0 yaw_offset=0 azimuth_scale=1
//   waypoint = x y z
//
// 'pass' opens a new trajectory pass; waypoint lines attach to the last one.

inline SceneSpec parse_scene_spec(std::istream& in) {
  SceneSpec scene;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw InvalidInput("scene config line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    std::istringstream vs(value);

    auto nums = [&](int n) {
      std::vector<double> v(n);
      for (int i = 0; i < n; ++i)
        if (!(vs >> v[i])) fail("expected " + std::to_string(n) + " numbers for " + key);
      return v;
    };

    if (key == "seed") scene.seed = static_cast<std::uint64_t>(nums(1)[0]);
    else if (key == "frame_dt") scene.frame_dt = nums(1)[0];
    else if (key == "lidar.rings") scene.lidar.rings = static_cast<int>(nums(1)[0]);
    else if (key == "lidar.azimuth_steps") scene.lidar.azimuth_steps = static_cast<int>(nums(1)[0]);
    else if (key == "lidar.r_max") scene.lidar.r_max = nums(1)[0];
    else if (key == "lidar.sigma") scene.lidar.sigma = nums(1)[0];
    else if (key == "lidar.fov_deg") {
      auto v = nums(2);
      scene.lidar.fov_min_deg = v[0];
      scene.lidar.fov_max_deg = v[1];
    } else if (key == "plane") {
      auto v = nums(4);
      Primitive p;
      p.kind = Primitive::Kind::Plane;
      p.normal = Vec3(v[0], v[1], v[2]).normalized();
      p.offset = v[3];
      scene.primitives.push_back(p);
    } else if (key == "sphere") {
      auto v = nums(4);
      Primitive p;
      p.kind = Primitive::Kind::Sphere;
      p.center = Vec3(v[0], v[1], v[2]);
      p.radius = v[3];
      scene.primitives.push_back(p);
    } else if (key == "cylinder") {
      auto v = nums(5);
      Primitive p;
      p.kind = Primitive::Kind::Cylinder;
      p.center = Vec3(v[0], v[1], v[2]);
      p.radius = v[3];
      p.height = v[4];
      scene.primitives.push_back(p);
    } else if (key == "box") {
      auto v = nums(6);
      Primitive p;
      p.kind = Primitive::Kind::Box;
      p.center = Vec3(v[0], v[1], v[2]);
      p.half_extent = Vec3(v[3], v[4], v[5]);
      std::string tok;
      while (vs >> tok) {
        if (tok.rfind("until=", 0) == 0) p.t_until = std::stod(tok.substr(6));
        else if (tok.rfind("from=", 0) == 0) p.t_from = std::stod(tok.substr(5));
        else p.yaw = deg2rad(std::stod(tok));
      }
      scene.primitives.push_back(p);
    } else if (key == "pass") {
      PassSpec pass;
      std::string tok;
      while (vs >> tok) {
        auto teq = tok.find('=');
        if (teq == std::string::npos) fail("pass options are key=value");
        std::string k = tok.substr(0, teq);
        double v = std::stod(tok.substr(teq + 1));
        if (k == "spacing") pass.frame_spacing = v;
        else if (k == "yaw_offset") pass.yaw_offset_deg = v;
        else if (k == "azimuth_scale") pass.azimuth_scale = v;
        else fail("unknown pass option " + k);
      }
      scene.passes.push_back(pass);
    } else if (key == "waypoint") {
      auto v = nums(3);
      if (scene.passes.empty()) scene.passes.emplace_back();
      scene.passes.back().waypoints.emplace_back(v[0], v[1], v[2]);
    } else {
      fail("unknown key " + key);
    }
  }
  return scene;
}

inline SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open scene config");
  return parse_scene_spec(in);
}

}  // namespace implace
