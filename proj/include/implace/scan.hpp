#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "implace/core.hpp"

namespace implace {

struct Scan {
  std::vector<Vec3> points;        // sensor frame, meters
  std::vector<float> intensity;    // [0,1], carried but unused downstream
  double timestamp = 0.0;          // seconds

  std::size_t size() const { return points.size(); }
};

struct Pose {
  Quat rotation{Quat::Identity()};
  Vec3 translation{Vec3::Zero()};

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  static Pose from_matrix(const Eigen::Matrix3d& rot, const Vec3& t) {
    Pose out;
    out.rotation = Quat(rot).normalized();
    out.translation = t;
    return out;
  }
};

struct Submap {
  std::vector<std::pair<Scan, Pose>> frames;
  double travel_distance = 0.0;
  bool partial = false;  // trailing submap that never reached the seal distance

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    if (frames.empty()) return c;
    for (const auto& [scan, pose] : frames) c += pose.translation;
    return c / static_cast<double>(frames.size());
  }
};

// --- binary scan format: consecutive little-endian float32 (x, y, z, i) ---

inline Scan decode_scan(const std::uint8_t* data, std::size_t bytes,
                        const std::string& origin = "<memory>") {
  if (bytes == 0) throw IoError(origin + ": empty scan");
  if (bytes % 16 != 0) throw IoError(origin + ": truncated record");
  std::size_t n = bytes / 16;
  Scan scan;
  scan.points.reserve(n);
  scan.intensity.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    float rec[4];
    std::memcpy(rec, data + 16 * i, 16);
    for (int k = 0; k < 4; ++k) {
      if (!std::isfinite(rec[k]))
        throw IoError(origin + ": non-finite value in record " + std::to_string(i));
    }
    scan.points.emplace_back(rec[0], rec[1], rec[2]);
    scan.intensity.push_back(rec[3]);
  }
  return scan;
}

inline std::vector<std::uint8_t> encode_scan(const Scan& scan) {
  std::vector<std::uint8_t> out(scan.points.size() * 16);
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    float rec[4] = {static_cast<float>(scan.points[i].x()),
                    static_cast<float>(scan.points[i].y()),
                    static_cast<float>(scan.points[i].z()),
                    i < scan.intensity.size() ? scan.intensity[i] : 0.0f};
    std::memcpy(out.data() + 16 * i, rec, 16);
  }
  return out;
}

inline Scan load_scan_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open scan file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_scan(bytes.data(), bytes.size(), path);
}

inline void save_scan_file(const std::string& path, const Scan& scan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot write scan file");
  auto bytes = encode_scan(scan);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// --- pose text format: 12 numbers per line, row-major 3x4 world-from-sensor ---

inline std::vector<Pose> load_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open pose file");
  std::vector<Pose> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double v[12];
    for (int k = 0; k < 12; ++k) {
      if (!(ss >> v[k]))
        throw IoError(path + ":" + std::to_string(lineno) + ": expected 12 values");
    }
    Eigen::Matrix3d rot;
    rot << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    poses.push_back(Pose::from_matrix(rot, Vec3(v[3], v[7], v[11])));
  }
  return poses;
}

inline void save_pose_file(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot write pose file");
  out.precision(17);
  for (const auto& pose : poses) {
    Eigen::Matrix3d rot = pose.rotation.toRotationMatrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << rot(r, c) << ' ';
      out << pose.translation[r];
      out << (r == 2 ? '\n' : ' ');
    }
  }
}

// Splits an aligned scan/pose stream into distance-bounded submaps. A submap
// is sealed once the summed inter-frame translation reaches tau; the trailing
// remainder is emitted with partial = true.
inline std::vector<Submap> accumulate_submaps(const std::vector<Scan>& scans,
                                              const std::vector<Pose>& poses,
                                              double tau) {
  if (scans.size() != poses.size())
    throw InvalidInput("scan/pose count mismatch: " + std::to_string(scans.size()) +
                       " scans vs " + std::to_string(poses.size()) + " poses");
  if (tau <= 0.0) throw InvalidInput("submap distance must be positive");

  std::vector<Submap> out;
  Submap current;
  Vec3 last_pos;
  bool have_last = false;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (have_last) current.travel_distance += (poses[i].translation - last_pos).norm();
    last_pos = poses[i].translation;
    have_last = true;
    current.frames.emplace_back(scans[i], poses[i]);
    if (current.travel_distance >= tau) {
      out.push_back(std::move(current));
      current = Submap{};
      have_last = false;
    }
  }
  if (!current.frames.empty()) {
    current.partial = true;
    out.push_back(std::move(current));
  }
  return out;
}

}  // namespace implace
