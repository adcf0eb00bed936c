#pragma once

#include <optional>
#include <span>

#include "implace/mlp.hpp"
#include "implace/scan.hpp"
#include "implace/voxel_hash.hpp"

namespace implace {

struct NeuralPoint {
  Vec3 position{Vec3::Zero()};
  Quat orientation{Quat::Identity()};
  double t_created = 0.0;
  double t_updated = 0.0;
  double stability = 0.0;
};

// Query position expressed in a neural point's local frame: the inverse
// rotation of the point's orientation applied to the world offset.
inline Vec3 local_coords(const Vec3& query, const NeuralPoint& point) {
  return point.orientation.conjugate() * (query - point.position);
}

// Inverse-distance weights, normalized to sum 1. An exact hit (distance
// below 1e-9) collapses all weight onto the nearest point.
inline std::vector<double> interp_weights(const std::vector<double>& distances) {
  if (distances.empty()) throw InvalidInput("interp_weights: empty neighborhood");
  std::vector<double> w(distances.size(), 0.0);
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < distances.size(); ++i)
    if (distances[i] < distances[nearest]) nearest = i;
  if (distances[nearest] < 1e-9) {
    w[nearest] = 1.0;
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    w[i] = 1.0 / distances[i];
    total += w[i];
  }
  for (auto& wi : w) wi /= total;
  return w;
}

struct MapConfig {
  double voxel_size = 0.3;
  double r_max = 50.0;
  int feature_dim = 8;
  int encoding_octaves = 2;  // gamma(d): sin/cos at 2^k * pi per axis
  int hidden_layers = 8;
  int hidden_width = 8;
  int k_neighbors = 8;
  double collision_factor = 0.5;       // eviction threshold as fraction of voxel_size
  double stability_band = 0.1;         // |sdf| band counting as a consistent observation
  double dynamic_sdf_factor = 0.006;   // gamma_d = factor * r_max
  double dynamic_stability_min = 4.0;  // gamma_mu
  std::uint64_t seed = 1;

  int encoding_dim() const { return 6 * encoding_octaves; }
  int decoder_input_dim() const { return feature_dim + encoding_dim(); }
  double collision_threshold() const { return collision_factor * voxel_size; }
  double dynamic_sdf_threshold() const { return dynamic_sdf_factor * r_max; }
};

// Implicit submap: sparse neural points indexed by voxel hash plus a shared
// shallow SDF decoder. Queries are read-only and thread-safe; mutation
// (insertion, training, stability updates) requires exclusive access.
class NeuralPointMap {
 public:
  static constexpr int kMaxNeighbors = 27;

  explicit NeuralPointMap(const MapConfig& cfg = {})
      : cfg_(cfg),
        decoder_(Mlp::Arch{cfg.decoder_input_dim(), cfg.hidden_layers, cfg.hidden_width},
                 cfg.seed),
        index_(4096) {}

  const MapConfig& config() const { return cfg_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<NeuralPoint>& points() const { return points_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& decoder() const { return decoder_; }

  std::span<double> feature(std::size_t i) {
    return {features_.data() + i * cfg_.feature_dim, static_cast<std::size_t>(cfg_.feature_dim)};
  }
  std::span<const double> feature(std::size_t i) const {
    return {features_.data() + i * cfg_.feature_dim, static_cast<std::size_t>(cfg_.feature_dim)};
  }

  Aabb bounds() const {
    Aabb box;
    for (const auto& pt : points_) box.expand(pt.position);
    return box;
  }

  // Instantiates neural points from a posed scan. Empty voxel -> new point
  // with zero feature; occupied voxel -> either refresh the incumbent or, if
  // the new point is farther than the collision threshold, evict and replace.
  void insert_scan(const Scan& scan, const Pose& pose, double time) {
    double thr2 = cfg_.collision_threshold() * cfg_.collision_threshold();
    for (const auto& p_sensor : scan.points) {
      Vec3 p = pose.apply(p_sensor);
      VoxelKey key = VoxelKey::from_point(p, cfg_.voxel_size);
      std::uint32_t idx = index_.find(key);
      if (idx == VoxelHashIndex::kNotFound) {
        index_.insert_or_assign(key, static_cast<std::uint32_t>(points_.size()));
        NeuralPoint np;
        np.position = p;
        np.t_created = np.t_updated = time;
        points_.push_back(np);
        features_.resize(points_.size() * cfg_.feature_dim, 0.0);
      } else if ((points_[idx].position - p).squaredNorm() > thr2) {
        NeuralPoint np;
        np.position = p;
        np.t_created = np.t_updated = time;
        points_[idx] = np;
        auto f = feature(idx);
        std::fill(f.begin(), f.end(), 0.0);
      } else {
        points_[idx].t_updated = time;
      }
    }
  }

  struct Neighborhood {
    int count = 0;
    std::uint32_t ids[kMaxNeighbors];
    double dist[kMaxNeighbors];
    std::vector<double> weights;  // filled by finish_weights
  };

  // K nearest neural points from the 3x3x3 voxel neighborhood of the query.
  bool find_neighbors(const Vec3& query, Neighborhood& nb) const {
    nb.count = 0;
    VoxelKey base = VoxelKey::from_point(query, cfg_.voxel_size);
    int k = std::min(cfg_.k_neighbors, kMaxNeighbors);
    double d2[kMaxNeighbors];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          std::uint32_t idx = index_.find(base.offset(dx, dy, dz));
          if (idx == VoxelHashIndex::kNotFound) continue;
          double dist2 = (points_[idx].position - query).squaredNorm();
          // insertion sort, keep k best; ties broken by point index
          int pos = nb.count < k ? nb.count : k - 1;
          if (nb.count >= k &&
              (dist2 > d2[pos] || (dist2 == d2[pos] && idx > nb.ids[pos])))
            continue;
          while (pos > 0 &&
                 (d2[pos - 1] > dist2 || (d2[pos - 1] == dist2 && nb.ids[pos - 1] > idx))) {
            d2[pos] = d2[pos - 1];
            nb.ids[pos] = nb.ids[pos - 1];
            --pos;
          }
          d2[pos] = dist2;
          nb.ids[pos] = idx;
          if (nb.count < k) ++nb.count;
        }
    for (int i = 0; i < nb.count; ++i) nb.dist[i] = std::sqrt(d2[i]);
    return nb.count > 0;
  }

  static void finish_weights(Neighborhood& nb) {
    nb.weights = interp_weights(std::vector<double>(nb.dist, nb.dist + nb.count));
  }

  // gamma(d): per-axis sinusoids at octave frequencies 2^k * pi.
  void positional_encoding(const Vec3& d, std::span<double> out) const {
    int idx = 0;
    for (int axis = 0; axis < 3; ++axis) {
      double base = kPi * d[axis];
      double arg = base;
      for (int oct = 0; oct < cfg_.encoding_octaves; ++oct) {
        out[idx++] = std::sin(arg);
        out[idx++] = std::cos(arg);
        arg *= 2.0;
      }
    }
  }

  // Blended decoder input for a query given its neighborhood:
  // [sum_j w_j f_j | sum_j w_j gamma(d_j)].
  void encode(const Vec3& query, const Neighborhood& nb, std::span<double> input) const {
    int F = cfg_.feature_dim, C = cfg_.encoding_dim();
    std::fill(input.begin(), input.begin() + F + C, 0.0);
    double enc[64];
    for (int j = 0; j < nb.count; ++j) {
      double w = nb.weights[j];
      auto f = feature(nb.ids[j]);
      for (int i = 0; i < F; ++i) input[i] += w * f[i];
      Vec3 d = local_coords(query, points_[nb.ids[j]]);
      positional_encoding(d, {enc, static_cast<std::size_t>(C)});
      for (int i = 0; i < C; ++i) input[F + i] += w * enc[i];
    }
  }

  struct QueryResult {
    double sdf = 0.0;
    Neighborhood nb;
  };

  // SDF at an arbitrary world position; false when no neural point lies in
  // the hash neighborhood (no coverage).
  bool query_sdf(const Vec3& query, QueryResult& out) const {
    if (!find_neighbors(query, out.nb)) return false;
    finish_weights(out.nb);
    double input[Mlp::kMaxWidth];
    encode(query, out.nb, {input, static_cast<std::size_t>(cfg_.decoder_input_dim())});
    out.sdf = decoder_.forward({input, static_cast<std::size_t>(cfg_.decoder_input_dim())});
    return true;
  }

  std::optional<double> query_sdf(const Vec3& query) const {
    QueryResult r;
    if (!query_sdf(query, r)) return std::nullopt;
    return r.sdf;
  }

  // Interpolated stability at a world position (same weights as the SDF
  // query). False when uncovered.
  bool stability_at(const Vec3& query, double& out) const {
    Neighborhood nb;
    if (!find_neighbors(query, nb)) return false;
    finish_weights(nb);
    out = 0.0;
    for (int j = 0; j < nb.count; ++j) out += nb.weights[j] * points_[nb.ids[j]].stability;
    return true;
  }

  // One observation round: points whose surface evidence is re-confirmed
  // (|sdf| within the band at the measured endpoint) gain one unit of
  // stability; points the scan sees through (measured range exceeds the
  // point's range along the same ray direction) decay.
  void update_stability(const Scan& scan, const Pose& pose, double time) {
    if (points_.empty()) return;
    std::vector<std::uint8_t> consistent(points_.size(), 0);

    for (const auto& p_sensor : scan.points) {
      Vec3 p = pose.apply(p_sensor);
      QueryResult qr;
      if (!query_sdf(p, qr)) continue;
      if (std::abs(qr.sdf) > cfg_.stability_band) continue;
      std::uint32_t nearest = qr.nb.ids[0];
      if (time > points_[nearest].t_created) consistent[nearest] = 1;
    }

    // Range image of the scan for the free-space check.
    RangeImage ri = build_range_image(scan);
    Quat inv_rot = pose.rotation.conjugate();
    double margin = 2.0 * cfg_.stability_band;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (consistent[i]) {
        points_[i].stability += 1.0;
        continue;
      }
      Vec3 local = inv_rot * (points_[i].position - pose.translation);
      double range = local.norm();
      if (range < 1e-6 || range > cfg_.r_max) continue;
      double measured = ri.lookup(local);
      if (measured > 0.0 && measured > range + margin) points_[i].stability *= 0.5;
    }
  }

  // A world point is dynamic when the map calls its location free space
  // (sdf above gamma_d) in a mature region (interpolated stability above
  // gamma_mu). Uncovered points pass through as static.
  std::vector<bool> filter_dynamic(const std::vector<Vec3>& world_points) const {
    std::vector<bool> dynamic(world_points.size(), false);
    double gd = cfg_.dynamic_sdf_threshold();
    parallel_for(world_points.size(), [&](std::size_t i) {
      QueryResult qr;
      if (!query_sdf(world_points[i], qr)) return;
      if (qr.sdf <= gd) return;
      double h = 0.0;
      for (int j = 0; j < qr.nb.count; ++j)
        h += qr.nb.weights[j] * points_[qr.nb.ids[j]].stability;
      if (h > cfg_.dynamic_stability_min) dynamic[i] = true;
    });
    return dynamic;
  }

  // Map maintenance: drop points whose own location the trained field calls
  // free space. Leftovers of departed objects vanish here, so stability
  // interpolation afterwards reflects the surviving (mature) geometry.
  std::size_t prune_ghosts() {
    std::vector<std::uint8_t> keep(points_.size(), 1);
    double gd = cfg_.dynamic_sdf_threshold();
    parallel_for(points_.size(), [&](std::size_t i) {
      QueryResult qr;
      if (query_sdf(points_[i].position, qr) && qr.sdf > gd) keep[i] = 0;
    });
    std::size_t removed = 0;
    std::vector<NeuralPoint> new_points;
    std::vector<double> new_features;
    new_points.reserve(points_.size());
    new_features.reserve(features_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!keep[i]) {
        ++removed;
        continue;
      }
      new_points.push_back(points_[i]);
      auto f = feature(i);
      new_features.insert(new_features.end(), f.begin(), f.end());
    }
    points_ = std::move(new_points);
    features_ = std::move(new_features);
    rebuild_index();
    return removed;
  }

  // --- serialization: versioned little-endian binary, float32 payload ---

  void save(std::ostream& out) const {
    write_bytes(out, kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<double>(out, cfg_.voxel_size);
    write_pod<double>(out, cfg_.r_max);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.feature_dim));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.encoding_octaves));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.hidden_layers));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.hidden_width));
    auto params = decoder_.flatten();
    write_pod<std::uint64_t>(out, params.size());
    for (double p : params) write_pod<float>(out, static_cast<float>(p));
    write_pod<std::uint64_t>(out, points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& pt = points_[i];
      for (int a = 0; a < 3; ++a) write_pod<float>(out, static_cast<float>(pt.position[a]));
      write_pod<float>(out, static_cast<float>(pt.orientation.w()));
      write_pod<float>(out, static_cast<float>(pt.orientation.x()));
      write_pod<float>(out, static_cast<float>(pt.orientation.y()));
      write_pod<float>(out, static_cast<float>(pt.orientation.z()));
      write_pod<float>(out, static_cast<float>(pt.t_created));
      write_pod<float>(out, static_cast<float>(pt.t_updated));
      write_pod<float>(out, static_cast<float>(pt.stability));
      auto f = feature(i);
      for (double v : f) write_pod<float>(out, static_cast<float>(v));
    }
  }

  static NeuralPointMap load(std::istream& in, const MapConfig& base = {}) {
    char magic[4];
    read_bytes(in, magic, 4);
    if (std::string(magic, 4) != kMagic) throw IoError("neural map: bad magic");
    auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion) throw IoError("neural map: unsupported version");
    MapConfig cfg = base;
    cfg.voxel_size = read_pod<double>(in);
    cfg.r_max = read_pod<double>(in);
    cfg.feature_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    cfg.encoding_octaves = static_cast<int>(read_pod<std::uint32_t>(in));
    cfg.hidden_layers = static_cast<int>(read_pod<std::uint32_t>(in));
    cfg.hidden_width = static_cast<int>(read_pod<std::uint32_t>(in));
    NeuralPointMap map(cfg);
    auto n_params = read_pod<std::uint64_t>(in);
    std::vector<double> params(n_params);
    for (auto& p : params) p = static_cast<double>(read_pod<float>(in));
    map.decoder_.unflatten(params);
    auto n_points = read_pod<std::uint64_t>(in);
    map.points_.resize(n_points);
    map.features_.assign(n_points * cfg.feature_dim, 0.0);
    for (std::size_t i = 0; i < n_points; ++i) {
      auto& pt = map.points_[i];
      for (int a = 0; a < 3; ++a) pt.position[a] = read_pod<float>(in);
      float qw = read_pod<float>(in), qx = read_pod<float>(in);
      float qy = read_pod<float>(in), qz = read_pod<float>(in);
      pt.orientation = Quat(qw, qx, qy, qz);
      pt.t_created = read_pod<float>(in);
      pt.t_updated = read_pod<float>(in);
      pt.stability = read_pod<float>(in);
      auto f = map.feature(i);
      for (auto& v : f) v = read_pod<float>(in);
    }
    if (!in) throw IoError("neural map: truncated file");
    map.rebuild_index();
    return map;
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot write map file");
    save(out);
  }
  static NeuralPointMap load_file(const std::string& path, const MapConfig& base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open map file");
    return load(in, base);
  }

  // Training needs raw feature access; keep it explicit.
  std::vector<double>& raw_features() { return features_; }

  // Elastic re-parameterization hook: callers may move or re-orient points,
  // then must call reindex() if any position changed voxels.
  std::vector<NeuralPoint>& mutable_points() { return points_; }
  void reindex() { rebuild_index(); }

 private:
  static constexpr const char* kMagic = "IPNM";
  static constexpr std::uint32_t kVersion = 1;

  struct RangeImage {
    int az_bins = 0, el_bins = 0;
    double el_min = 0.0, el_max = 0.0;
    std::vector<float> range;  // min range per bin, 0 = empty

    double lookup(const Vec3& local) const {
      double r = local.norm();
      if (r < 1e-9 || az_bins == 0) return 0.0;
      double az = std::atan2(local.y(), local.x());
      double el = std::asin(std::clamp(local.z() / r, -1.0, 1.0));
      if (el < el_min || el > el_max) return 0.0;
      int ai = static_cast<int>((az + kPi) / (2.0 * kPi) * az_bins);
      ai = std::clamp(ai, 0, az_bins - 1);
      int ei = el_max > el_min
                   ? static_cast<int>((el - el_min) / (el_max - el_min) * el_bins)
                   : 0;
      ei = std::clamp(ei, 0, el_bins - 1);
      return range[static_cast<std::size_t>(ei) * az_bins + ai];
    }
  };

  RangeImage build_range_image(const Scan& scan) const {
    RangeImage ri;
    ri.az_bins = 720;
    ri.el_bins = 64;
    ri.el_min = std::numeric_limits<double>::max();
    ri.el_max = std::numeric_limits<double>::lowest();
    for (const auto& p : scan.points) {
      double r = p.norm();
      if (r < 1e-9) continue;
      double el = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
      ri.el_min = std::min(ri.el_min, el);
      ri.el_max = std::max(ri.el_max, el);
    }
    if (ri.el_min > ri.el_max) {
      ri.az_bins = 0;
      return ri;
    }
    ri.el_max += 1e-6;
    ri.range.assign(static_cast<std::size_t>(ri.az_bins) * ri.el_bins, 0.0f);
    for (const auto& p : scan.points) {
      double r = p.norm();
      if (r < 1e-9) continue;
      double az = std::atan2(p.y(), p.x());
      double el = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
      int ai = std::clamp(static_cast<int>((az + kPi) / (2.0 * kPi) * ri.az_bins), 0,
                          ri.az_bins - 1);
      int ei = std::clamp(
          static_cast<int>((el - ri.el_min) / (ri.el_max - ri.el_min) * ri.el_bins), 0,
          ri.el_bins - 1);
      auto& slot = ri.range[static_cast<std::size_t>(ei) * ri.az_bins + ai];
      if (slot == 0.0f || slot > r) slot = static_cast<float>(r);
    }
    return ri;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < points_.size(); ++i)
      index_.insert_or_assign(VoxelKey::from_point(points_[i].position, cfg_.voxel_size),
                              static_cast<std::uint32_t>(i));
  }

  template <typename T>
  static void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  template <typename T>
  static T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }
  static void write_bytes(std::ostream& out, const char* data, std::size_t n) {
    out.write(data, static_cast<std::streamsize>(n));
  }
  static void read_bytes(std::istream& in, char* data, std::size_t n) {
    in.read(data, static_cast<std::streamsize>(n));
  }

  MapConfig cfg_;
  std::vector<NeuralPoint> points_;
  std::vector<double> features_;  // row-major n x feature_dim
  Mlp decoder_;
  VoxelHashIndex index_;
};

}  // namespace implace
