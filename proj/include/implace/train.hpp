#pragma once

#include "implace/kdtree.hpp"
#include "implace/neural_map.hpp"

namespace implace {

struct SdfSample {
  Vec3 position;
  double label = 0.0;  // truncated projective signed distance, meters
  double weight = 1.0;
};

struct TrainConfig {
  int iterations = 300;
  int batch_size = 4096;
  double lr = 0.05;
  double feature_lr = 0.2;
  double momentum = 0.9;
  double huber_beta = 0.05;
  int surface_samples_per_ray = 3;
  int free_samples_per_ray = 3;
  double truncation_factor = 3.0;  // truncation = factor * voxel_size
  std::size_t max_rays = 60000;
  std::size_t val_samples = 2000;
  std::uint64_t seed = 7;
};

struct TrainStats {
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  std::size_t pool_size = 0;
  int iterations = 0;
};

namespace detail {

inline double smooth_l1(double r, double beta) {
  double a = std::abs(r);
  return a < beta ? 0.5 * r * r / beta : a - 0.5 * beta;
}
inline double smooth_l1_grad(double r, double beta) {
  return std::clamp(r / beta, -1.0, 1.0);
}

}  // namespace detail

// Draws surface-band and free-space samples along a random subset of the
// submap's rays. Along-ray offsets are converted to point-to-surface
// distances with the cosine of the ray/normal incidence angle (local PCA
// normals); a raw projective label badly overestimates the SDF wherever the
// beam grazes the surface, e.g. on the ground. Labels are truncated, and
// free-space samples carry the truncation bound.
inline std::vector<SdfSample> build_training_pool(const Submap& submap, double truncation,
                                                  const TrainConfig& cfg) {
  std::vector<SdfSample> pool;
  std::size_t total_rays = 0;
  for (const auto& [scan, pose] : submap.frames) total_rays += scan.size();
  if (total_rays == 0) return pool;
  double keep = std::min(1.0, static_cast<double>(cfg.max_rays) / total_rays);

  std::size_t frame_idx = 0;
  for (const auto& [scan, pose] : submap.frames) {
    Rng rng = make_rng(cfg.seed, 0x5ba1 + frame_idx);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    std::vector<std::uint32_t> used;
    used.reserve(static_cast<std::size_t>(keep * scan.size()) + 1);
    for (std::uint32_t i = 0; i < scan.size(); ++i)
      if (uni(rng) <= keep) used.push_back(i);
    if (used.empty()) {
      ++frame_idx;
      continue;
    }

    std::vector<Vec3> endpoints;
    endpoints.reserve(used.size());
    for (auto i : used) endpoints.push_back(pose.apply(scan.points[i]));
    KdTree tree(endpoints);
    std::vector<std::pair<std::uint32_t, double>> nn;

    for (std::size_t u = 0; u < used.size(); ++u) {
      Vec3 endpoint = endpoints[u];
      Vec3 origin = pose.translation;
      Vec3 dir = endpoint - origin;
      double range = dir.norm();
      if (range < 0.5) continue;
      dir /= range;

      double cos_inc = 1.0;
      tree.knn(endpoint, 10, nn);
      if (nn.size() >= 4) {
        std::vector<std::uint32_t> ids;
        for (const auto& [id, d2] : nn)
          if (d2 < 4.0) ids.push_back(id);
        Vec3 normal;
        if (pca_normal(tree.points(), ids, normal))
          cos_inc = std::clamp(std::abs(normal.dot(dir)), 0.15, 1.0);
      }

      double band = truncation / cos_inc;  // along-ray span covering +-truncation
      if (range < band + 0.5) continue;    // too grazing and close to sample safely
      for (int s = 0; s < cfg.surface_samples_per_ray; ++s) {
        double off = (2.0 * uni(rng) - 1.0) * band;
        double label = std::clamp(off * cos_inc, -truncation, truncation);
        pool.push_back({origin + dir * (range - off), label, 1.0});
      }
      double free_limit = range - band;
      double free_min = std::min(1.0, 0.2 * range);
      if (free_limit > free_min) {
        for (int s = 0; s < cfg.free_samples_per_ray; ++s) {
          double t = free_min + uni(rng) * (free_limit - free_min);
          pool.push_back({origin + dir * t, truncation, 1.0});
        }
      }
    }
    ++frame_idx;
  }
  return pool;
}

// Joint stochastic optimization of the decoder and the per-point latent
// features against the sampled SDF labels. Deterministic for a fixed seed.
inline TrainStats train_submap(NeuralPointMap& map, const Submap& submap,
                               const TrainConfig& cfg) {
  TrainStats stats;
  if (cfg.iterations <= 0) return stats;
  if (map.size() == 0) throw InvalidInput("train_submap: map has no neural points");

  double truncation = cfg.truncation_factor * map.config().voxel_size;
  std::vector<SdfSample> pool = build_training_pool(submap, truncation, cfg);
  if (pool.empty()) throw InvalidInput("train_submap: empty sample pool");
  stats.pool_size = pool.size();

  // Deterministic held-out set for the loss-decrease check.
  std::size_t val_n = std::min(cfg.val_samples, pool.size() / 10 + 1);
  std::size_t val_stride = std::max<std::size_t>(1, pool.size() / std::max<std::size_t>(1, val_n));
  std::vector<std::size_t> val_idx;
  for (std::size_t i = 0; i < pool.size() && val_idx.size() < val_n; i += val_stride)
    val_idx.push_back(i);

  const int F = map.config().feature_dim;
  const int D = map.config().decoder_input_dim();
  Mlp::Tape tape;
  Mlp::Grad grad, momentum;
  grad.match(map.decoder());
  momentum.match(map.decoder());

  auto eval_sample = [&](const SdfSample& sample, double& pred,
                         NeuralPointMap::Neighborhood& nb, std::span<double> input) {
    if (!map.find_neighbors(sample.position, nb)) return false;
    NeuralPointMap::finish_weights(nb);
    map.encode(sample.position, nb, input);
    pred = map.decoder().forward(input.first(D), tape);
    return true;
  };

  auto val_loss = [&]() {
    double total = 0.0;
    std::size_t counted = 0;
    double input[Mlp::kMaxWidth];
    NeuralPointMap::Neighborhood nb;
    for (std::size_t i : val_idx) {
      double pred;
      if (!eval_sample(pool[i], pred, nb, {input, static_cast<std::size_t>(D)})) continue;
      total += detail::smooth_l1(pred - pool[i].label, cfg.huber_beta);
      ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
  };

  stats.initial_val_loss = val_loss();

  Rng rng = make_rng(cfg.seed, 0x7261);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  double input[Mlp::kMaxWidth];
  double dinput[Mlp::kMaxWidth];
  NeuralPointMap::Neighborhood nb;

  for (int it = 0; it < cfg.iterations; ++it) {
    // step decay at 1/3 and 2/3 of the run
    double lr_scale = it >= 2 * cfg.iterations / 3 ? 0.25 : (it >= cfg.iterations / 3 ? 0.5 : 1.0);
    grad.zero();
    int used = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const SdfSample& sample = pool[pick(rng)];
      double pred;
      if (!eval_sample(sample, pred, nb, {input, static_cast<std::size_t>(D)})) continue;
      double g = detail::smooth_l1_grad(pred - sample.label, cfg.huber_beta) * sample.weight;
      map.decoder().backward(tape, g, grad, {dinput, static_cast<std::size_t>(D)});
      double flr = cfg.feature_lr * lr_scale;
      for (int j = 0; j < nb.count; ++j) {
        auto fj = map.feature(nb.ids[j]);
        double w = nb.weights[j];
        for (int d = 0; d < F; ++d) fj[d] -= flr * w * dinput[d];
      }
      ++used;
    }
    if (used == 0) continue;
    double scale = 1.0 / used;
    for (auto& layer : grad.w)
      for (auto& v : layer) v *= scale;
    for (auto& layer : grad.b)
      for (auto& v : layer) v *= scale;
    map.decoder().apply_update(grad, momentum, cfg.lr * lr_scale, cfg.momentum);
    if (!map.decoder().finite())
      throw std::runtime_error("train_submap: loss diverged (non-finite parameters) at iteration " +
                               std::to_string(it));
  }

  stats.final_val_loss = val_loss();
  stats.iterations = cfg.iterations;
  if (!std::isfinite(stats.final_val_loss))
    throw std::runtime_error("train_submap: validation loss is non-finite");
  return stats;
}

}  // namespace implace
