#pragma once

#include <span>

#include "implace/core.hpp"

namespace implace {

// Small dense MLP: `hidden_layers` tanh layers of `width` units and a linear
// scalar head. Sized for the SDF decoder, where forward cost dominates map
// queries, so the hot path works on flat arrays with no allocation.
class Mlp {
 public:
  struct Arch {
    int input = 20;
    int hidden_layers = 8;
    int width = 8;
    bool operator==(const Arch&) const = default;
  };

  static constexpr int kMaxWidth = 128;

  Mlp() = default;
  Mlp(Arch arch, std::uint64_t seed) : arch_(arch) {
    if (arch.width > kMaxWidth || arch.input > kMaxWidth)
      throw InvalidInput("mlp width exceeds supported maximum");
    Rng rng = make_rng(seed, 0x6d6c70);
    int in = arch.input;
    for (int l = 0; l <= arch.hidden_layers; ++l) {
      int out = (l == arch.hidden_layers) ? 1 : arch.width;
      double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> u(-limit, limit);
      Layer layer;
      layer.in = in;
      layer.out = out;
      layer.w.resize(static_cast<std::size_t>(in) * out);
      layer.b.assign(out, 0.0);
      for (auto& w : layer.w) w = u(rng);
      layers_.push_back(std::move(layer));
      in = out;
    }
  }

  const Arch& arch() const { return arch_; }

  double forward(std::span<const double> x) const {
    double buf_a[kMaxWidth], buf_b[kMaxWidth];
    const double* cur = x.data();
    double* next = buf_a;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      bool last = l + 1 == layers_.size();
      for (int o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        double acc = layer.b[o];
        for (int i = 0; i < layer.in; ++i) acc += wrow[i] * cur[i];
        next[o] = last ? acc : std::tanh(acc);
      }
      cur = next;
      next = (next == buf_a) ? buf_b : buf_a;
    }
    return cur[0];
  }

  // Activation tape for one forward pass; reuse across calls on one thread.
  struct Tape {
    std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = layer l output
  };

  double forward(std::span<const double> x, Tape& tape) const {
    tape.act.resize(layers_.size() + 1);
    tape.act[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      bool last = l + 1 == layers_.size();
      const auto& in = tape.act[l];
      auto& out = tape.act[l + 1];
      out.assign(layer.out, 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        double acc = layer.b[o];
        for (int i = 0; i < layer.in; ++i) acc += wrow[i] * in[i];
        out[o] = last ? acc : std::tanh(acc);
      }
    }
    return tape.act.back()[0];
  }

  struct Grad {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    void match(const Mlp& net) {
      w.resize(net.layers_.size());
      b.resize(net.layers_.size());
      for (std::size_t l = 0; l < net.layers_.size(); ++l) {
        w[l].assign(net.layers_[l].w.size(), 0.0);
        b[l].assign(net.layers_[l].b.size(), 0.0);
      }
    }
    void zero() {
      for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
      for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
    }
  };

  // Backpropagates d(loss)/d(output). Accumulates parameter gradients into
  // `grad` and, when dx is non-empty, writes d(loss)/d(input) into it.
  void backward(const Tape& tape, double dout, Grad& grad, std::span<double> dx) const {
    double delta_buf[kMaxWidth], prev_buf[kMaxWidth];
    double* delta = delta_buf;
    double* prev = prev_buf;
    delta[0] = dout;
    int delta_n = 1;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& layer = layers_[li];
      bool last = li + 1 == layers_.size();
      const auto& in = tape.act[li];
      const auto& out = tape.act[li + 1];
      if (!last) {
        for (int o = 0; o < layer.out; ++o) delta[o] *= (1.0 - out[o] * out[o]);
      }
      auto& gw = grad.w[li];
      auto& gb = grad.b[li];
      for (int i = 0; i < layer.in; ++i) prev[i] = 0.0;
      for (int o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        double* gwrow = gw.data() + static_cast<std::size_t>(o) * layer.in;
        double d = delta[o];
        gb[o] += d;
        for (int i = 0; i < layer.in; ++i) {
          gwrow[i] += d * in[i];
          prev[i] += wrow[i] * d;
        }
      }
      delta_n = layer.in;
      std::swap(delta, prev);
    }
    if (!dx.empty()) {
      for (int i = 0; i < std::min<int>(delta_n, static_cast<int>(dx.size())); ++i)
        dx[i] = delta[i];
    }
  }

  // SGD step with momentum over all parameters.
  void apply_update(const Grad& grad, Grad& momentum, double lr, double beta) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t i = 0; i < layers_[l].w.size(); ++i) {
        momentum.w[l][i] = beta * momentum.w[l][i] + grad.w[l][i];
        layers_[l].w[i] -= lr * momentum.w[l][i];
      }
      for (std::size_t i = 0; i < layers_[l].b.size(); ++i) {
        momentum.b[l][i] = beta * momentum.b[l][i] + grad.b[l][i];
        layers_[l].b[i] -= lr * momentum.b[l][i];
      }
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& layer : layers_) {
      out.insert(out.end(), layer.w.begin(), layer.w.end());
      out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
    return out;
  }

  void unflatten(std::span<const double> params) {
    std::size_t pos = 0;
    for (auto& layer : layers_) {
      if (pos + layer.w.size() + layer.b.size() > params.size())
        throw InvalidInput("mlp parameter blob too short");
      std::copy(params.begin() + pos, params.begin() + pos + layer.w.size(), layer.w.begin());
      pos += layer.w.size();
      std::copy(params.begin() + pos, params.begin() + pos + layer.b.size(), layer.b.begin());
      pos += layer.b.size();
    }
    if (pos != params.size()) throw InvalidInput("mlp parameter blob size mismatch");
  }

  bool finite() const {
    for (const auto& layer : layers_) {
      for (double w : layer.w)
        if (!std::isfinite(w)) return false;
      for (double b : layer.b)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

 private:
  struct Layer {
    int in = 0, out = 0;
    std::vector<double> w;  // row-major out x in
    std::vector<double> b;
  };

  Arch arch_;
  std::vector<Layer> layers_;
};

}  // namespace implace
