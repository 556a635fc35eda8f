#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcnn/netspec.hpp"
#include "fcnn/network.hpp"
#include "fcnn/tensor.hpp"

namespace fcnn {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 4;
  int iterations = 100;  // per stage
  uint64_t seed = 1;
  int crop_size = 64;        // 256 at paper scale
  int crops_per_frame = 4;   // 10 at paper scale
  double flip_probability = 0.5;

  void validate() const {
    if (learning_rate <= 0.0)
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (crop_size % 4 != 0)
      throw std::invalid_argument("TrainConfig: crop_size must be divisible by 4");
    if (batch_size < 1 || iterations < 0 || crops_per_frame < 1)
      throw std::invalid_argument("TrainConfig: bad counts");
  }
};

/// One training sample: input cue channels plus the 4x-pooled label grid.
struct Sample {
  Tensor input;
  Tensor pooled_label;
};

inline constexpr double kSigmoidClamp = 1e-7;

/// Mean binary cross entropy over all output neurons, plus dE/d(output).
/// Outputs are clamped away from {0,1} before the logs.
inline std::pair<double, Tensor> cross_entropy_loss(const Tensor& output,
                                                    const Tensor& target) {
  if (!output.same_shape(target))
    throw std::invalid_argument("cross_entropy_loss: shape mismatch (" +
                                output.shape_str() + " vs " +
                                target.shape_str() + ")");
  const double n = static_cast<double>(output.size());
  double loss = 0.0;
  Tensor grad(output.channels(), output.height(), output.width());
  for (size_t i = 0; i < output.size(); ++i) {
    double o = output.values()[i];
    o = std::min(1.0 - kSigmoidClamp, std::max(kSigmoidClamp, o));
    const double t = target.values()[i];
    loss -= t * std::log(o) + (1.0 - t) * std::log(1.0 - o);
    grad.values()[i] = (o - t) / (n * o * (1.0 - o));
  }
  return {loss / n, grad};
}

/// Two 2x2 average pools; equivalent to one 4x4 box average.
inline Tensor pool_labels(const Tensor& mask) {
  return avgpool_forward(avgpool_forward(mask, 2, 2), 2, 2);
}

inline Tensor flip_horizontal(const Tensor& t) {
  Tensor out(t.channels(), t.height(), t.width());
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x)
        out.at(c, y, x) = t.at(c, y, t.width() - 1 - x);
  return out;
}

inline Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > t.height() || x0 + w > t.width())
    throw std::invalid_argument("crop: window out of bounds");
  Tensor out(t.channels(), h, w);
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
  return out;
}

/// Random crops + horizontal flips of a frame's cue channels and mask.
/// Crop origins are snapped to multiples of 4 so the pooled label grid
/// stays aligned with the output grid.
inline std::vector<Sample> augment(const Tensor& frame_channels,
                                   const Tensor& mask,
                                   const TrainConfig& config,
                                   std::mt19937_64& rng) {
  config.validate();
  const int cs = config.crop_size;
  if (frame_channels.height() < cs || frame_channels.width() < cs)
    throw std::invalid_argument("augment: frame " +
                                frame_channels.shape_str() +
                                " smaller than crop size " +
                                std::to_string(cs));
  if (mask.height() != frame_channels.height() ||
      mask.width() != frame_channels.width())
    throw std::invalid_argument("augment: mask/frame size mismatch");

  const int max_y = (frame_channels.height() - cs) / 4;
  const int max_x = (frame_channels.width() - cs) / 4;
  std::vector<Sample> samples;
  for (int i = 0; i < config.crops_per_frame; ++i) {
    const int y0 = 4 * static_cast<int>(rng() % (max_y + 1));
    const int x0 = 4 * static_cast<int>(rng() % (max_x + 1));
    const bool flip = uniform_unit(rng) < config.flip_probability;
    Tensor in = crop(frame_channels, y0, x0, cs, cs);
    Tensor m = crop(mask, y0, x0, cs, cs);
    if (flip) {
      in = flip_horizontal(in);
      m = flip_horizontal(m);
    }
    samples.push_back({std::move(in), pool_labels(m)});
  }
  return samples;
}

/// Momentum buffers mirroring the network's conv parameters.
struct SgdState {
  std::vector<std::vector<Tensor>> vel_weights;
  std::vector<std::vector<double>> vel_bias;

  static SgdState zeros_like(const Network& net) {
    SgdState s;
    for (const ConvParams& p : net.params) {
      std::vector<Tensor> vw;
      for (const Tensor& w : p.weights)
        vw.emplace_back(w.channels(), w.height(), w.width());
      s.vel_weights.push_back(std::move(vw));
      s.vel_bias.emplace_back(p.bias.size(), 0.0);
    }
    return s;
  }
};

/// v <- momentum*v - lr*g; p <- p + v. Frozen layers are skipped entirely.
inline void sgd_step(Network& net, const Gradients& grads, SgdState& state,
                     const TrainConfig& config) {
  int ci = -1;
  for (size_t layer = 0; layer < net.spec.layers.size(); ++layer) {
    if (net.spec.layers[layer].kind != LayerKind::Conv) continue;
    ++ci;
    if (net.frozen[layer]) continue;
    ConvParams& p = net.params[ci];
    for (size_t f = 0; f < p.weights.size(); ++f) {
      auto& w = p.weights[f].values();
      auto& v = state.vel_weights[ci][f].values();
      const auto& g = grads.weights[ci][f].values();
      for (size_t i = 0; i < w.size(); ++i) {
        v[i] = config.momentum * v[i] - config.learning_rate * g[i];
        w[i] += v[i];
      }
    }
    for (size_t i = 0; i < p.bias.size(); ++i) {
      state.vel_bias[ci][i] = config.momentum * state.vel_bias[ci][i] -
                              config.learning_rate * grads.bias[ci][i];
      p.bias[i] += state.vel_bias[ci][i];
    }
  }
}

inline void accumulate_gradients(Gradients& acc, const Gradients& g,
                                 double scale) {
  for (size_t l = 0; l < acc.weights.size(); ++l) {
    for (size_t f = 0; f < acc.weights[l].size(); ++f) {
      auto& a = acc.weights[l][f].values();
      const auto& b = g.weights[l][f].values();
      for (size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
    }
    for (size_t i = 0; i < acc.bias[l].size(); ++i)
      acc.bias[l][i] += scale * g.bias[l][i];
  }
}

/// Minibatch SGD over the sample set. Logs "iter,stage,loss" lines when a
/// log stream is given; returns the loss trace.
inline std::vector<double> train_network(Network& net,
                                         const std::vector<Sample>& data,
                                         const TrainConfig& config,
                                         std::ostream* log = nullptr,
                                         const std::string& stage = "0") {
  config.validate();
  if (data.empty())
    throw std::invalid_argument("train_network: empty training data");
  std::mt19937_64 rng(config.seed);
  SgdState state = SgdState::zeros_like(net);
  std::vector<double> trace;
  for (int iter = 0; iter < config.iterations; ++iter) {
    Gradients acc = zero_gradients(net);
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const Sample& s = data[rng() % data.size()];
      Activations acts = forward_with_activations(net, s.input);
      auto [loss, grad_out] = cross_entropy_loss(acts.output, s.pooled_label);
      batch_loss += loss;
      accumulate_gradients(acc, backward(net, acts, grad_out),
                           1.0 / config.batch_size);
    }
    batch_loss /= config.batch_size;
    sgd_step(net, acc, state, config);
    trace.push_back(batch_loss);
    if (log) *log << iter << "," << stage << "," << batch_loss << "\n";
  }
  return trace;
}

/// Alias matching the branch-training contract: train with some layers
/// already frozen (the caller sets net.frozen).
inline std::vector<double> train_branch(Network& net,
                                        const std::vector<Sample>& data,
                                        const TrainConfig& config,
                                        std::ostream* log = nullptr,
                                        const std::string& stage = "0") {
  return train_network(net, data, config, log, stage);
}

namespace detail {

/// Splits a spec into [conv-pool prefix][middle convs][1x1 head, Sig].
struct PretrainPlan {
  std::vector<LayerSpec> prefix;       // Conv ReLU Pool Conv ReLU Pool
  std::vector<LayerSpec> middle;       // Conv+ReLU pairs, in order
  LayerSpec head;                      // final Conv(·,1,1)
};

inline PretrainPlan plan_pretrain(const NetworkSpec& spec) {
  const auto& ls = spec.layers;
  auto is = [&](size_t i, LayerKind k) {
    return i < ls.size() && ls[i].kind == k;
  };
  if (ls.size() < 8 || !is(0, LayerKind::Conv) || !is(1, LayerKind::ReLU) ||
      !is(2, LayerKind::Pool) || !is(3, LayerKind::Conv) ||
      !is(4, LayerKind::ReLU) || !is(5, LayerKind::Pool))
    throw std::invalid_argument(
        "layerwise_pretrain: spec does not start with two conv-pool blocks");
  PretrainPlan plan;
  plan.prefix.assign(ls.begin(), ls.begin() + 6);
  size_t i = 6;
  while (i + 1 < ls.size() && is(i, LayerKind::Conv) &&
         is(i + 1, LayerKind::ReLU)) {
    plan.middle.push_back(ls[i]);
    i += 2;
  }
  if (i + 2 != ls.size() || !is(i, LayerKind::Conv) || ls[i].kernel != 1 ||
      !is(i + 1, LayerKind::Sig))
    throw std::invalid_argument(
        "layerwise_pretrain: spec must end with a 1x1 conv and Sig");
  plan.head = ls[i];
  return plan;
}

inline NetworkSpec stage_spec(const PretrainPlan& plan, int n_middle,
                              int input_channels) {
  NetworkSpec s;
  s.input_channels = input_channels;
  s.layers = plan.prefix;
  for (int i = 0; i < n_middle; ++i) {
    s.layers.push_back(plan.middle[i]);
    LayerSpec r;
    r.kind = LayerKind::ReLU;
    s.layers.push_back(r);
  }
  s.layers.push_back(plan.head);
  LayerSpec sig;
  sig.kind = LayerKind::Sig;
  s.layers.push_back(sig);
  return s;
}

}  // namespace detail

/// Layer-wise pre-training: stage 1 trains the two conv-pool blocks with
/// the 1x1 head; each later stage inserts one more conv before the head;
/// the final pass fine-tunes the full network globally. Parameters of
/// layers shared between consecutive stages carry over; the head is
/// re-initialized whenever its input width changes.
inline Network layerwise_pretrain(const NetworkSpec& spec,
                                  const std::vector<Sample>& data,
                                  const TrainConfig& config,
                                  std::ostream* log = nullptr) {
  const detail::PretrainPlan plan = detail::plan_pretrain(spec);
  const int n_stages = 1 + static_cast<int>(plan.middle.size());

  Network net;
  for (int stage = 0; stage < n_stages; ++stage) {
    const NetworkSpec ss =
        detail::stage_spec(plan, stage, spec.input_channels);
    Network fresh = init_network(ss, config.seed + 1000 + stage);
    if (stage > 0) {
      // carry every conv whose shape is unchanged (all but the new conv,
      // and the head unless its input width changed)
      size_t n_convs = net.params.size();
      for (size_t ci = 0; ci + 1 < n_convs; ++ci)
        fresh.params[ci] = net.params[ci];
      ConvParams& old_head = net.params[n_convs - 1];
      ConvParams& new_head = fresh.params.back();
      if (old_head.in_channels() == new_head.in_channels())
        new_head = old_head;
    }
    net = std::move(fresh);
    TrainConfig sc = config;
    sc.seed = config.seed + 2000 + stage;
    train_network(net, data, sc, log, "pretrain" + std::to_string(stage + 1));
  }

  // global fine-tune on the full spec
  TrainConfig gc = config;
  gc.seed = config.seed + 3000;
  train_network(net, data, gc, log, "finetune");
  return net;
}

}  // namespace fcnn
