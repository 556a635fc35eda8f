#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fcnn/netspec.hpp"
#include "fcnn/tensor.hpp"

namespace fcnn {

inline double uniform_unit(std::mt19937_64& rng) {
  // 53-bit mantissa draw, stable across standard library versions
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

struct Network {
  NetworkSpec spec;
  std::vector<ConvParams> params;  // one per Conv layer, in order
  std::vector<bool> frozen;        // per spec layer
  uint64_t seed = 0;

  /// Index into params for the i-th spec layer (must be a Conv layer).
  int conv_index(int layer) const {
    int ci = -1;
    for (int i = 0; i <= layer; ++i)
      if (spec.layers[i].kind == LayerKind::Conv) ++ci;
    return ci;
  }
};

/// Uniform [-a, a] init with a = sqrt(6 / (fan_in + fan_out)); zero biases.
inline Network init_network(const NetworkSpec& spec, uint64_t seed) {
  Network net;
  net.spec = spec;
  net.frozen.assign(spec.layers.size(), false);
  net.seed = seed;
  std::mt19937_64 rng(seed);
  int in_c = spec.input_channels;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind != LayerKind::Conv) continue;
    ConvParams p = make_conv(in_c, l.out_channels, l.kernel, l.stride);
    const double fan_in = static_cast<double>(in_c) * l.kernel * l.kernel;
    const double fan_out =
        static_cast<double>(l.out_channels) * l.kernel * l.kernel;
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Tensor& filt : p.weights)
      for (double& w : filt.values()) w = uniform_range(rng, -a, a);
    net.params.push_back(std::move(p));
    in_c = l.out_channels;
  }
  return net;
}

/// Per-layer inputs plus pooling winner maps, retained for backward.
struct Activations {
  std::vector<Tensor> inputs;          // inputs[i] feeds spec layer i
  std::vector<PoolResult> pools;       // one per Pool layer, in order
  Tensor output;                       // final network output
};

inline Tensor forward_layer(const Network& net, int layer, const Tensor& x,
                            PoolResult* pool_out = nullptr) {
  const LayerSpec& l = net.spec.layers[layer];
  switch (l.kind) {
    case LayerKind::Conv:
      return conv2d_forward(x, net.params[net.conv_index(layer)]);
    case LayerKind::Pool: {
      if (l.pool_type == PoolType::Ave) return avgpool_forward(x, l.kernel, l.stride);
      PoolResult r = maxpool_forward(x, l.kernel, l.stride);
      Tensor out = r.output;
      if (pool_out) *pool_out = std::move(r);
      return out;
    }
    case LayerKind::ReLU:
      return relu(x);
    case LayerKind::Sig:
      return sigmoid(x);
  }
  throw std::logic_error("forward_layer: unreachable");
}

/// Runs layers [0, last_layer]; last_layer < 0 means the whole network.
inline Activations forward_with_activations(const Network& net,
                                            const Tensor& input,
                                            int last_layer = -1) {
  if (input.channels() != net.spec.input_channels)
    throw std::invalid_argument("forward: input channel mismatch");
  const int last = last_layer < 0
                       ? static_cast<int>(net.spec.layers.size()) - 1
                       : last_layer;
  Activations acts;
  Tensor x = input;
  for (int i = 0; i <= last; ++i) {
    acts.inputs.push_back(x);
    if (net.spec.layers[i].kind == LayerKind::Pool &&
        net.spec.layers[i].pool_type == PoolType::Max) {
      PoolResult pr;
      x = forward_layer(net, i, x, &pr);
      acts.pools.push_back(std::move(pr));
    } else {
      x = forward_layer(net, i, x);
    }
  }
  acts.output = std::move(x);
  return acts;
}

inline Tensor forward(const Network& net, const Tensor& input,
                      int last_layer = -1) {
  if (input.channels() != net.spec.input_channels)
    throw std::invalid_argument("forward: input channel mismatch");
  const int last = last_layer < 0
                       ? static_cast<int>(net.spec.layers.size()) - 1
                       : last_layer;
  Tensor x = input;
  for (int i = 0; i <= last; ++i) x = forward_layer(net, i, x);
  return x;
}

struct Gradients {
  std::vector<std::vector<Tensor>> weights;  // per conv layer
  std::vector<std::vector<double>> bias;
  Tensor input;  // gradient w.r.t. the network input
};

inline Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const ConvParams& p : net.params) {
    std::vector<Tensor> gw;
    for (const Tensor& w : p.weights)
      gw.emplace_back(w.channels(), w.height(), w.width());
    g.weights.push_back(std::move(gw));
    g.bias.emplace_back(p.bias.size(), 0.0);
  }
  return g;
}

/// Reverse pass from layer `from_layer` (default: last layer run) down to
/// layer 0. grad_output is the gradient w.r.t. that layer's output.
/// Frozen conv layers get zero parameter gradients.
inline Gradients backward(const Network& net, const Activations& acts,
                          const Tensor& grad_output, int from_layer = -1) {
  if (acts.inputs.empty())
    throw std::invalid_argument("backward: missing activations");
  const int last = from_layer < 0
                       ? static_cast<int>(acts.inputs.size()) - 1
                       : from_layer;
  if (last >= static_cast<int>(acts.inputs.size()))
    throw std::invalid_argument("backward: activations shorter than range");

  Gradients g = zero_gradients(net);
  Tensor grad = grad_output;
  int pool_idx = 0;
  for (int i = 0; i <= last; ++i)
    if (net.spec.layers[i].kind == LayerKind::Pool &&
        net.spec.layers[i].pool_type == PoolType::Max)
      ++pool_idx;
  // outputs of layer i: for i < last it is acts.inputs[i+1]; for the last
  // layer it is acts.output only when the full range was recorded.
  auto layer_output = [&](int i) -> const Tensor& {
    return (i + 1 < static_cast<int>(acts.inputs.size())) ? acts.inputs[i + 1]
                                                          : acts.output;
  };
  for (int i = last; i >= 0; --i) {
    const LayerSpec& l = net.spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const int ci = net.conv_index(i);
        ConvGrads cg = conv2d_backward(acts.inputs[i], net.params[ci], grad);
        if (!net.frozen[i]) {
          g.weights[ci] = std::move(cg.grad_weights);
          g.bias[ci] = std::move(cg.grad_bias);
        }
        grad = std::move(cg.grad_input);
        break;
      }
      case LayerKind::Pool:
        if (l.pool_type == PoolType::Max) {
          --pool_idx;
          grad = maxpool_backward(acts.pools[pool_idx], grad);
        } else {
          grad = avgpool_backward(grad, l.kernel, l.stride,
                                  acts.inputs[i].channels(),
                                  acts.inputs[i].height(),
                                  acts.inputs[i].width());
        }
        break;
      case LayerKind::ReLU:
        grad = relu_backward(acts.inputs[i], grad);
        break;
      case LayerKind::Sig:
        grad = sigmoid_backward(layer_output(i), grad);
        break;
    }
  }
  g.input = std::move(grad);
  return g;
}

/// Rewrites a fully-connected weight matrix (rows x (C*H*W)) as conv
/// filters so that convolving an exactly C x H x W input reproduces the
/// matrix-vector product at the single output position.
inline ConvParams fc_as_conv(const std::vector<std::vector<double>>& weights,
                             const std::vector<double>& bias, int c, int h,
                             int w) {
  if (h != w)
    throw std::invalid_argument("fc_as_conv: kernel must be square (H == W)");
  if (weights.empty()) throw std::invalid_argument("fc_as_conv: empty matrix");
  if (bias.size() != weights.size())
    throw std::invalid_argument("fc_as_conv: bias length mismatch");
  const size_t cols = static_cast<size_t>(c) * h * w;
  ConvParams p;
  p.kernel = h;
  p.stride = 1;
  p.padding = 0;
  for (const auto& row : weights) {
    if (row.size() != cols)
      throw std::invalid_argument(
          "fc_as_conv: row length " + std::to_string(row.size()) +
          " != C*H*W = " + std::to_string(cols));
    Tensor filt(c, h, w);
    std::copy(row.begin(), row.end(), filt.values().begin());
    p.weights.push_back(std::move(filt));
  }
  p.bias = bias;
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "FCNN", version u16, header length u32, UTF-8 JSON
// header, then all parameters as little-endian f32 (weights then bias, conv
// layers in order).

inline constexpr uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Network& net,
                            const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["spec"] = format_spec(net.spec);
  header["input_channels"] = net.spec.input_channels;
  header["seed"] = net.seed;
  nlohmann::json layers = nlohmann::json::array();
  for (const ConvParams& p : net.params) {
    layers.push_back({{"out", p.out_channels()},
                      {"in", p.in_channels()},
                      {"k", p.kernel},
                      {"stride", p.stride},
                      {"padding", p.padding}});
  }
  header["layers"] = layers;
  const std::string htext = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " +
                                    path.string());
  os.write("FCNN", 4);
  detail::put_u16(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<uint32_t>(htext.size()));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const ConvParams& p : net.params) {
    for (const Tensor& wt : p.weights)
      for (double v : wt.values()) detail::put_f32(os, static_cast<float>(v));
    for (double b : p.bias) detail::put_f32(os, static_cast<float>(b));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed");
}

inline Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " +
                                    path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string_view(magic, 4) != "FCNN")
    throw std::runtime_error("load_checkpoint: bad magic bytes");
  const uint16_t version = detail::get_u16(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  const uint32_t hlen = detail::get_u32(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), hlen);
  if (!is) throw std::runtime_error("load_checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: corrupt header: ") +
                             e.what());
  }

  Network net;
  net.spec = parse_spec(header.at("spec").get<std::string>(),
                        header.at("input_channels").get<int>());
  net.seed = header.at("seed").get<uint64_t>();
  net.frozen.assign(net.spec.layers.size(), false);

  const auto& layers = header.at("layers");
  int in_c = net.spec.input_channels;
  size_t li = 0;
  for (const LayerSpec& l : net.spec.layers) {
    if (l.kind != LayerKind::Conv) continue;
    if (li >= layers.size())
      throw std::runtime_error("load_checkpoint: header layer count mismatch");
    const auto& hl = layers[li++];
    if (hl.at("out").get<int>() != l.out_channels ||
        hl.at("in").get<int>() != in_c || hl.at("k").get<int>() != l.kernel)
      throw std::runtime_error(
          "load_checkpoint: header shapes disagree with spec string");
    ConvParams p = make_conv(in_c, l.out_channels, l.kernel, l.stride);
    for (Tensor& wt : p.weights)
      for (double& v : wt.values()) v = detail::get_f32(is);
    for (double& b : p.bias) b = detail::get_f32(is);
    net.params.push_back(std::move(p));
    in_c = l.out_channels;
  }
  if (li != layers.size())
    throw std::runtime_error("load_checkpoint: header layer count mismatch");
  if (!is) throw std::runtime_error("load_checkpoint: truncated payload");
  is.peek();
  if (!is.eof()) throw std::runtime_error("load_checkpoint: trailing bytes");
  return net;
}

}  // namespace fcnn
