#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcnn/network.hpp"
#include "fcnn/training.hpp"

namespace fcnn {

enum class FusionScheme { Input, Feature, Decision };

inline std::string to_string(FusionScheme s) {
  switch (s) {
    case FusionScheme::Input: return "input";
    case FusionScheme::Feature: return "feature";
    case FusionScheme::Decision: return "decision";
  }
  throw std::logic_error("to_string(FusionScheme): unreachable");
}

inline FusionScheme fusion_scheme_from_string(const std::string& s) {
  if (s == "input") return FusionScheme::Input;
  if (s == "feature") return FusionScheme::Feature;
  if (s == "decision") return FusionScheme::Decision;
  throw std::invalid_argument("unknown fusion scheme '" + s + "'");
}

inline constexpr std::array<const char*, 3> kCueNames = {"appearance",
                                                         "motion", "structure"};

/// Per-frame inputs for all three cues, identically cropped, plus the
/// pooled label.
struct FusionSample {
  Tensor appearance;
  Tensor motion;
  Tensor structure;
  Tensor pooled_label;

  const Tensor& cue(int i) const {
    switch (i) {
      case 0: return appearance;
      case 1: return motion;
      case 2: return structure;
    }
    throw std::out_of_range("FusionSample::cue");
  }
};

/// Single network over concatenated cue channels.
inline Network build_input_fusion(const std::vector<int>& channel_counts,
                                  uint64_t seed,
                                  std::string_view branch_spec = kDefaultSpec) {
  int total = 0;
  for (int c : channel_counts) total += c;
  if (total < 1)
    throw std::invalid_argument("build_input_fusion: no input channels");
  return init_network(parse_spec(branch_spec, total), seed);
}

/// Three cue branches joined by a 1x1 conv head, either at the 16-channel
/// feature maps (Feature) or at the sigmoid decision maps (Decision).
struct MultiBranchNetwork {
  FusionScheme scheme = FusionScheme::Feature;
  std::array<Network, 3> branches;  // appearance, motion, structure
  ConvParams head;
  SgdState head_state;              // momentum buffers for the head
  bool average_mode = false;        // Decision only: unweighted mean
  int tap_layer = -1;               // branch layer index feeding the head

  Network& branch(int i) { return branches[i]; }
  const Network& branch(int i) const { return branches[i]; }
};

namespace detail {

/// Index of the layer whose output feeds the fusion head: the ReLU after
/// the last pre-decision conv (Feature), or the final Sig (Decision).
inline int tap_layer_index(const Network& net, FusionScheme scheme) {
  const auto& ls = net.spec.layers;
  if (scheme == FusionScheme::Decision)
    return static_cast<int>(ls.size()) - 1;
  // last ReLU before the final conv
  for (int i = static_cast<int>(ls.size()) - 1; i >= 0; --i)
    if (ls[i].kind == LayerKind::Conv && ls[i].kernel == 1)
      return i - 1;
  throw std::invalid_argument("tap_layer_index: no 1x1 head conv in branch");
}

inline int tap_channels(const Network& net, int tap) {
  int c = net.spec.input_channels;
  for (int i = 0; i <= tap; ++i)
    if (net.spec.layers[i].kind == LayerKind::Conv)
      c = net.spec.layers[i].out_channels;
  return c;
}

inline void init_head(ConvParams& head, int in_channels, uint64_t seed) {
  head = make_conv(in_channels, 1, 1);
  const double a = std::sqrt(6.0 / (in_channels + 1));
  std::mt19937_64 rng(seed);
  for (Tensor& f : head.weights)
    for (double& w : f.values()) w = uniform_range(rng, -a, a);
}

}  // namespace detail

inline MultiBranchNetwork build_feature_fusion(Network appearance,
                                               Network motion,
                                               Network structure,
                                               uint64_t seed) {
  MultiBranchNetwork mbn;
  mbn.scheme = FusionScheme::Feature;
  mbn.branches = {std::move(appearance), std::move(motion),
                  std::move(structure)};
  mbn.tap_layer = detail::tap_layer_index(mbn.branches[0], mbn.scheme);
  int total = 0;
  for (const Network& b : mbn.branches)
    total += detail::tap_channels(b, detail::tap_layer_index(b, mbn.scheme));
  detail::init_head(mbn.head, total, seed);
  mbn.head_state.vel_weights.push_back(
      {Tensor(total, 1, 1)});
  mbn.head_state.vel_bias.push_back({0.0});
  return mbn;
}

inline MultiBranchNetwork build_decision_fusion(Network appearance,
                                                Network motion,
                                                Network structure,
                                                uint64_t seed,
                                                bool average_mode = false) {
  MultiBranchNetwork mbn;
  mbn.scheme = FusionScheme::Decision;
  mbn.branches = {std::move(appearance), std::move(motion),
                  std::move(structure)};
  mbn.tap_layer =
      detail::tap_layer_index(mbn.branches[0], FusionScheme::Decision);
  mbn.average_mode = average_mode;
  detail::init_head(mbn.head, 3, seed);
  // warm-start the learned head as a positive near-uniform vote: the inputs
  // are branch probabilities, and a random negative weight can push the
  // fine-tuning branch into a self-consistent inverted solution during the
  // staged cascade (the branch learns to flip, the head keeps the flip)
  for (Tensor& f : mbn.head.weights)
    for (double& w : f.values()) w = 1.0;
  mbn.head.bias[0] = -1.5;
  mbn.head_state.vel_weights.push_back({Tensor(3, 1, 1)});
  mbn.head_state.vel_bias.push_back({0.0});
  return mbn;
}

/// Forward of the fused model on one multi-cue sample.
inline Tensor fused_forward(const MultiBranchNetwork& mbn,
                            const Tensor& appearance, const Tensor& motion,
                            const Tensor& structure) {
  std::array<const Tensor*, 3> cues = {&appearance, &motion, &structure};
  std::vector<Tensor> taps;
  for (int b = 0; b < 3; ++b)
    taps.push_back(forward(mbn.branches[b], *cues[b], mbn.tap_layer));
  const Tensor joined = concat_channels(std::span<const Tensor>(taps));
  if (mbn.scheme == FusionScheme::Decision && mbn.average_mode) {
    Tensor out(1, joined.height(), joined.width());
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(0, y, x) =
            (joined.at(0, y, x) + joined.at(1, y, x) + joined.at(2, y, x)) /
            3.0;
    return out;
  }
  return sigmoid(conv2d_forward(joined, mbn.head));
}

/// One SGD step of the fused model on a minibatch. Branches whose
/// `frozen` flags are all set receive no updates; the head always trains.
inline double fused_train_step(MultiBranchNetwork& mbn,
                               const std::vector<const FusionSample*>& batch,
                               std::array<SgdState, 3>& branch_states,
                               const TrainConfig& config) {
  if (mbn.scheme == FusionScheme::Decision && mbn.average_mode)
    throw std::invalid_argument("fused_train_step: average mode is not trainable");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  std::array<Gradients, 3> branch_acc;
  for (int b = 0; b < 3; ++b) branch_acc[b] = zero_gradients(mbn.branches[b]);
  Tensor head_gw(mbn.head.in_channels(), 1, 1);
  double head_gb = 0.0;
  double total_loss = 0.0;

  for (const FusionSample* s : batch) {
    std::array<Activations, 3> acts;
    std::vector<Tensor> taps;
    for (int b = 0; b < 3; ++b) {
      acts[b] = forward_with_activations(mbn.branches[b], s->cue(b),
                                         mbn.tap_layer);
      taps.push_back(acts[b].output);
    }
    const Tensor joined = concat_channels(std::span<const Tensor>(taps));
    const Tensor pre = conv2d_forward(joined, mbn.head);
    const Tensor out = sigmoid(pre);

    auto [loss, grad_out] = cross_entropy_loss(out, s->pooled_label);
    total_loss += loss;
    const Tensor grad_pre = sigmoid_backward(out, grad_out);
    ConvGrads hg = conv2d_backward(joined, mbn.head, grad_pre);
    for (size_t i = 0; i < head_gw.size(); ++i)
      head_gw.values()[i] += inv_batch * hg.grad_weights[0].values()[i];
    head_gb += inv_batch * hg.grad_bias[0];

    int c0 = 0;
    for (int b = 0; b < 3; ++b) {
      const int cb = taps[b].channels();
      bool all_frozen = true;
      for (size_t l = 0; l < mbn.branches[b].frozen.size(); ++l)
        if (!mbn.branches[b].frozen[l]) all_frozen = false;
      if (!all_frozen) {
        const Tensor gslice = slice_channels(hg.grad_input, c0, cb);
        accumulate_gradients(branch_acc[b],
                             backward(mbn.branches[b], acts[b], gslice,
                                      mbn.tap_layer),
                             inv_batch);
      }
      c0 += cb;
    }
  }

  for (int b = 0; b < 3; ++b)
    sgd_step(mbn.branches[b], branch_acc[b], branch_states[b], config);

  // head update
  auto& vw = mbn.head_state.vel_weights[0][0].values();
  auto& w = mbn.head.weights[0].values();
  for (size_t i = 0; i < w.size(); ++i) {
    vw[i] = config.momentum * vw[i] - config.learning_rate * head_gw.values()[i];
    w[i] += vw[i];
  }
  auto& vb = mbn.head_state.vel_bias[0][0];
  vb = config.momentum * vb - config.learning_rate * head_gb;
  mbn.head.bias[0] += vb;

  return total_loss * inv_batch;
}

inline void set_branch_frozen(MultiBranchNetwork& mbn, int branch,
                              bool frozen) {
  for (size_t l = 0; l < mbn.branches[branch].frozen.size(); ++l)
    mbn.branches[branch].frozen[l] = frozen;
}

inline std::vector<double> fused_train(MultiBranchNetwork& mbn,
                                       const std::vector<FusionSample>& data,
                                       const TrainConfig& config,
                                       std::ostream* log,
                                       const std::string& stage) {
  if (data.empty())
    throw std::invalid_argument("fused_train: empty training data");
  std::mt19937_64 rng(config.seed);
  std::array<SgdState, 3> states = {
      SgdState::zeros_like(mbn.branches[0]),
      SgdState::zeros_like(mbn.branches[1]),
      SgdState::zeros_like(mbn.branches[2])};
  std::vector<double> trace;
  for (int iter = 0; iter < config.iterations; ++iter) {
    std::vector<const FusionSample*> batch;
    for (int b = 0; b < config.batch_size; ++b)
      batch.push_back(&data[rng() % data.size()]);
    const double loss = fused_train_step(mbn, batch, states, config);
    trace.push_back(loss);
    if (log) *log << iter << "," << stage << "," << loss << "\n";
  }
  return trace;
}

/// Cascaded schedule over pre-trained branches: fix appearance, fine-tune
/// motion; fix appearance+motion, fine-tune structure; then global
/// fine-tune. The head trains in every stage. Returns the stage names in
/// execution order.
inline std::vector<std::string> multistage_train(
    MultiBranchNetwork& mbn, const std::vector<FusionSample>& data,
    const TrainConfig& config, std::ostream* log = nullptr) {
  if (data.empty())
    throw std::invalid_argument("multistage_train: missing cue dataset");
  const std::vector<std::string> stages = {"motion", "structure", "global"};
  for (size_t si = 0; si < stages.size(); ++si) {
    set_branch_frozen(mbn, 0, si < 2);      // appearance fixed until global
    set_branch_frozen(mbn, 1, si == 1);     // motion fixed during structure
    set_branch_frozen(mbn, 2, si == 0);     // structure untouched in stage 1
    TrainConfig sc = config;
    sc.seed = config.seed + 4000 + si;
    fused_train(mbn, data, sc, log, stages[si]);
  }
  for (int b = 0; b < 3; ++b) set_branch_frozen(mbn, b, false);
  return stages;
}

// ---------------------------------------------------------------------------
// Multi-branch persistence: one checkpoint per branch plus a head file,
// tied together by a JSON manifest with file hashes.

inline uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("fnv1a_file: cannot open " + path.string());
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (is.eof()) break;
  }
  return h;
}

inline void save_head(const ConvParams& head,
                      const std::filesystem::path& path) {
  nlohmann::json j;
  j["in_channels"] = head.in_channels();
  j["bias"] = head.bias[0];
  j["weights"] = head.weights[0].values();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_head: cannot open " + path.string());
  os << j.dump(2) << "\n";
}

inline ConvParams load_head(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_head: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is);
  const int c = j.at("in_channels").get<int>();
  ConvParams head = make_conv(c, 1, 1);
  head.bias[0] = j.at("bias").get<double>();
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != head.weights[0].size())
    throw std::runtime_error("load_head: weight count mismatch");
  head.weights[0].values() = w;
  return head;
}

inline void save_multibranch(const MultiBranchNetwork& mbn,
                             const std::filesystem::path& dir,
                             const std::string& name) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["scheme"] = to_string(mbn.scheme);
  manifest["average_mode"] = mbn.average_mode;
  nlohmann::json files = nlohmann::json::array();
  for (int b = 0; b < 3; ++b) {
    const std::string fname = name + "." + kCueNames[b] + ".fcnn";
    save_checkpoint(mbn.branches[b], dir / fname);
    files.push_back({{"role", kCueNames[b]},
                     {"file", fname},
                     {"fnv1a", fnv1a_file(dir / fname)}});
  }
  const std::string hname = name + ".head.json";
  save_head(mbn.head, dir / hname);
  files.push_back(
      {{"role", "head"}, {"file", hname}, {"fnv1a", fnv1a_file(dir / hname)}});
  manifest["files"] = files;
  std::ofstream os(dir / (name + ".manifest.json"));
  os << manifest.dump(2) << "\n";
}

inline MultiBranchNetwork load_multibranch(const std::filesystem::path& dir,
                                           const std::string& name) {
  std::ifstream is(dir / (name + ".manifest.json"));
  if (!is)
    throw std::runtime_error("load_multibranch: no manifest for " + name);
  nlohmann::json manifest = nlohmann::json::parse(is);

  MultiBranchNetwork mbn;
  mbn.scheme = fusion_scheme_from_string(manifest.at("scheme").get<std::string>());
  mbn.average_mode = manifest.at("average_mode").get<bool>();
  for (const auto& f : manifest.at("files")) {
    const std::filesystem::path p = dir / f.at("file").get<std::string>();
    if (fnv1a_file(p) != f.at("fnv1a").get<uint64_t>())
      throw std::runtime_error("load_multibranch: hash mismatch for " +
                               p.string());
    const std::string role = f.at("role").get<std::string>();
    if (role == "head") {
      mbn.head = load_head(p);
    } else {
      for (int b = 0; b < 3; ++b)
        if (role == kCueNames[b]) mbn.branches[b] = load_checkpoint(p);
    }
  }
  mbn.tap_layer = detail::tap_layer_index(mbn.branches[0], mbn.scheme);
  mbn.head_state.vel_weights.push_back(
      {Tensor(mbn.head.in_channels(), 1, 1)});
  mbn.head_state.vel_bias.push_back({0.0});
  return mbn;
}

}  // namespace fcnn
