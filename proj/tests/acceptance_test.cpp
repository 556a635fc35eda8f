// Acceptance gate: runs the ten release criteria end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcnn/evalbench.hpp"
#include "fcnn/fusion.hpp"
#include "fcnn/netspec.hpp"
#include "fcnn/network.hpp"
#include "fcnn/scenedata.hpp"
#include "fcnn/training.hpp"

namespace fs = std::filesystem;
using namespace fcnn;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass,
            const std::string& detail = "") {
  std::cout << (pass ? "PASS" : "FAIL") << ": criterion " << index << " ("
            << name << ")";
  if (!detail.empty()) std::cout << " — " << detail;
  std::cout << "\n" << std::flush;
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_input(int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(c, h, w);
  for (double& v : t.values()) v = uniform_unit(rng);
  return t;
}

// --------------------------------------------------------------- criterion 1

void criterion1_fc_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double max_err = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 24);
    const int m = 1 + static_cast<int>(rng() % 24);
    std::vector<std::vector<double>> mat(m, std::vector<double>(n));
    std::vector<double> bias(m), in(n);
    for (auto& row : mat)
      for (double& v : row) v = uniform_range(rng, -2, 2);
    for (double& v : bias) v = uniform_range(rng, -2, 2);
    for (double& v : in) v = uniform_range(rng, -2, 2);

    const ConvParams conv = fc_as_conv(mat, bias, n, 1, 1);
    Tensor x(n, 1, 1);
    x.values() = in;
    const Tensor out = conv2d_forward(x, conv);
    for (int i = 0; i < m; ++i) {
      double dot = bias[i];
      for (int j = 0; j < n; ++j) dot += mat[i][j] * in[j];
      max_err = std::max(max_err, std::abs(dot - out.at(i, 0, 0)));
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max abs error " << max_err << ", " << elapsed << " s";
  report(1, "fully-connected layer as 1x1 convolution",
         max_err < 1e-12 && elapsed < 1.0, d.str());
}

// --------------------------------------------------------------- criterion 2

void criterion2_gradient_check() {
  const auto t0 = Clock::now();
  Network net = init_network(parse_spec(kDefaultSpec, 3), 202);
  std::mt19937_64 rng(203);
  const Tensor input = random_input(3, 16, 16, rng);
  Tensor label(1, 4, 4);
  for (double& v : label.values()) v = rng() % 2 ? 1.0 : 0.0;

  auto loss_at = [&] {
    return cross_entropy_loss(forward(net, input), label).first;
  };
  const Activations acts = forward_with_activations(net, input);
  const auto [loss, grad_out] = cross_entropy_loss(acts.output, label);
  const Gradients grads = backward(net, acts, grad_out);

  double worst = 0.0;
  int checked = 0, skipped = 0;
  const double step = 1e-6;
  for (size_t layer = 0; layer < net.params.size(); ++layer) {
    for (int probe = 0; probe < 8; ++probe) {
      ConvParams& p = net.params[layer];
      const size_t filt = rng() % p.weights.size();
      double* coord;
      double analytic;
      if (probe == 7) {
        coord = &p.bias[filt];
        analytic = grads.bias[layer][filt];
      } else {
        const size_t i = rng() % p.weights[filt].size();
        coord = &p.weights[filt].values()[i];
        analytic = grads.weights[layer][filt].values()[i];
      }
      const double keep = *coord;
      *coord = keep + step;
      const double up = loss_at();
      *coord = keep - step;
      const double down = loss_at();
      *coord = keep;
      const double fd = (up - down) / (2.0 * step);
      // near-zero pairs sit inside ReLU kinks / pool ties; skip them
      if (std::abs(fd) < 1e-7 && std::abs(analytic) < 1e-7) {
        ++skipped;
        continue;
      }
      const double rel = std::abs(fd - analytic) /
                         std::max(std::abs(fd), std::abs(analytic));
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << checked << " coordinates, worst relative error " << worst << " ("
    << skipped << " near-zero skipped), " << elapsed << " s";
  report(2, "whole-network gradient vs finite differences",
         worst < 1e-5 && checked > 30 && elapsed < 60.0, d.str());
}

// --------------------------------------------------------------- criterion 3

void criterion3_receptive_field() {
  const NetworkSpec spec = parse_spec(kDefaultSpec, 1);
  const GeometryReport geo = receptive_field(spec);

  // independent measurement: make the network monotone (positive weights,
  // non-negative input) so a bump at one input pixel must propagate, then
  // count which rows of one output column feel a centered bump
  Network net = init_network(spec, 303);
  for (ConvParams& p : net.params) {
    for (Tensor& f : p.weights)
      for (double& w : f.values()) w = std::abs(w) + 1e-3;
    for (double& b : p.bias) b = 0.0;
  }
  const int size = 116;
  const int s = geo.output_stride;
  std::mt19937_64 rng(304);
  const Tensor image = random_input(1, size, size, rng);
  // final Sig would saturate and mask the bump; probe the pre-Sig layer
  const int last = static_cast<int>(spec.layers.size()) - 2;
  const Tensor base = forward(net, image, last);

  // bump one row per stride phase; cell i reacts iff its receptive field
  // [s*i - left, s*i + right] contains the bumped row, so the extreme
  // reacting cells recover the asymmetric reach exactly
  int left = 0, right = 0;
  const int cx = size / 2;
  for (int phase = 0; phase < s; ++phase) {
    const int row = cx + phase;
    Tensor bumped_img = image;
    bumped_img.at(0, row, cx) += 10.0;
    const Tensor bumped = forward(net, bumped_img, last);
    int i_min = base.height(), i_max = -1;
    for (int y = 0; y < base.height(); ++y)
      if (bumped.at(0, y, cx / s) != base.at(0, y, cx / s)) {
        i_min = std::min(i_min, y);
        i_max = std::max(i_max, y);
      }
    right = std::max(right, row - s * i_min);
    left = std::max(left, s * i_max - row);
  }
  const int measured = left + right + 1;

  std::ostringstream d;
  d << "reported R=" << geo.receptive_field << " stride=" << s
    << ", footprint measures R=" << measured << " (reach -" << left << "/+"
    << right << ")";
  report(3, "receptive field of the reference architecture",
         geo.receptive_field == 54 && s == 4 &&
             measured == geo.receptive_field,
         d.str());
}

// --------------------------------------------------------------- criterion 4

void criterion4_patch_scan() {
  const auto t0 = Clock::now();
  const NetworkSpec spec = parse_spec(kDefaultSpec, 1);
  const int stride = 4;
  // the receptive field of an output cell reaches 25 pixels left and 28
  // right of its input block; 56 is not stride-aligned around that span,
  // so the tightest exact patch is 60 (crop offset 28, a multiple of 4)
  const int patch = 60;

  std::mt19937_64 rng(404);
  double max_diff = 0.0, max_diff56 = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Network net = init_network(spec, 405 + rep);
    const Tensor image = random_input(1, 96, 96, rng);
    const Tensor full = forward(net, image);
    const auto [first, last] = interior_range(96, patch, stride);
    // a 3x3 block of interior cells per network keeps the runtime sane
    const int y0 = first + static_cast<int>(rng() % (last - first - 2));
    const int x0 = first + static_cast<int>(rng() % (last - first - 2));
    const Tensor scan =
        patch_scan(net, image, patch, stride, y0, y0 + 3, x0, x0 + 3);
    for (int y = y0; y < y0 + 3; ++y)
      for (int x = x0; x < x0 + 3; ++x)
        max_diff = std::max(
            max_diff, std::abs(scan.at(0, y, x) - full.at(0, y, x)));
    if (rep == 0) {
      // for the record: a 56-pixel patch misaligns the pooling grid
      const Tensor scan56 =
          patch_scan(net, image, 56, stride, y0, y0 + 3, x0, x0 + 3);
      for (int y = y0; y < y0 + 3; ++y)
        for (int x = x0; x < x0 + 3; ++x)
          max_diff56 = std::max(
              max_diff56, std::abs(scan56.at(0, y, x) - full.at(0, y, x)));
    }
  }

  // speedup: median full-frame time vs per-cell scan cost extrapolated to
  // the full output grid (scanning every cell of a 224x224 frame would
  // take hours). Every scanned patch is the same 60x60 forward regardless
  // of frame size, so the per-cell cost is measured once and shared; the
  // size comparison then hinges on the full-frame medians alone instead of
  // compounding two noisy scan samples
  std::map<int, double> speedup;
  const Network net = init_network(spec, 406);
  double per_cell_ms;
  {
    const Tensor image = random_input(1, 112, 112, rng);
    const int sample_cells = 8;
    const auto s0 = Clock::now();
    patch_scan(net, image, patch, stride, 8, 8 + sample_cells, 8, 9);
    per_cell_ms = seconds_since(s0) * 1e3 / sample_cells;
  }
  // 64 vs 224 gives the growth check a real margin: the border cells that
  // skip out-of-range taps are ~9% of rows at 64 but ~3% at 224, so the
  // full-frame per-cell cost drops measurably with size
  for (const int size : {64, 224}) {
    const Tensor image = random_input(1, size, size, rng);
    std::vector<double> full_ms;
    for (int r = 0; r < (size == 64 ? 9 : 5); ++r) {
      const auto f0 = Clock::now();
      forward(net, image);
      full_ms.push_back(seconds_since(f0) * 1e3);
    }
    const int cells = (size / stride) * (size / stride);
    speedup[size] = per_cell_ms * cells / median(full_ms);
  }

  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max interior diff " << max_diff << " (patch 60; patch 56 misaligns: "
    << max_diff56 << "), speedup x" << static_cast<long>(speedup[64])
    << " at 64, x" << static_cast<long>(speedup[224]) << " at 224, "
    << elapsed << " s";
  report(4, "patch scan equals full-frame forward",
         max_diff < 1e-9 && speedup[224] > 10.0 &&
             speedup[224] > speedup[64],
         d.str());
}

// --------------------------------------------------------------- criterion 5

void criterion5_translation_equivariance() {
  const NetworkSpec spec = parse_spec(kDefaultSpec, 1);
  std::mt19937_64 rng(505);
  const int size = 96, shift = 4, border = 14;  // R/4 cells on each side
  double max_diff = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Network net = init_network(spec, 506 + rep);
    const Tensor image = random_input(1, size, size, rng);
    Tensor shifted(1, size, size);
    for (int y = 0; y + shift < size; ++y)
      for (int x = 0; x < size; ++x)
        shifted.at(0, y + shift, x) = image.at(0, y, x);
    const Tensor a = forward(net, image);
    const Tensor b = forward(net, shifted);
    for (int y = border; y < a.height() - border - 1; ++y)
      for (int x = border; x < a.width() - border; ++x)
        max_diff = std::max(
            max_diff, std::abs(b.at(0, y + 1, x) - a.at(0, y, x)));
  }
  std::ostringstream d;
  d << "10 networks, max interior deviation " << max_diff;
  report(5, "4-pixel shift moves the output by one cell",
         max_diff == 0.0, d.str());
}

// --------------------------------------------------------------- criterion 6

void criterion6_loss_arithmetic() {
  bool ok = true;
  std::ostringstream d;

  Tensor o(1, 2, 2), t(1, 2, 2);
  for (int i = 0; i < 4; ++i) {
    o.values()[i] = 0.1 + 0.2 * i;
    t.values()[i] = o.values()[i];
  }
  const double match_loss = cross_entropy_loss(o, t).first;
  // with targets equal to predictions the loss sits at the entropy floor;
  // the hand value for this grid is -(1/4) sum [p ln p + (1-p) ln(1-p)]
  double floor = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double p = o.values()[i];
    floor -= (p * std::log(p) + (1 - p) * std::log(1 - p)) / 4.0;
  }
  ok &= std::abs(match_loss - floor) < 1e-12;

  Tensor half(1, 1, 1), lbl(1, 1, 1);
  half.values()[0] = 0.5;
  lbl.values()[0] = 0.5;
  ok &= std::abs(cross_entropy_loss(half, lbl).first - std::log(2.0)) < 1e-12;

  // hard targets: -ln o for t=1, -ln(1-o) for t=0
  Tensor p1(1, 1, 1), t1(1, 1, 1);
  p1.values()[0] = 0.3;
  t1.values()[0] = 1.0;
  ok &= std::abs(cross_entropy_loss(p1, t1).first + std::log(0.3)) < 1e-12;
  t1.values()[0] = 0.0;
  ok &= std::abs(cross_entropy_loss(p1, t1).first + std::log(0.7)) < 1e-12;

  // checkerboard mask pools to exactly 0.5 everywhere
  Tensor board(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) board.at(0, y, x) = (x + y) % 2;
  const Tensor pooled = pool_labels(board);
  bool half_ok = true;
  for (double v : pooled.values()) half_ok &= v == 0.5;
  ok &= half_ok;

  d << "hand cases to 1e-12, checkerboard pools to 0.5 "
    << (half_ok ? "exactly" : "INEXACTLY");
  report(6, "cross-entropy and label pooling arithmetic", ok, d.str());
}

// --------------------------------------------------------------- criterion 7

void criterion7_roc_auc() {
  std::mt19937_64 rng(707);
  double worst = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> scores;
    std::vector<char> labels;
    for (int i = 0; i < 1000; ++i) {
      scores.push_back(std::floor(uniform_unit(rng) * 25.0) / 25.0);
      labels.push_back(uniform_unit(rng) < 0.35 ? 1 : 0);
    }
    double wins = 0.0;
    size_t np = 0, nn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (!labels[i]) continue;
      ++np;
      for (size_t j = 0; j < scores.size(); ++j) {
        if (labels[j]) continue;
        if (scores[i] > scores[j]) wins += 1.0;
        else if (scores[i] == scores[j]) wins += 0.5;
      }
    }
    for (char l : labels) nn += l ? 0 : 1;
    const double oracle = wins / (static_cast<double>(np) * nn);
    worst = std::max(worst, std::abs(roc_auc(scores, labels).auc - oracle));
  }
  const bool perfect =
      roc_auc({0.9, 0.8, 0.1}, {1, 1, 0}).auc == 1.0 &&
      roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}).auc == 0.5;
  std::ostringstream d;
  d << "1000-point sets, max deviation from pairwise oracle " << worst;
  report(7, "ROC/AUC against the brute-force oracle",
         worst < 1e-12 && perfect, d.str());
}

// ------------------------------------------------------- criteria 8, 9, 10

struct PipelineResult {
  std::map<std::string, double> auc;  // model name -> pooled test AUC
};

/// The full desk-scale pipeline: dataset, three cue branches, all three
/// fusion schemes, evaluation. Writes checkpoints and auc.json under dir.
PipelineResult run_pipeline(const fs::path& dir, uint64_t seed,
                            const SceneManifest& m, const fs::path& data_dir,
                            const std::vector<FusionSample>& train) {
  fs::create_directories(dir);
  // plain SGD at a rate calibrated for this depth; small batches buy more
  // updates per second on one core. Appearance needs the longest schedule
  // (its cue is the least linearly separable); the fusion heads are tiny
  // logistic layers on top of frozen-or-warm trunks and converge quickly.
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.2;
  cfg.momentum = 0.0;
  cfg.crop_size = 64;
  const int branch_iters[3] = {80, 50, 50};  // appearance, motion, structure

  // single-cue samples reuse the pre-cropped fusion windows
  const NetworkSpec spec = parse_spec(kDefaultSpec, 1);
  std::array<Network, 3> branches;
  for (int c = 0; c < 3; ++c) {
    std::vector<Sample> data;
    for (const FusionSample& s : train)
      data.push_back({s.cue(c), s.pooled_label});
    TrainConfig bc = cfg;
    bc.seed = seed + 10 * c;
    bc.iterations = branch_iters[c];
    branches[c] = layerwise_pretrain(spec, data, bc);
    save_checkpoint(branches[c],
                    dir / (std::string(kCueNames[c]) + ".fcnn"));
  }

  // input fusion: one network over the concatenated cue channels
  std::vector<Sample> joined;
  for (const FusionSample& s : train)
    joined.push_back({concat_channels({s.appearance, s.motion, s.structure}),
                      s.pooled_label});
  TrainConfig ic = cfg;
  ic.seed = seed + 30;
  ic.iterations = 80;
  Network input_net =
      layerwise_pretrain(parse_spec(kDefaultSpec, 3), joined, ic);
  save_checkpoint(input_net, dir / "input.fcnn");

  // feature and decision fusion over copies of the pre-trained branches
  TrainConfig fc = cfg;
  fc.iterations = 30;
  MultiBranchNetwork feature = build_feature_fusion(
      branches[0], branches[1], branches[2], seed + 40);
  multistage_train(feature, train, fc);
  save_multibranch(feature, dir, "feature");

  MultiBranchNetwork decision = build_decision_fusion(
      branches[0], branches[1], branches[2], seed + 50);
  multistage_train(decision, train, fc);
  save_multibranch(decision, dir, "decision");

  PipelineResult res;
  auto eval_model = [&](const std::string& name, auto&& predict) {
    res.auc[name] = evaluate(m, data_dir, predict).pooled_auc;
  };
  for (int c = 0; c < 3; ++c)
    eval_model(kCueNames[c], [&, c](const CueChannels& ch) {
      return forward(branches[c], ch.cue(c));
    });
  eval_model("input", [&](const CueChannels& ch) {
    return forward(input_net,
                   concat_channels({ch.appearance, ch.motion, ch.structure}));
  });
  eval_model("feature", [&](const CueChannels& ch) {
    return fused_forward(feature, ch.appearance, ch.motion, ch.structure);
  });
  eval_model("decision", [&](const CueChannels& ch) {
    return fused_forward(decision, ch.appearance, ch.motion, ch.structure);
  });
  eval_model("baseline", intensity_baseline);

  nlohmann::json j;
  j["seed"] = seed;
  for (const auto& [name, auc] : res.auc) j["pooled_auc"][name] = auc;
  std::ofstream os(dir / "auc.json");
  os << j.dump(2) << "\n";
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void criteria_8_9_10() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "fcnn_acceptance";
  fs::remove_all(root);
  const fs::path data_dir = root / "data";
  const uint64_t seed = 808;

  // 12 scenes, 10 train / 2 test, scene-disjoint by construction
  const SceneManifest m =
      build_dataset(12, 2, 10.0 / 12.0, seed, data_dir, 96, 96, 6);
  std::set<std::string> train_scenes, test_scenes;
  for (const ClipEntry& c : m.clips)
    (c.split == "train" ? train_scenes : test_scenes).insert(c.scene_id);

  // identically-cropped multi-cue training windows, shared by both runs
  std::vector<FusionSample> train;
  {
    TrainConfig crop_cfg;
    crop_cfg.crop_size = 64;
    crop_cfg.crops_per_frame = 8;
    std::mt19937_64 rng(seed);
    for (const ClipEntry& entry : m.clips) {
      if (entry.split != "train") continue;
      const Clip clip = load_clip(m, entry, data_dir);
      const CueChannels cues = extract_cues(clip);
      for (int i = 0; i < crop_cfg.crops_per_frame; ++i) {
        const int y0 = 4 * static_cast<int>(rng() % 9);  // (96-64)/4 = 8
        const int x0 = 4 * static_cast<int>(rng() % 9);
        const bool flip = uniform_unit(rng) < 0.5;
        auto take = [&](const Tensor& t) {
          Tensor c = crop(t, y0, x0, 64, 64);
          return flip ? flip_horizontal(c) : c;
        };
        train.push_back({take(cues.appearance), take(cues.motion),
                         take(cues.structure), pool_labels(take(clip.mask))});
      }
    }
  }

  const PipelineResult run1 =
      run_pipeline(root / "run1", seed, m, data_dir, train);
  const double run1_minutes = seconds_since(t0) / 60.0;

  const double best_branch =
      std::max({run1.auc.at("appearance"), run1.auc.at("motion"),
                run1.auc.at("structure")});
  bool fusion_ok = true, baseline_ok = true;
  for (const char* f : {"input", "feature", "decision"})
    fusion_ok &= run1.auc.at(f) >= best_branch - 0.02;
  for (const char* f : {"appearance", "motion", "structure", "input",
                        "feature", "decision"})
    baseline_ok &= run1.auc.at(f) > run1.auc.at("baseline");

  std::ostringstream d8;
  d8.precision(3);
  d8 << "AUC:";
  for (const auto& [name, auc] : run1.auc) d8 << " " << name << "=" << auc;
  d8 << "; " << train_scenes.size() << "/" << test_scenes.size()
     << " scene split; " << run1_minutes << " min";
  report(8, "end-to-end crowd segmentation run",
         train_scenes.size() == 10 && test_scenes.size() == 2 && fusion_ok &&
             baseline_ok && run1_minutes < 30.0,
         d8.str());

  // criterion 9: identical rerun, byte-identical artifacts
  run_pipeline(root / "run2", seed, m, data_dir, train);
  bool identical = true;
  std::string first_diff;
  for (const auto& entry : fs::directory_iterator(root / "run1")) {
    const fs::path other = root / "run2" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      identical = false;
      first_diff = entry.path().filename().string();
      break;
    }
  }
  report(9, "bit-identical rerun with the same seed", identical,
         identical ? "all checkpoints and auc.json match"
                   : "first mismatch: " + first_diff);

  // criterion 10: the appearance branch is untouched by the motion stage
  {
    MultiBranchNetwork mbn = build_feature_fusion(
        load_checkpoint(root / "run1" / "appearance.fcnn"),
        load_checkpoint(root / "run1" / "motion.fcnn"),
        load_checkpoint(root / "run1" / "structure.fcnn"), seed + 60);
    save_checkpoint(mbn.branches[0], root / "before_motion.fcnn");
    set_branch_frozen(mbn, 0, true);   // appearance fixed
    set_branch_frozen(mbn, 1, false);  // motion fine-tunes
    set_branch_frozen(mbn, 2, true);   // structure not yet added
    TrainConfig cfg;
    cfg.seed = seed + 61;
    cfg.iterations = 5;
    cfg.batch_size = 2;
    fused_train(mbn, train, cfg, nullptr, "motion");
    save_checkpoint(mbn.branches[0], root / "after_motion.fcnn");
    const bool frozen_ok = slurp(root / "before_motion.fcnn") ==
                           slurp(root / "after_motion.fcnn");
    report(10, "appearance checkpoint byte-identical across motion stage",
           frozen_ok);
  }
  fs::remove_all(root);
}

}  // namespace

int main() {
  std::cout << "acceptance run, " << 10 << " criteria\n";
  criterion1_fc_equivalence();
  criterion2_gradient_check();
  criterion3_receptive_field();
  criterion4_patch_scan();
  criterion5_translation_equivariance();
  criterion6_loss_arithmetic();
  criterion7_roc_auc();
  criteria_8_9_10();
  std::cout << (g_failures == 0 ? "all criteria passed"
                                : std::to_string(g_failures) +
                                      " criteria failed")
            << "\n";
  return g_failures == 0 ? 0 : 1;
}
