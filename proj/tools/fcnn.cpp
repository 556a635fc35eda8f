// Command-line front end: dataset generation, training, inference,
// evaluation, benchmarking, and receptive-field reports.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fcnn/evalbench.hpp"
#include "fcnn/fusion.hpp"
#include "fcnn/image_io.hpp"
#include "fcnn/netspec.hpp"
#include "fcnn/network.hpp"
#include "fcnn/scenedata.hpp"
#include "fcnn/training.hpp"

namespace fs = std::filesystem;
using namespace fcnn;

namespace {

int thread_cap() {
  // the compute paths are single-threaded; the env var is validated and
  // honored as an upper bound so callers can rely on the contract
  const char* env = std::getenv("FCNN_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  if (n < 1) throw std::runtime_error("FCNN_THREADS must be a positive integer");
  return std::min(n, 1);
}

struct TrainFlags {
  std::string manifest;
  std::string out;
  std::string spec = std::string(kDefaultSpec);
  std::string cue;
  std::string scheme;
  std::vector<std::string> checkpoints;
  bool average = false;
  bool deterministic = false;
  uint64_t seed = 1;
  TrainConfig cfg;
};

int cue_index(const std::string& name) {
  for (int i = 0; i < 3; ++i)
    if (name == kCueNames[i]) return i;
  throw std::runtime_error("unknown cue '" + name +
                           "' (expected appearance, motion or structure)");
}

/// Training crops for one cue (or all three concatenated when cue < 0).
std::vector<Sample> cue_samples(const SceneManifest& m, const fs::path& dir,
                                int cue, const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dull);
  std::vector<Sample> samples;
  for (const ClipEntry& entry : m.clips) {
    if (entry.split != "train") continue;
    const Clip clip = load_clip(m, entry, dir);
    const CueChannels cues = extract_cues(clip);
    const Tensor in =
        cue >= 0 ? cues.cue(cue)
                 : concat_channels({cues.appearance, cues.motion,
                                    cues.structure});
    for (Sample& s : augment(in, clip.mask, cfg, rng))
      samples.push_back(std::move(s));
  }
  if (samples.empty())
    throw std::runtime_error("no train clips in manifest");
  return samples;
}

/// Identically-cropped multi-cue training samples.
std::vector<FusionSample> fusion_samples(const SceneManifest& m,
                                         const fs::path& dir,
                                         const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dull);
  std::vector<FusionSample> samples;
  const int cs = cfg.crop_size;
  for (const ClipEntry& entry : m.clips) {
    if (entry.split != "train") continue;
    const Clip clip = load_clip(m, entry, dir);
    const CueChannels cues = extract_cues(clip);
    const int max_y = (clip.mask.height() - cs) / 4;
    const int max_x = (clip.mask.width() - cs) / 4;
    if (max_y < 0 || max_x < 0)
      throw std::runtime_error("clip smaller than crop size");
    for (int i = 0; i < cfg.crops_per_frame; ++i) {
      const int y0 = 4 * static_cast<int>(rng() % (max_y + 1));
      const int x0 = 4 * static_cast<int>(rng() % (max_x + 1));
      const bool flip = uniform_unit(rng) < cfg.flip_probability;
      auto take = [&](const Tensor& t) {
        Tensor c = crop(t, y0, x0, cs, cs);
        return flip ? flip_horizontal(c) : c;
      };
      samples.push_back({take(cues.appearance), take(cues.motion),
                         take(cues.structure),
                         pool_labels(take(clip.mask))});
    }
  }
  if (samples.empty())
    throw std::runtime_error("no train clips in manifest");
  return samples;
}

int cmd_train(const TrainFlags& f) {
  if (f.cue.empty() == f.scheme.empty())
    throw std::runtime_error("train: pass exactly one of --cue or --scheme");
  const SceneManifest m = load_manifest(f.manifest);
  const fs::path data_dir = fs::path(f.manifest).parent_path();
  fs::create_directories(f.out);
  TrainConfig cfg = f.cfg;
  cfg.seed = f.seed;

  if (!f.cue.empty() || f.scheme == "input") {
    const bool input_fusion = f.cue.empty();
    const std::string name = input_fusion ? "input" : f.cue;
    const int channels = input_fusion ? 3 : 1;
    const auto data =
        cue_samples(m, data_dir, input_fusion ? -1 : cue_index(f.cue), cfg);
    std::ofstream log(fs::path(f.out) / (name + "_loss.csv"));
    log << "# seed=" << f.seed << "\niter,stage,loss\n";
    const Network net =
        layerwise_pretrain(parse_spec(f.spec, channels), data, cfg, &log);
    save_checkpoint(net, fs::path(f.out) / (name + ".fcnn"));
    std::cout << "wrote " << (fs::path(f.out) / (name + ".fcnn")).string()
              << "\n";
    return 0;
  }

  // feature / decision fusion over pre-trained cue branches
  if (f.checkpoints.size() != 3)
    throw std::runtime_error(
        "train --scheme " + f.scheme +
        ": pass three --checkpoint files (appearance, motion, structure)");
  Network app = load_checkpoint(f.checkpoints[0]);
  Network mot = load_checkpoint(f.checkpoints[1]);
  Network str = load_checkpoint(f.checkpoints[2]);
  MultiBranchNetwork mbn =
      f.scheme == "feature"
          ? build_feature_fusion(std::move(app), std::move(mot),
                                 std::move(str), f.seed)
          : build_decision_fusion(std::move(app), std::move(mot),
                                  std::move(str), f.seed, f.average);
  const auto data = fusion_samples(m, data_dir, cfg);
  std::ofstream log(fs::path(f.out) / (f.scheme + "_loss.csv"));
  log << "# seed=" << f.seed << "\niter,stage,loss\n";
  if (!(f.scheme == "decision" && f.average))
    multistage_train(mbn, data, cfg, &log);
  save_multibranch(mbn, f.out, f.scheme);
  std::cout << "wrote " << (fs::path(f.out) / (f.scheme + ".manifest.json")).string()
            << "\n";
  return 0;
}

/// Loads either a single-network checkpoint or a multi-branch model and
/// returns a cue-channels -> probability-map predictor.
struct Model {
  bool multi = false;
  Network net;
  MultiBranchNetwork mbn;
  int cue = 0;

  Tensor predict(const CueChannels& c) const {
    if (multi)
      return fused_forward(mbn, c.appearance, c.motion, c.structure);
    if (net.spec.input_channels == 3)
      return forward(net, concat_channels({c.appearance, c.motion,
                                           c.structure}));
    return forward(net, c.cue(cue));
  }
};

Model load_model(const std::string& checkpoint, const std::string& model,
                 const std::string& cue) {
  if (checkpoint.empty() == model.empty())
    throw std::runtime_error("pass exactly one of --checkpoint or --model");
  Model mdl;
  if (!checkpoint.empty()) {
    mdl.net = load_checkpoint(checkpoint);
    if (!cue.empty()) mdl.cue = cue_index(cue);
  } else {
    const fs::path p(model);
    mdl.multi = true;
    mdl.mbn = load_multibranch(p.parent_path(), p.filename().string());
  }
  return mdl;
}

int cmd_infer(const std::string& manifest, int clip_index,
              const std::string& checkpoint, const std::string& model,
              const std::string& cue, const std::string& out,
              double threshold, uint64_t seed) {
  const SceneManifest m = load_manifest(manifest);
  if (clip_index < 0 || clip_index >= static_cast<int>(m.clips.size()))
    throw std::runtime_error("--clip out of range (manifest has " +
                             std::to_string(m.clips.size()) + " clips)");
  const Model mdl = load_model(checkpoint, model, cue);
  const Clip clip =
      load_clip(m, m.clips[clip_index], fs::path(manifest).parent_path());
  if (m.height % 4 != 0 || m.width % 4 != 0)
    throw std::runtime_error(
        "input size must be divisible by the output stride 4");
  const CueChannels cues = extract_cues(clip);

  const auto t0 = std::chrono::steady_clock::now();
  const Tensor pred = mdl.predict(cues);
  const auto t1 = std::chrono::steady_clock::now();

  fs::create_directories(out);
  const std::string tag = "seed=" + std::to_string(seed);
  write_pgm(pred, fs::path(out) / "probability.pgm", tag);
  write_overlay_ppm(cues.appearance, upsample_prediction(pred, 4),
                    fs::path(out) / "overlay.ppm", threshold, tag);
  std::cout << "frame " << m.height << "x" << m.width << " -> "
            << pred.height() << "x" << pred.width() << " in "
            << std::chrono::duration<double, std::milli>(t1 - t0).count()
            << " ms\n";
  return 0;
}

int cmd_eval(const std::string& manifest, const std::string& checkpoint,
             const std::string& model, const std::string& cue,
             const std::string& baseline, const std::string& out,
             uint64_t seed) {
  const SceneManifest m = load_manifest(manifest);
  const fs::path dir = fs::path(manifest).parent_path();
  EvalResult res;
  if (!baseline.empty()) {
    if (baseline != "intensity")
      throw std::runtime_error("unknown baseline '" + baseline + "'");
    res = evaluate(m, dir, intensity_baseline);
  } else {
    const Model mdl = load_model(checkpoint, model, cue);
    res = evaluate(m, dir,
                   [&](const CueChannels& c) { return mdl.predict(c); });
  }
  fs::create_directories(out);
  {
    std::ofstream os(fs::path(out) / "roc.csv");
    os << "# seed=" << seed << "\nfpr,tpr\n";
    for (const auto& [fpr, tpr] : res.pooled_curve.points)
      os << fpr << "," << tpr << "\n";
  }
  {
    nlohmann::json j;
    j["seed"] = seed;
    j["pooled_auc"] = res.pooled_auc;
    j["per_scene_auc"] = res.per_scene_auc;
    std::ofstream os(fs::path(out) / "auc.json");
    os << j.dump(2) << "\n";
  }
  std::cout << "pooled_auc " << res.pooled_auc << "\n";
  return 0;
}

int cmd_bench(const std::string& spec, const std::string& sizes_arg, int reps,
              int patch, const std::string& out, uint64_t seed) {
  const NetworkSpec ns = parse_spec(spec, 1);
  const GeometryReport geo = receptive_field(ns);
  std::vector<std::pair<int, int>> sizes;
  std::stringstream ss(sizes_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const size_t x = tok.find('x');
    if (x == std::string::npos)
      throw std::runtime_error("--sizes expects HxW entries, got '" + tok +
                               "'");
    sizes.emplace_back(std::stoi(tok.substr(0, x)),
                       std::stoi(tok.substr(x + 1)));
  }
  if (sizes.empty()) throw std::runtime_error("--sizes is empty");
  const Network net = init_network(ns, seed);
  const BenchmarkReport report =
      benchmark(net, sizes, reps, patch, geo.output_stride, seed);
  const std::string csv = "# seed=" + std::to_string(seed) + "\n" +
                          benchmark_csv(report);
  if (out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? "."
                               : fs::path(out).parent_path());
    std::ofstream os(out);
    os << csv;
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_rf(const std::string& spec) {
  const NetworkSpec ns = parse_spec(spec, 1);
  const GeometryReport geo = receptive_field(ns);
  std::cout << "layer,kind,receptive_field,jump\n";
  for (size_t i = 0; i < geo.per_layer.size(); ++i) {
    const LayerSpec& l = ns.layers[i];
    std::string kind;
    switch (l.kind) {
      case LayerKind::Conv:
        kind = "Conv(" + std::to_string(l.out_channels) + "," +
               std::to_string(l.kernel) + "," + std::to_string(l.stride) + ")";
        break;
      case LayerKind::Pool:
        kind = std::string("Pool(") +
               (l.pool_type == PoolType::Max ? "MAX" : "AVE") + "," +
               std::to_string(l.kernel) + "," + std::to_string(l.stride) + ")";
        break;
      case LayerKind::ReLU: kind = "ReLU"; break;
      case LayerKind::Sig: kind = "Sig"; break;
    }
    std::cout << i << "," << kind << "," << geo.per_layer[i].receptive_field
              << "," << geo.per_layer[i].jump << "\n";
  }
  std::cout << "total R=" << geo.receptive_field
            << " stride=" << geo.output_stride << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fully convolutional crowd segmentation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out;
  int gen_scenes = 10, gen_clips = 2, gen_h = 96, gen_w = 96, gen_frames = 8;
  double gen_split = 0.8;
  uint64_t gen_seed = 1;
  bool gen_det = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--scenes", gen_scenes)->check(CLI::PositiveNumber);
  gen->add_option("--clips", gen_clips)->check(CLI::PositiveNumber);
  gen->add_option("--split", gen_split, "train fraction of scenes");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--height", gen_h);
  gen->add_option("--width", gen_w);
  gen->add_option("--frames", gen_frames);
  gen->add_flag("--deterministic", gen_det);

  // train
  auto* tr = app.add_subcommand("train", "Train a cue branch or fused model");
  TrainFlags tf;
  tr->add_option("--manifest", tf.manifest, "dataset manifest.json")
      ->required();
  tr->add_option("--out", tf.out, "output directory")->required();
  tr->add_option("--spec", tf.spec, "architecture string");
  tr->add_option("--cue", tf.cue)
      ->check(CLI::IsMember({"appearance", "motion", "structure"}));
  tr->add_option("--scheme", tf.scheme)
      ->check(CLI::IsMember({"input", "feature", "decision"}));
  tr->add_option("--checkpoint", tf.checkpoints,
                 "pre-trained branch checkpoints (three, in cue order)");
  tr->add_flag("--average", tf.average, "decision fusion without a head");
  tr->add_flag("--deterministic", tf.deterministic);
  tr->add_option("--seed", tf.seed);
  tr->add_option("--lr", tf.cfg.learning_rate);
  tr->add_option("--momentum", tf.cfg.momentum);
  tr->add_option("--iters", tf.cfg.iterations);
  tr->add_option("--batch", tf.cfg.batch_size);
  tr->add_option("--crop", tf.cfg.crop_size);
  tr->add_option("--crops-per-frame", tf.cfg.crops_per_frame);

  // infer
  auto* in = app.add_subcommand("infer", "Segment one clip's label frame");
  std::string in_manifest, in_ckpt, in_model, in_cue, in_out;
  int in_clip = 0;
  double in_threshold = 0.5;
  uint64_t in_seed = 1;
  in->add_option("--manifest", in_manifest)->required();
  in->add_option("--clip", in_clip, "clip index in the manifest");
  in->add_option("--checkpoint", in_ckpt);
  in->add_option("--model", in_model, "multi-branch model as DIR/NAME");
  in->add_option("--cue", in_cue);
  in->add_option("--out", in_out)->required();
  in->add_option("--threshold", in_threshold);
  in->add_option("--seed", in_seed);

  // eval
  auto* ev = app.add_subcommand("eval", "ROC/AUC on the test split");
  std::string ev_manifest, ev_ckpt, ev_model, ev_cue, ev_baseline, ev_out;
  uint64_t ev_seed = 1;
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--checkpoint", ev_ckpt);
  ev->add_option("--model", ev_model);
  ev->add_option("--cue", ev_cue);
  ev->add_option("--baseline", ev_baseline, "'intensity'");
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--seed", ev_seed);

  // bench
  auto* be = app.add_subcommand("bench",
                                "Full-frame vs patch-scan timing");
  std::string be_spec = std::string(kDefaultSpec), be_sizes = "112x112",
              be_out;
  int be_reps = 3, be_patch = 60;
  uint64_t be_seed = 42;
  be->add_option("--spec", be_spec);
  be->add_option("--sizes", be_sizes, "comma-separated HxW list");
  be->add_option("--reps", be_reps)->check(CLI::PositiveNumber);
  be->add_option("--patch", be_patch);
  be->add_option("--out", be_out, "CSV path (stdout when omitted)");
  be->add_option("--seed", be_seed);

  // rf
  auto* rf = app.add_subcommand("rf", "Receptive-field geometry of a spec");
  std::string rf_spec = std::string(kDefaultSpec);
  rf->add_option("--spec", rf_spec);

  CLI11_PARSE(app, argc, argv);

  try {
    thread_cap();
    if (gen->parsed()) {
      const SceneManifest m =
          build_dataset(gen_scenes, gen_clips, gen_split, gen_seed, gen_out,
                        gen_h, gen_w, gen_frames);
      int n_train = 0, n_test = 0;
      std::set<std::string> train_scenes, test_scenes;
      for (const ClipEntry& c : m.clips) {
        if (c.split == "train") { ++n_train; train_scenes.insert(c.scene_id); }
        else { ++n_test; test_scenes.insert(c.scene_id); }
      }
      std::cout << "scenes " << train_scenes.size() << " train / "
                << test_scenes.size() << " test; clips " << n_train
                << " train / " << n_test << " test\n";
      return 0;
    }
    if (tr->parsed()) return cmd_train(tf);
    if (in->parsed())
      return cmd_infer(in_manifest, in_clip, in_ckpt, in_model, in_cue,
                       in_out, in_threshold, in_seed);
    if (ev->parsed())
      return cmd_eval(ev_manifest, ev_ckpt, ev_model, ev_cue, ev_baseline,
                      ev_out, ev_seed);
    if (be->parsed())
      return cmd_bench(be_spec, be_sizes, be_reps, be_patch, be_out, be_seed);
    if (rf->parsed()) return cmd_rf(rf_spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
