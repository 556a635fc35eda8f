#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcnn/netspec.hpp"
#include "fcnn/network.hpp"
#include "fcnn/scenedata.hpp"
#include "fcnn/tensor.hpp"

namespace fcnn {

/// Nearest-neighbor replication by an integer factor.
inline Tensor upsample_prediction(const Tensor& pred, int factor = 4) {
  if (factor < 1)
    throw std::invalid_argument("upsample_prediction: factor must be >= 1");
  Tensor out(pred.channels(), pred.height() * factor, pred.width() * factor);
  for (int c = 0; c < pred.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(c, y, x) = pred.at(c, y / factor, x / factor);
  return out;
}

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (FPR, TPR)
  double auc = 0.0;
};

/// ROC with one point per distinct score (ties grouped), trapezoidal AUC.
inline RocCurve roc_auc(const std::vector<double>& scores,
                        const std::vector<char>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_auc: scores/labels length mismatch");
  size_t n_pos = 0;
  for (char l : labels) n_pos += l ? 1 : 0;
  const size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("roc_auc: both classes must be present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.emplace_back(0.0, 0.0);
  double tp = 0, fp = 0, auc2 = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    double dtp = 0, dfp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++dtp; else ++dfp;
      ++j;
    }
    // trapezoid over the tie group counts tied pairs half
    auc2 += dfp * (2.0 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.emplace_back(fp / n_neg, tp / n_pos);
    i = j;
  }
  curve.auc = auc2 / (2.0 * n_pos * n_neg);
  return curve;
}

/// The slow reference regime: for each output cell, crop the receptive
/// patch from a zero-padded image, run a full forward, keep the center
/// value. `patch` must be divisible by the output stride. Restricting to
/// a cell range via y/x bounds skips the rest of the grid.
inline Tensor patch_scan(const Network& net, const Tensor& image, int patch,
                         int stride, int y_begin = 0, int y_end = -1,
                         int x_begin = 0, int x_end = -1) {
  if (patch % stride != 0)
    throw std::invalid_argument("patch_scan: patch not divisible by stride");
  const int out_h = image.height() / stride;
  const int out_w = image.width() / stride;
  if (y_end < 0) y_end = out_h;
  if (x_end < 0) x_end = out_w;
  const int c = image.channels();
  // center the patch on the output cell's stride x stride input block
  const int offset = (patch - stride) / 2;
  const int center_cell = offset / stride;

  Tensor out(1, out_h, out_w);
  Tensor patch_img(c, patch, patch);
  for (int oy = y_begin; oy < y_end; ++oy) {
    for (int ox = x_begin; ox < x_end; ++ox) {
      const int iy0 = oy * stride - offset;
      const int ix0 = ox * stride - offset;
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) {
            const int iy = iy0 + y, ix = ix0 + x;
            patch_img.at(ch, y, x) =
                (iy >= 0 && iy < image.height() && ix >= 0 &&
                 ix < image.width())
                    ? image.at(ch, iy, ix)
                    : 0.0;
          }
      const Tensor pred = forward(net, patch_img);
      out.at(0, oy, ox) = pred.at(0, center_cell, center_cell);
    }
  }
  return out;
}

struct BenchmarkRow {
  int height = 0, width = 0;
  std::string mode;  // "full" or "scan"
  double median_ms = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::map<std::pair<int, int>, double> speedup;       // scan/full per size
  std::map<std::pair<int, int>, double> discrepancy;   // max interior |diff|
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

/// Interior cell range for patch-equivalence: cells whose patch window
/// lies fully inside the image.
inline std::pair<int, int> interior_range(int extent, int patch, int stride) {
  const int offset = (patch - stride) / 2;
  const int first = (offset + stride - 1) / stride;
  const int last = (extent - (patch - offset)) / stride + 1;
  return {first, last};
}

inline BenchmarkReport benchmark(const Network& net,
                                 const std::vector<std::pair<int, int>>& sizes,
                                 int repetitions, int patch, int stride,
                                 uint64_t seed = 42) {
  BenchmarkReport report;
  std::mt19937_64 rng(seed);
  for (const auto& [h, w] : sizes) {
    Tensor image(net.spec.input_channels, h, w);
    for (double& v : image.values()) v = uniform_unit(rng);

    std::vector<double> full_ms, scan_ms;
    Tensor full_out, scan_out;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      full_out = forward(net, image);
      const auto t1 = std::chrono::steady_clock::now();
      scan_out = patch_scan(net, image, patch, stride);
      const auto t2 = std::chrono::steady_clock::now();
      full_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
      scan_ms.push_back(
          std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    report.rows.push_back({h, w, "full", median(full_ms)});
    report.rows.push_back({h, w, "scan", median(scan_ms)});
    report.speedup[{h, w}] = median(scan_ms) / median(full_ms);

    const auto [fy, ly] = interior_range(h, patch, stride);
    const auto [fx, lx] = interior_range(w, patch, stride);
    double max_diff = 0.0;
    for (int y = fy; y < ly; ++y)
      for (int x = fx; x < lx; ++x)
        max_diff = std::max(
            max_diff, std::abs(full_out.at(0, y, x) - scan_out.at(0, y, x)));
    report.discrepancy[{h, w}] = max_diff;
  }
  return report;
}

inline std::string benchmark_csv(const BenchmarkReport& report) {
  std::string csv = "height,width,mode,median_ms,speedup,max_interior_diff\n";
  for (const BenchmarkRow& row : report.rows) {
    csv += std::to_string(row.height) + "," + std::to_string(row.width) + "," +
           row.mode + "," + std::to_string(row.median_ms) + "," +
           std::to_string(report.speedup.at({row.height, row.width})) + "," +
           std::to_string(report.discrepancy.at({row.height, row.width})) +
           "\n";
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct EvalResult {
  double pooled_auc = 0.0;
  std::map<std::string, double> per_scene_auc;
  RocCurve pooled_curve;
};

/// Scores every test-split pixel with the given predictor (cue channels ->
/// probability map at stride 4, upsampled here) against the pixel masks.
template <typename Predictor>
EvalResult evaluate(const SceneManifest& manifest,
                    const std::filesystem::path& dir, Predictor&& predict) {
  std::vector<double> all_scores;
  std::vector<char> all_labels;
  std::map<std::string, std::pair<std::vector<double>, std::vector<char>>>
      per_scene;

  bool any = false;
  for (const ClipEntry& entry : manifest.clips) {
    if (entry.split != "test") continue;
    any = true;
    const Clip clip = load_clip(manifest, entry, dir);
    const CueChannels cues = extract_cues(clip);
    const Tensor pred = predict(cues);
    const Tensor up = upsample_prediction(pred, clip.mask.height() /
                                                    pred.height());
    if (up.height() != clip.mask.height() || up.width() != clip.mask.width())
      throw std::runtime_error("evaluate: prediction/mask size mismatch");
    auto& scene = per_scene[entry.scene_id];
    for (size_t i = 0; i < up.size(); ++i) {
      const double s = up.values()[i];
      const char l = clip.mask.values()[i] > 0.5 ? 1 : 0;
      all_scores.push_back(s);
      all_labels.push_back(l);
      scene.first.push_back(s);
      scene.second.push_back(l);
    }
  }
  if (!any) throw std::invalid_argument("evaluate: manifest has no test clips");

  EvalResult result;
  result.pooled_curve = roc_auc(all_scores, all_labels);
  result.pooled_auc = result.pooled_curve.auc;
  for (const auto& [scene, data] : per_scene)
    result.per_scene_auc[scene] = roc_auc(data.first, data.second).auc;
  return result;
}

/// Trivial baseline for AUC ordering checks: pixel intensity as the score.
inline Tensor intensity_baseline(const CueChannels& cues) {
  return avgpool_forward(avgpool_forward(cues.appearance, 2, 2), 2, 2);
}

}  // namespace fcnn
