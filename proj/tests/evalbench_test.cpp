#include "fcnn/evalbench.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_util.hpp"

using namespace fcnn;
using fcnn::test::random_tensor;

namespace {

/// O(P*N) probability that a random positive outranks a random negative,
/// ties counted half — the definition the fast AUC must match.
double pairwise_auc(const std::vector<double>& scores,
                    const std::vector<char>& labels) {
  double wins = 0.0;
  size_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++n_pos;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  for (char l : labels) n_neg += l ? 0 : 1;
  return wins / (static_cast<double>(n_pos) * n_neg);
}

constexpr const char* kTinySpecText =
    "Conv(4,3,1) - ReLU - Pool(MAX,2,2) - Conv(6,3,1) - ReLU - "
    "Pool(MAX,2,2) - Conv(8,3,1) - ReLU - Conv(4,3,1) - ReLU - "
    "Conv(1,1,1) - Sig";

}  // namespace

TEST(UpsamplePrediction, ReplicatesEachCellIntoBlocks) {
  Tensor p(1, 2, 2);
  p.at(0, 0, 0) = 0.1;
  p.at(0, 0, 1) = 0.2;
  p.at(0, 1, 0) = 0.3;
  p.at(0, 1, 1) = 0.4;
  const Tensor up = upsample_prediction(p, 3);
  EXPECT_EQ(up.height(), 6);
  EXPECT_EQ(up.width(), 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      EXPECT_EQ(up.at(0, y, x), p.at(0, y / 3, x / 3));
  EXPECT_THROW(upsample_prediction(p, 0), std::invalid_argument);
}

TEST(UpsamplePrediction, AveragePoolingInvertsIt) {
  std::mt19937_64 rng(1);
  const Tensor p = random_tensor(1, 5, 7, rng, 0, 1);
  const Tensor rt = avgpool_forward(upsample_prediction(p, 2), 2, 2);
  ASSERT_TRUE(rt.same_shape(p));
  for (size_t i = 0; i < p.size(); ++i)
    EXPECT_NEAR(rt.values()[i], p.values()[i], 1e-15);
}

TEST(RocAuc, PerfectAndRandomSeparationsAreExact) {
  const RocCurve perfect =
      roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  EXPECT_EQ(perfect.auc, 1.0);
  const RocCurve inverted =
      roc_auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0});
  EXPECT_EQ(inverted.auc, 0.0);
  // all scores tied: chance level exactly
  const RocCurve tied = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
  EXPECT_EQ(tied.auc, 0.5);
}

TEST(RocAuc, MatchesPairwiseDefinitionOnRandomData) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> scores;
    std::vector<char> labels;
    for (int i = 0; i < 1000; ++i) {
      // quantized scores force plenty of ties
      scores.push_back(std::floor(uniform_unit(rng) * 20.0) / 20.0);
      labels.push_back(uniform_unit(rng) < 0.4 ? 1 : 0);
    }
    const RocCurve c = roc_auc(scores, labels);
    EXPECT_NEAR(c.auc, pairwise_auc(scores, labels), 1e-12);
  }
}

TEST(RocAuc, CurveEndsAtUnitCorner) {
  std::mt19937_64 rng(9);
  std::vector<double> scores;
  std::vector<char> labels;
  for (int i = 0; i < 50; ++i) {
    scores.push_back(uniform_unit(rng));
    labels.push_back(i % 3 == 0 ? 1 : 0);
  }
  const RocCurve c = roc_auc(scores, labels);
  EXPECT_EQ(c.points.front(), (std::pair<double, double>{0.0, 0.0}));
  EXPECT_EQ(c.points.back(), (std::pair<double, double>{1.0, 1.0}));
  // monotone in both axes
  for (size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].first, c.points[i - 1].first);
    EXPECT_GE(c.points[i].second, c.points[i - 1].second);
  }
}

TEST(RocAuc, RejectsDegenerateInput) {
  EXPECT_THROW(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {0, 0}), std::invalid_argument);
  EXPECT_THROW(roc_auc({0.1}, {1, 0}), std::invalid_argument);
}

TEST(PatchScan, MatchesFullForwardOnInteriorCells) {
  const Network net = init_network(parse_spec(kTinySpecText, 1), 5);
  std::mt19937_64 rng(11);
  const Tensor image = random_tensor(1, 48, 48, rng, 0, 1);
  const Tensor full = forward(net, image);

  // receptive field 26 reaching 11 left, stride 4: tightest aligned patch is 28
  const int patch = 28, stride = 4;
  const auto [fy, ly] = interior_range(48, patch, stride);
  const Tensor scan = patch_scan(net, image, patch, stride, fy, ly, fy, ly);
  ASSERT_GT(ly, fy);
  for (int y = fy; y < ly; ++y)
    for (int x = fy; x < ly; ++x)
      EXPECT_NEAR(scan.at(0, y, x), full.at(0, y, x), 1e-9)
          << "cell " << y << "," << x;
}

TEST(PatchScan, OutputShapeAndBounds) {
  const Network net = init_network(parse_spec(kTinySpecText, 1), 6);
  std::mt19937_64 rng(12);
  const Tensor image = random_tensor(1, 48, 48, rng, 0, 1);
  const Tensor scan = patch_scan(net, image, 28, 4, 2, 4, 2, 4);
  EXPECT_EQ(scan.height(), 12);
  EXPECT_EQ(scan.width(), 12);
  EXPECT_NE(scan.at(0, 3, 3), 0.0);  // scanned region is populated
  EXPECT_EQ(scan.at(0, 0, 0), 0.0);  // outside the requested range
  EXPECT_THROW(patch_scan(net, image, 30, 4), std::invalid_argument);
}

TEST(InteriorRange, WindowsStayInsideTheImage) {
  for (int extent : {48, 64, 96}) {
    for (int patch : {32, 60}) {
      const int stride = 4;
      const auto [first, last] = interior_range(extent, patch, stride);
      const int offset = (patch - stride) / 2;
      EXPECT_GE(first * stride - offset, 0);
      EXPECT_LE((last - 1) * stride - offset + patch, extent);
      // one step outside violates the bounds
      EXPECT_LT((first - 1) * stride - offset, 0);
      EXPECT_GT(last * stride - offset + patch, extent);
    }
  }
}

TEST(Benchmark, ReportsTimingsSpeedupAndTinyDiscrepancy) {
  const Network net = init_network(parse_spec(kTinySpecText, 1), 7);
  const BenchmarkReport report = benchmark(net, {{48, 48}}, 1, 28, 4);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].mode, "full");
  EXPECT_EQ(report.rows[1].mode, "scan");
  EXPECT_GT(report.rows[0].median_ms, 0.0);
  EXPECT_GT(report.speedup.at({48, 48}), 1.0);
  EXPECT_LT(report.discrepancy.at({48, 48}), 1e-9);
  const std::string csv = benchmark_csv(report);
  EXPECT_NE(csv.find("height,width,mode,median_ms,speedup,max_interior_diff"),
            std::string::npos);
  EXPECT_NE(csv.find("48,48,scan,"), std::string::npos);
}

TEST(Evaluate, IntensityBaselineBeatsCoinFlipOnBrightCrowds) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "fcnn_eval_ds";
  std::filesystem::remove_all(dir);
  const SceneManifest m = build_dataset(4, 2, 0.5, 21, dir, 64, 64, 3);
  const EvalResult res = evaluate(m, dir, intensity_baseline);
  EXPECT_GT(res.pooled_auc, 0.5);
  EXPECT_FALSE(res.per_scene_auc.empty());
  for (const auto& [scene, auc] : res.per_scene_auc) {
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
  std::filesystem::remove_all(dir);
}

TEST(Evaluate, ConstantPredictorScoresChanceLevel) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "fcnn_eval_const";
  std::filesystem::remove_all(dir);
  const SceneManifest m = build_dataset(2, 1, 0.5, 22, dir, 64, 64, 3);
  const EvalResult res = evaluate(m, dir, [](const CueChannels& c) {
    Tensor p(1, c.appearance.height() / 4, c.appearance.width() / 4);
    for (double& v : p.values()) v = 0.5;
    return p;
  });
  EXPECT_EQ(res.pooled_auc, 0.5);
  std::filesystem::remove_all(dir);
}
