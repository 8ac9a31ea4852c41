#include "qarerank/gbdt.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "qarerank/error.h"
#include "qarerank/random.h"
#include "test_util.h"

namespace qarerank {
namespace {

using testing::TempDir;

FeatureMatrix make_matrix(std::size_t rows, std::size_t cols) {
  FeatureMatrix m;
  for (std::size_t j = 0; j < cols; ++j) m.layout.push_back("f" + std::to_string(j));
  m.rows = rows;
  m.values.assign(rows * cols, 0.0);
  return m;
}

// Gaussian blobs, one per class, in `cols` dimensions.
FeatureMatrix blobs(std::size_t rows, std::size_t cols, int classes, double spread, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix m = make_matrix(rows, cols);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(classes), std::vector<double>(cols));
  for (auto& c : centers)
    for (double& v : c) v = rng.uniform(-2.0, 2.0);
  m.labels.emplace();
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
    m.labels->push_back(y);
    for (std::size_t j = 0; j < cols; ++j) m.values[i * cols + j] = centers[static_cast<std::size_t>(y)][j] + spread * rng.normal();
  }
  return m;
}

// Multi-class log-loss in extended precision, the finite-difference oracle.
long double oracle_loss(const std::vector<long double>& m, int label) {
  long double mx = m[0];
  for (long double v : m) mx = std::max(mx, v);
  long double z = 0.0L;
  for (long double v : m) z += std::exp(v - mx);
  return -(m[static_cast<std::size_t>(label)] - mx - std::log(z));
}

TEST(SoftmaxGradHessTest, HandExamples) {
  const std::vector<double> m = {std::log(0.7), std::log(0.3)};
  const GradHess gh = softmax_grad_hess(m, 0);
  EXPECT_NEAR(gh.grad[0], -0.3, 1e-12);
  EXPECT_NEAR(gh.grad[1], 0.3, 1e-12);
  EXPECT_NEAR(gh.hess[0], 0.21, 1e-12);
  EXPECT_NEAR(gh.hess[1], 0.21, 1e-12);

  const std::vector<double> uniform(4, 0.5);
  const GradHess u = softmax_grad_hess(uniform, 2);
  const std::vector<double> expected = {0.25, 0.25, -0.75, 0.25};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(u.grad[c], expected[c], 1e-15);
}

TEST(SoftmaxGradHessTest, GradientSumsToZeroAndHessianFloored) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> m(2 + rng.below(9));
    for (double& v : m) v = 5.0 * rng.normal();
    const GradHess gh = softmax_grad_hess(m, static_cast<int>(rng.below(m.size())));
    EXPECT_NEAR(std::accumulate(gh.grad.begin(), gh.grad.end(), 0.0), 0.0, 1e-12);
  }
  const std::vector<double> saturated = {0.0, 800.0};
  const GradHess gh = softmax_grad_hess(saturated, 1);
  EXPECT_EQ(gh.hess[0], kHessianFloor);
  EXPECT_EQ(gh.hess[1], kHessianFloor);
}

TEST(SoftmaxGradHessTest, MatchesCentralFiniteDifferences) {
  Rng rng(2);
  const long double h = 1e-5L;
  for (int t = 0; t < 300; ++t) {
    const std::size_t classes = 2 + rng.below(9);
    std::vector<double> m(classes);
    for (double& v : m) v = rng.normal();
    const int label = static_cast<int>(rng.below(classes));
    const GradHess gh = softmax_grad_hess(m, label);

    std::vector<long double> base(m.begin(), m.end());
    const long double f0 = oracle_loss(base, label);
    for (std::size_t c = 0; c < classes; ++c) {
      auto up = base, down = base;
      up[c] += h;
      down[c] -= h;
      const long double fu = oracle_loss(up, label), fd = oracle_loss(down, label);
      const double fd_grad = static_cast<double>((fu - fd) / (2 * h));
      const double fd_hess = static_cast<double>((fu - 2 * f0 + fd) / (h * h));
      EXPECT_LT(std::abs(gh.grad[c] - fd_grad), 1e-4 * std::max(std::abs(fd_grad), 1e-8));
      EXPECT_LT(std::abs(gh.hess[c] - fd_hess), 1e-4 * std::abs(fd_hess));
    }
  }
}

TEST(FindBestSplitTest, MiddleSplitOfFourPoints) {
  FeatureMatrix x = make_matrix(4, 1);
  x.values = {0.0, 1.0, 2.0, 3.0};
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  const std::vector<double> g = {-1.0, -1.0, 1.0, 1.0};
  const std::vector<double> h(4, 1.0);
  const auto split = find_best_split(x, rows, g, h, TrainParams{});
  ASSERT_TRUE(split.has_value());
  EXPECT_EQ(split->feature, 0);
  EXPECT_EQ(split->threshold, 1.5);
  // 0.5 * (4/3 + 4/3 - 0/5)
  EXPECT_NEAR(split->gain, 4.0 / 3.0, 1e-12);
}

TEST(FindBestSplitTest, NoSplitCases) {
  FeatureMatrix x = make_matrix(4, 1);
  x.values = {0.0, 1.0, 2.0, 3.0};
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  const std::vector<double> same(4, 0.7);
  const std::vector<double> h(4, 1.0);
  EXPECT_FALSE(find_best_split(x, rows, same, h, TrainParams{}).has_value());

  FeatureMatrix twins = make_matrix(2, 1);
  twins.values = {5.0, 5.0};
  const std::vector<std::size_t> two = {0, 1};
  const std::vector<double> g2 = {-1.0, 1.0};
  const std::vector<double> h2 = {1.0, 1.0};
  EXPECT_FALSE(find_best_split(twins, two, g2, h2, TrainParams{}).has_value());

  // Both children would fall short of min_child_weight.
  TrainParams heavy;
  heavy.min_child_weight = 3.0;
  const std::vector<double> g4 = {-1.0, -1.0, 1.0, 1.0};
  EXPECT_FALSE(find_best_split(x, rows, g4, h, heavy).has_value());
}

TEST(FindBestSplitTest, TiesKeepLowestFeatureThenThreshold) {
  FeatureMatrix x = make_matrix(4, 2);
  // Feature 1 duplicates feature 0, so every gain appears twice.
  x.values = {0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  const std::vector<double> g = {-1.0, 1.0, -1.0, 1.0};
  const std::vector<double> h(4, 1.0);
  TrainParams p;
  p.reg_lambda = 0.0;
  p.min_child_weight = 0.0;
  const auto split = find_best_split(x, rows, g, h, p);
  ASSERT_TRUE(split.has_value());
  EXPECT_EQ(split->feature, 0);
  // Thresholds 0.5 and 2.5 give gain 0.5; 1.5 gives 0. The lower one wins.
  EXPECT_EQ(split->threshold, 0.5);
}

struct OracleBest {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  int count_near_best = 0;
};

// Exhaustive enumeration of every (feature, midpoint) pair.
double oracle_gain(const FeatureMatrix& x, const std::vector<std::size_t>& rows, const std::vector<double>& g,
                   const std::vector<double>& h, const TrainParams& p, std::size_t f, double thr, bool& admissible) {
  double gl = 0, hl = 0, gr = 0, hr = 0;
  for (std::size_t r : rows) {
    if (x.at(r, f) < thr) {
      gl += g[r];
      hl += h[r];
    } else {
      gr += g[r];
      hr += h[r];
    }
  }
  admissible = hl >= p.min_child_weight && hr >= p.min_child_weight && hl > 0 && hr > 0;
  auto term = [&](double gg, double hh) { return gg * gg / (hh + p.reg_lambda); };
  return 0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - p.gamma;
}

OracleBest exhaustive_split(const FeatureMatrix& x, const std::vector<std::size_t>& rows, const std::vector<double>& g,
                            const std::vector<double>& h, const TrainParams& p) {
  OracleBest best;
  std::vector<std::tuple<double, int, double>> all;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::vector<double> vals;
    for (std::size_t r : rows) vals.push_back(x.at(r, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      const double thr = 0.5 * (vals[i] + vals[i + 1]);
      bool ok = false;
      const double gain = oracle_gain(x, rows, g, h, p, f, thr, ok);
      if (ok && gain > 0.0) all.emplace_back(gain, static_cast<int>(f), thr);
    }
  }
  for (const auto& [gain, f, thr] : all) {
    if (gain > best.gain) best = {gain, f, thr, 0};
  }
  for (const auto& [gain, f, thr] : all) {
    if (std::abs(gain - best.gain) <= 1e-9) ++best.count_near_best;
  }
  return best;
}

TEST(FindBestSplitTest, AgreesWithExhaustiveEnumeration) {
  Rng rng(3);
  int checked = 0;
  for (std::size_t n = 2; n <= 12; ++n) {
    for (std::size_t f = 1; f <= 3; ++f) {
      for (int rep = 0; rep < 25; ++rep) {
        FeatureMatrix x = make_matrix(n, f);
        // Small integer grid so duplicate values are common.
        for (double& v : x.values) v = static_cast<double>(rng.below(6)) - 2.0;
        std::vector<double> g(n), h(n);
        for (std::size_t i = 0; i < n; ++i) {
          g[i] = rng.normal();
          h[i] = rng.uniform(0.05, 1.0);
        }
        TrainParams p;
        p.reg_lambda = rng.uniform(0.0, 2.0);
        p.min_child_weight = rng.uniform(0.0, 1.0);
        p.gamma = rng.below(2) ? 0.0 : rng.uniform(0.0, 0.3);
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), 0);

        const auto got = find_best_split(x, rows, g, h, p);
        const OracleBest want = exhaustive_split(x, rows, g, h, p);
        if (want.feature < 0) {
          EXPECT_FALSE(got.has_value()) << "n=" << n << " f=" << f << " rep=" << rep;
          continue;
        }
        ASSERT_TRUE(got.has_value()) << "n=" << n << " f=" << f << " rep=" << rep;
        EXPECT_NEAR(got->gain, want.gain, 1e-9);
        bool ok = false;
        EXPECT_NEAR(oracle_gain(x, rows, g, h, p, static_cast<std::size_t>(got->feature), got->threshold, ok),
                    want.gain, 1e-9);
        EXPECT_TRUE(ok);
        if (want.count_near_best == 1) {
          EXPECT_EQ(got->feature, want.feature);
          EXPECT_EQ(got->threshold, want.threshold);
        }
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 500);
}

TEST(TrainTest, SeparableOneDimensionalData) {
  Rng rng(4);
  FeatureMatrix m = make_matrix(100, 1);
  m.labels.emplace();
  for (std::size_t i = 0; i < 100; ++i) {
    m.values[i] = rng.uniform(-1.0, 1.0);
    m.labels->push_back(m.values[i] < 0.0 ? 0 : 1);
  }
  // Brute force: some single threshold separates the classes perfectly.
  bool separable = false;
  for (std::size_t i = 0; i < 100 && !separable; ++i) {
    const double thr = m.values[i];
    bool all_ok = true;
    for (std::size_t r = 0; r < 100; ++r) all_ok &= ((m.values[r] < thr) == ((*m.labels)[r] == 0));
    separable = all_ok;
  }
  ASSERT_TRUE(separable);

  TrainParams p;
  p.num_rounds = 10;
  p.num_classes = 2;
  const BoostedModel model = train(m, p);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(predict_class(model, m.row(i)), (*m.labels)[i]);
}

TEST(TrainTest, LogLossNeverIncreases) {
  for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
    const FeatureMatrix m = blobs(400, 5, 6, 1.0, seed);
    TrainParams p;
    p.num_rounds = 60;
    p.num_classes = 6;
    std::vector<double> losses;
    TrainOptions opt;
    opt.on_round = [&](int, double loss) { losses.push_back(loss); };
    const BoostedModel model = train(m, p, opt);
    ASSERT_EQ(losses.size(), 60u);
    EXPECT_LT(losses.front(), std::log(6.0));
    for (std::size_t r = 1; r < losses.size(); ++r) EXPECT_LE(losses[r], losses[r - 1]) << "round " << r;
    EXPECT_NEAR(log_loss(model, m), losses.back(), 1e-12);
  }
}

TEST(TrainTest, LearnsMultiClassBlobs) {
  const FeatureMatrix m = blobs(600, 4, 5, 0.3, 8);
  TrainParams p;
  p.num_rounds = 30;
  p.num_classes = 5;
  const BoostedModel model = train(m, p);
  int hits = 0;
  for (std::size_t i = 0; i < m.rows; ++i) hits += predict_class(model, m.row(i)) == (*m.labels)[i];
  EXPECT_GT(hits, 570);
  for (const auto& round : model.trees)
    for (const Tree& t : round) EXPECT_LE(t.depth(), p.max_depth);
}

TEST(TrainTest, RejectsInvalidInput) {
  FeatureMatrix m = blobs(20, 2, 2, 1.0, 9);
  TrainParams p;
  p.num_classes = 2;
  p.num_rounds = 0;
  EXPECT_THROW(train(m, p), InvalidArgument);
  p.num_rounds = 5;
  p.learning_rate = 0.0;
  EXPECT_THROW(train(m, p), InvalidArgument);
  p.learning_rate = 0.1;

  FeatureMatrix bad = m;
  (*bad.labels)[0] = 2;
  EXPECT_THROW(train(bad, p), InvalidArgument);

  FeatureMatrix single = m;
  std::fill(single.labels->begin(), single.labels->end(), 1);
  EXPECT_THROW(train(single, p), InvalidArgument);

  FeatureMatrix empty = make_matrix(0, 2);
  empty.labels.emplace();
  EXPECT_THROW(train(empty, p), InvalidArgument);

  FeatureMatrix unlabeled = m;
  unlabeled.labels.reset();
  EXPECT_THROW(train(unlabeled, p), InvalidArgument);
}

TEST(TrainTest, DeterministicAcrossRunsAndThreadCounts) {
  const FeatureMatrix m = blobs(300, 6, 4, 1.0, 10);
  TrainParams p;
  p.num_rounds = 20;
  p.num_classes = 4;
  p.subsample = 0.8;
  p.colsample = 0.7;
  p.seed = 1234;
  TrainOptions one, four;
  one.num_threads = 1;
  four.num_threads = 4;
  const std::string a = serialize_model(train(m, p, one));
  EXPECT_EQ(a, serialize_model(train(m, p, one)));
  EXPECT_EQ(a, serialize_model(train(m, p, four)));
  p.seed = 4321;
  EXPECT_NE(a, serialize_model(train(m, p, one)));
}

TEST(TrainTest, DoublingLearningRateDoublesFirstRoundLeaves) {
  const FeatureMatrix m = blobs(200, 3, 3, 1.0, 11);
  TrainParams p;
  p.num_rounds = 1;
  p.num_classes = 3;
  const BoostedModel slow = train(m, p);
  p.learning_rate = 0.2;
  const BoostedModel fast = train(m, p);
  for (std::size_t c = 0; c < 3; ++c) {
    const Tree& a = slow.trees[0][c];
    const Tree& b = fast.trees[0][c];
    ASSERT_EQ(a.feature, b.feature);
    ASSERT_EQ(a.threshold, b.threshold);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b.weight[i], 2.0 * a.weight[i]);
  }
}

TEST(PredictTest, UntrainedModelIsUniformAndPicksClassZero) {
  TrainParams p;
  p.num_classes = 4;
  const BoostedModel model = make_untrained_model(p, {"a", "b"});
  const std::vector<double> x = {1.0, -3.0};
  for (double v : predict_proba(model, x)) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_EQ(predict_class(model, x), 0);
}

TEST(PredictTest, ProbabilitiesNormaliseAndArgmaxMatches) {
  const FeatureMatrix m = blobs(200, 3, 4, 1.0, 12);
  TrainParams p;
  p.num_rounds = 10;
  p.num_classes = 4;
  const BoostedModel model = train(m, p);
  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    const std::vector<double> x = {4 * rng.normal(), 4 * rng.normal(), 4 * rng.normal()};
    const auto proba = predict_proba(model, x);
    EXPECT_NEAR(std::accumulate(proba.begin(), proba.end(), 0.0), 1.0, 1e-9);
    for (double v : proba) EXPECT_GT(v, 0.0);
    EXPECT_EQ(predict_class(model, x), std::max_element(proba.begin(), proba.end()) - proba.begin());
  }
}

TEST(PredictTest, LayoutMismatchIsRejected) {
  TrainParams p;
  p.num_classes = 2;
  const BoostedModel model = make_untrained_model(p, {"a", "b"});
  FeatureVector fv{{1.0, 2.0}, {"a", "c"}};
  EXPECT_THROW(predict_proba(model, fv), InvalidArgument);
  EXPECT_THROW(predict_class(model, fv), InvalidArgument);
  const std::vector<double> short_x = {1.0};
  EXPECT_THROW(predict_proba(model, short_x), InvalidArgument);
  fv.layout = {"a", "b"};
  EXPECT_EQ(predict_class(model, fv), 0);
}

TEST(ModelIoTest, RoundTripIsBitExact) {
  TempDir dir;
  const FeatureMatrix m = blobs(300, 4, 3, 1.0, 14);
  TrainParams p;
  p.num_rounds = 15;
  p.num_classes = 3;
  p.seed = 77;
  BoostedModel model = train(m, p);
  model.attributes["note"] = "x";
  save_model(model, dir / "model.json");
  const BoostedModel back = load_model(dir / "model.json");
  EXPECT_EQ(back, model);
  Rng rng(15);
  double max_diff = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(4);
    for (double& v : x) v = 3 * rng.normal();
    const auto a = predict_margins(model, x), b = predict_margins(back, x);
    for (std::size_t c = 0; c < a.size(); ++c) max_diff = std::max(max_diff, std::abs(a[c] - b[c]));
  }
  EXPECT_EQ(max_diff, 0.0);
}

TEST(ModelIoTest, TruncatedOrForeignFilesAreSchemaErrors) {
  TempDir dir;
  const FeatureMatrix m = blobs(50, 2, 2, 1.0, 16);
  TrainParams p;
  p.num_rounds = 3;
  p.num_classes = 2;
  const std::string text = serialize_model(train(m, p));
  {
    std::ofstream out(dir / "cut.json");
    out << text.substr(0, text.size() / 2);
  }
  EXPECT_THROW(load_model(dir / "cut.json"), SchemaError);

  std::string other = text;
  other.replace(other.find("\"schema_version\":1"), 18, "\"schema_version\":9");
  EXPECT_THROW(deserialize_model(other), SchemaError);
  EXPECT_THROW(deserialize_model("{\"format\":\"something-else\"}"), SchemaError);
  EXPECT_THROW(load_model(dir / "missing.json"), IoError);
}

}  // namespace
}  // namespace qarerank
