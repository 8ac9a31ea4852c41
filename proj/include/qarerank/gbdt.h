#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qarerank/features.h"

namespace qarerank {

struct TrainParams {
  int num_rounds = 160;
  double learning_rate = 0.1;
  int num_classes = kDefaultTopK;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double reg_lambda = 1.0;
  double gamma = 0.0;
  double subsample = 1.0;  // row fraction per round
  double colsample = 1.0;  // column fraction per tree
  std::uint64_t seed = 0;

  bool operator==(const TrainParams&) const = default;
};

void validate(const TrainParams& params);

// Regression tree stored as flat node arrays in depth-first order; node 0 is
// the root. Internal nodes send x to `left` iff x[feature] < threshold.
// Leaves have feature == -1 and carry an already-shrunk weight.
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> weight;

  std::size_t size() const { return feature.size(); }
  bool is_leaf(std::size_t node) const { return feature[node] < 0; }
  double predict(std::span<const double> x) const;
  int depth() const;
  bool operator==(const Tree&) const = default;
};

// trees[r][c] is round r's tree for class c. The margin of class c is
// base_margin plus the sum of trees[r][c] over rounds.
struct BoostedModel {
  TrainParams params;
  std::vector<std::vector<Tree>> trees;
  double base_margin = 0.0;
  std::vector<std::string> feature_layout;
  std::map<std::string, std::string> attributes;  // free-form metadata

  int num_classes() const { return params.num_classes; }
  std::size_t num_rounds_trained() const { return trees.size(); }
  bool operator==(const BoostedModel&) const = default;
};

// A model with no trees; predicts the uniform distribution.
BoostedModel make_untrained_model(const TrainParams& params, std::vector<std::string> feature_layout);

struct GradHess {
  std::vector<double> grad;
  std::vector<double> hess;
};

inline constexpr double kHessianFloor = 1e-16;

// First and second derivatives of the multi-class log-loss with respect to
// each class margin (diagonal Hessian).
GradHess softmax_grad_hess(std::span<const double> margins, int label);

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Exact greedy search over every feature (or the given subset) and every
// midpoint between consecutive distinct values of the rows. Returns nothing
// when no admissible split has positive gain. Ties keep the lowest feature
// index, then the lowest threshold.
std::optional<SplitCandidate> find_best_split(const FeatureMatrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> grad, std::span<const double> hess,
                                              const TrainParams& params,
                                              std::span<const std::size_t> features = {});

struct TrainOptions {
  int num_threads = 1;
  // Called after every round with the mean training log-loss.
  std::function<void(int round, double log_loss)> on_round;
};

BoostedModel train(const FeatureMatrix& matrix, const TrainParams& params, const TrainOptions& options = {});

// Margins and probabilities for an already laid-out row.
std::vector<double> predict_margins(const BoostedModel& model, std::span<const double> x);
std::vector<double> predict_proba(const BoostedModel& model, std::span<const double> x);
int predict_class(const BoostedModel& model, std::span<const double> x);

// Same, but checks the vector's layout against the model's.
std::vector<double> predict_proba(const BoostedModel& model, const FeatureVector& x);
int predict_class(const BoostedModel& model, const FeatureVector& x);

// Mean multi-class log-loss of the model on a labelled matrix.
double log_loss(const BoostedModel& model, const FeatureMatrix& matrix);

std::string serialize_model(const BoostedModel& model);
BoostedModel deserialize_model(const std::string& text);
void save_model(const BoostedModel& model, const std::filesystem::path& path);
BoostedModel load_model(const std::filesystem::path& path);

}  // namespace qarerank
