#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qarerank/corpus.h"
#include "qarerank/features.h"
#include "qarerank/gbdt.h"

namespace qarerank {

// How the calibrator's training set is assembled.
enum class TrainMode {
  kClean,        // clean training half only
  kSingleMixed,  // plus a sample from one named shift corpus
  kAllMixed,     // plus a sample from every shift corpus
};

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

inline constexpr std::size_t kDefaultSingleMixCount = 2000;
inline constexpr std::size_t kDefaultMixCountEach = 1000;

struct TrainSpec {
  Corpus clean_corpus;
  std::vector<std::pair<std::string, Corpus>> shift_corpora;
  TrainMode mode = TrainMode::kClean;
  std::string shift_name;  // single-mixed only
  std::size_t single_count = kDefaultSingleMixCount;
  std::size_t count_each = kDefaultMixCountEach;
  double clean_train_fraction = 0.5;
  FeatureConfig feature_config;
  TrainParams params;
  std::uint64_t seed = 42;
};

struct TrainingSet {
  FeatureMatrix train;
  // Clean evaluation half first (named after the clean corpus), then every
  // shift corpus minus the examples drawn into training.
  std::vector<std::pair<std::string, Corpus>> held_out;
  // Ids drawn from each shift corpus into the training set.
  std::map<std::string, std::vector<std::string>> sampled_ids;
};

TrainingSet prepare_training(const TrainSpec& spec);

// Trains on prepare_training(spec).train. The feature config and training
// mode are recorded in the model attributes so rerank can rebuild features.
BoostedModel train_calibrator(const TrainSpec& spec, const TrainOptions& options = {});
BoostedModel train_calibrator(const TrainSpec& spec, const TrainingSet& set, const TrainOptions& options = {});

// Zero-tree calibrator: always chooses candidate 0.
BoostedModel make_baseline_calibrator(const FeatureConfig& config, std::size_t k, std::size_t rep_dim);

FeatureConfig model_feature_config(const BoostedModel& model);

// Chosen candidate index per example, in corpus order.
std::vector<int> rerank(const BoostedModel& model, const Corpus& corpus);
std::vector<int> rerank(const BoostedModel& model, const FeatureMatrix& matrix);

struct EvalRow {
  std::string name;
  std::string mode;
  std::size_t n = 0;
  double accuracy = 0.0;  // percent of examples whose choice equals the label
  double baseline_em = 0.0;
  double baseline_f1 = 0.0;
  double calibrated_em = 0.0;
  double calibrated_f1 = 0.0;
  double oracle_em = 0.0;
  double oracle_f1 = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

EvalRow evaluate_set(const BoostedModel& model, const std::string& name, const Corpus& corpus,
                     const std::string& mode);
EvalReport evaluate(const BoostedModel& model, const std::vector<std::pair<std::string, Corpus>>& held_out,
                    const std::string& mode);

void write_report_csv(const EvalReport& report, std::ostream& out);
void save_report_csv(const EvalReport& report, const std::filesystem::path& path);
void print_report(const EvalReport& report, std::ostream& out);

}  // namespace qarerank
