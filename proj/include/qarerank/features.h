#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qarerank/corpus.h"

namespace qarerank {

inline constexpr double kDefaultSoftmaxScale = 1.3;

// Which feature groups to emit. Groups appear in the vector in a fixed
// canonical order regardless of how the flags are set.
struct FeatureConfig {
  bool use_lengths = true;          // context, question and candidate text lengths
  bool use_prob = true;             // model probability per candidate
  bool use_logits = true;           // start and end logit per candidate
  bool use_entropy = true;          // entropy of the top-k mass plus residual
  bool use_scaled_softmax = true;   // temperature-softened probabilities
  double lambda = kDefaultSoftmaxScale;
  bool use_embedding = false;
  bool use_hidden_last = false;
  bool use_hidden_avg = false;

  bool uses_rep() const { return use_embedding || use_hidden_last || use_hidden_avg; }
  bool operator==(const FeatureConfig&) const = default;

  static FeatureConfig manual_only();
  static FeatureConfig rep_only();
  static FeatureConfig all();
};

// Throws InvalidArgument when no group is enabled or lambda <= 1 while the
// scaled softmax is requested.
void validate(const FeatureConfig& config);

std::string feature_config_to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(std::string_view text);

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> layout;  // one name per value
};

// Row-major dense matrix whose rows share one layout.
struct FeatureMatrix {
  std::vector<std::string> layout;
  std::vector<double> values;
  std::size_t rows = 0;
  std::optional<std::vector<int>> labels;

  std::size_t cols() const { return layout.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
};

// Length of a UTF-8 string in Unicode scalar values.
std::size_t text_length(std::string_view utf8);

// -[sum p ln p + (1 - S) ln(1 - S)] with S = sum p; 0 ln 0 = 0 and the residual
// term vanishes once S reaches 1.
double entropy_feature(std::span<const double> probs);

// Softmax of (s + e) / lambda, computed through the max-shifted gap form.
std::vector<double> scaled_softmax(std::span<const double> start_logits,
                                   std::span<const double> end_logits, double lambda);

// Mean of the per-layer vectors and the embedding vector (n + 1 terms).
std::vector<double> average_hidden(std::span<const std::vector<double>> per_layer,
                                   std::span<const double> embedding);

// Names of the features emitted for the given config, candidate count and
// representation dimension. rep_dim is ignored when no rep group is enabled.
std::vector<std::string> feature_layout(const FeatureConfig& config, std::size_t k,
                                        std::size_t rep_dim);

FeatureVector featurize(const CandidateSet& example, const FeatureConfig& config);

// Rows follow corpus order. With require_labels, every example must carry a
// label and the labels are copied into the matrix.
FeatureMatrix featurize_corpus(const Corpus& corpus, const FeatureConfig& config,
                               bool require_labels = false);

// CSV with the layout as header row; a trailing "label" column is written when
// labels are present and recognised on import.
void save_matrix_csv(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix load_matrix_csv(const std::filesystem::path& path);

}  // namespace qarerank
