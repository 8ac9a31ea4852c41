#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "qarerank/corpus.h"

namespace qarerank {

// Diagnostics of where the best candidate sits relative to the model's top
// choice.
struct AnalysisReport {
  std::size_t n = 0;
  double mean_f1 = 0.0;             // baseline (rank 0) F1, averaged, in [0, 1]
  std::size_t bad_case_count = 0;   // baseline F1 strictly below mean_f1
  std::size_t bad_with_better = 0;  // bad cases whose label is not 0
  std::size_t better_size = 0;      // examples whose label is not 0
  std::vector<std::size_t> rank_histogram;  // count of each label value
};

// Ids of examples whose rank-0 F1 is strictly below the corpus mean.
std::vector<std::string> bad_cases(const Corpus& corpus);

AnalysisReport better_candidate_stats(const Corpus& corpus);

// One row per dataset: name, rank_0 .. rank_{k-1}. With no reports the
// header uses kDefaultTopK columns.
void emit_histogram_csv(const std::map<std::string, AnalysisReport>& reports, const std::filesystem::path& path);

// Summary counts per dataset, one CSV row each.
void emit_stats_csv(const std::map<std::string, AnalysisReport>& reports, const std::filesystem::path& path);

// Human-readable "dataset size better-size" table plus bad-case columns.
void print_analysis(const std::map<std::string, AnalysisReport>& reports, std::ostream& out);

}  // namespace qarerank
