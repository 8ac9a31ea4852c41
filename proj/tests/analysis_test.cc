#include "qarerank/analysis.h"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "qarerank/error.h"
#include "qarerank/squad_eval.h"
#include "test_util.h"

namespace qarerank {
namespace {

using testing::make_corpus;
using testing::TempDir;

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Four examples whose rank-0 F1 is 1, 1, 0 and 0.5; labels 0, 0, 1, 2.
Corpus four_examples() {
  Corpus c = make_corpus(4, 4, std::nullopt, 1);
  for (auto& ex : c.examples) ex.gold_answers = {"red apple"};
  c.examples[0].candidates[0].text = "red apple";
  c.examples[1].candidates[0].text = "the red apple";
  c.examples[2].candidates[0].text = "banana";
  c.examples[3].candidates[0].text = "apple pie";
  const int labels[] = {0, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) c.examples[i].label = labels[i];
  return c;
}

TEST(BadCasesTest, StrictlyBelowMean) {
  const Corpus c = four_examples();
  // Mean rank-0 F1 = (1 + 1 + 0 + 0.5) / 4 = 0.625.
  EXPECT_EQ(bad_cases(c), (std::vector<std::string>{"ex2", "ex3"}));

  // An example exactly at the mean is not a bad case.
  Corpus even = c;
  even.examples.resize(2);
  even.examples[1].candidates[0].text = "banana";
  EXPECT_EQ(bad_cases(even), (std::vector<std::string>{"ex1"}));
  even.examples[1].candidates[0].text = "red apple";
  EXPECT_TRUE(bad_cases(even).empty());

  Corpus perfect = c;
  for (auto& ex : perfect.examples) ex.candidates[0].text = "red apple";
  EXPECT_TRUE(bad_cases(perfect).empty());
}

TEST(BetterCandidateStatsTest, CountsLabelsAndBadCases) {
  const AnalysisReport r = better_candidate_stats(four_examples());
  EXPECT_EQ(r.n, 4u);
  EXPECT_DOUBLE_EQ(r.mean_f1, 0.625);
  EXPECT_EQ(r.better_size, 2u);
  EXPECT_EQ(r.rank_histogram, (std::vector<std::size_t>{2, 1, 1, 0}));
  EXPECT_EQ(r.bad_case_count, 2u);
  EXPECT_EQ(r.bad_with_better, 2u);
}

TEST(BetterCandidateStatsTest, AllLabelsZero) {
  Corpus c = make_corpus(30, 10, std::nullopt, 2);
  label_corpus(c);
  const AnalysisReport r = better_candidate_stats(c);
  EXPECT_EQ(r.better_size, 0u);
  EXPECT_EQ(r.rank_histogram[0], 30u);
  EXPECT_EQ(r.bad_with_better, 0u);
}

TEST(BetterCandidateStatsTest, HistogramConservesExamples) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Corpus c = make_corpus(1 + rng.below(50), 10, std::nullopt, 100 + t);
    for (auto& ex : c.examples) ex.label = static_cast<int>(rng.below(10));
    const AnalysisReport r = better_candidate_stats(c);
    std::size_t total = 0;
    for (std::size_t v : r.rank_histogram) total += v;
    EXPECT_EQ(total, c.size());
    EXPECT_EQ(r.better_size, c.size() - r.rank_histogram[0]);
    EXPECT_LE(r.bad_with_better, r.bad_case_count);
  }
}

TEST(BetterCandidateStatsTest, RequiresLabels) {
  Corpus c = four_examples();
  c.examples[1].label.reset();
  EXPECT_THROW(better_candidate_stats(c), InvalidArgument);
  EXPECT_THROW(bad_cases(c), InvalidArgument);
}

TEST(AnalysisCsvTest, StatsAndHistogramShapes) {
  TempDir dir;
  std::map<std::string, AnalysisReport> reports;
  reports["alpha"] = better_candidate_stats(four_examples());
  Corpus other = four_examples();
  other.examples[0].label = 3;
  reports["beta"] = better_candidate_stats(other);

  emit_stats_csv(reports, dir / "stats.csv");
  const auto stats = read_lines(dir / "stats.csv");
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0], "dataset,size,better_size,mean_f1,bad_cases,bad_with_better,bad_with_better_pct");
  EXPECT_EQ(stats[1].substr(0, 12), "alpha,4,2,0.");
  for (const auto& line : stats) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);

  emit_histogram_csv(reports, dir / "hist.csv");
  const auto hist = read_lines(dir / "hist.csv");
  ASSERT_EQ(hist.size(), 3u);
  EXPECT_EQ(hist[0], "dataset,rank_0,rank_1,rank_2,rank_3");
  EXPECT_EQ(hist[1], "alpha,2,1,1,0");
  EXPECT_EQ(hist[2], "beta,1,1,1,1");

  std::ostringstream table;
  print_analysis(reports, table);
  EXPECT_NE(table.str().find("beta"), std::string::npos);
}

TEST(AnalysisCsvTest, EmptyInputGivesHeaderOnly) {
  TempDir dir;
  emit_histogram_csv({}, dir / "hist.csv");
  const auto hist = read_lines(dir / "hist.csv");
  ASSERT_EQ(hist.size(), 1u);
  EXPECT_EQ(std::count(hist[0].begin(), hist[0].end(), ','), 10);
  emit_stats_csv({}, dir / "stats.csv");
  EXPECT_EQ(read_lines(dir / "stats.csv").size(), 1u);
}

TEST(AnalysisCsvTest, UnwritablePathIsIoError) {
  EXPECT_THROW(emit_stats_csv({}, "/nonexistent-dir/x.csv"), IoError);
}

}  // namespace
}  // namespace qarerank
