#include "qarerank/squad_eval.h"

#include <gtest/gtest.h>

#include "qarerank/error.h"
#include "qarerank/random.h"
#include "golden_cases.h"
#include "test_util.h"

namespace qarerank {
namespace {

TEST(NormalizeAnswerTest, Examples) {
  EXPECT_EQ(normalize_answer("The Cat!"), "cat");
  EXPECT_EQ(normalize_answer(""), "");
  EXPECT_EQ(normalize_answer("a  An THE"), "");
  EXPECT_EQ(normalize_answer("  Hello,\t  World \n"), "hello world");
  EXPECT_EQ(normalize_answer("theater"), "theater");
}

// Random strings over a pool that mixes articles, punctuation, unicode and
// whitespace.
std::string random_text(Rng& rng) {
  static const std::vector<std::string> pool = {"the", "A", "an", "Cat", "dog", ",", ".", "!", " ", "  ", "\t",
                                                "É", "«", "»", "—", "x", "$", "Ünïcode", "σ", "Σ", "'s", "9"};
  std::string s;
  const std::size_t n = rng.below(12);
  for (std::size_t i = 0; i < n; ++i) s += pool[rng.below(pool.size())];
  return s;
}

TEST(NormalizeAnswerTest, IsIdempotent) {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const std::string x = random_text(rng);
    const std::string once = normalize_answer(x);
    EXPECT_EQ(normalize_answer(once), once) << "input '" << x << "'";
  }
}

TEST(NormalizeAnswerTest, MalformedUtf8DoesNotThrow) {
  EXPECT_NO_THROW(normalize_answer(std::string("ab\xff\xfe cd\xe2\x82")));
}

TEST(ScoreTest, HandWorkedExamples) {
  const std::vector<std::string> fox = {"quick brown fox"};
  ScorePair s = score("brown fox", fox);
  EXPECT_EQ(s.em, 0);
  EXPECT_DOUBLE_EQ(s.f1, 0.8);

  s = score("", std::vector<std::string>{});
  EXPECT_EQ(s.em, 1);
  EXPECT_EQ(s.f1, 1.0);

  const std::vector<std::string> cat = {"cat"};
  s = score("the cat", cat);
  EXPECT_EQ(s.em, 1);
  EXPECT_EQ(s.f1, 1.0);
}

TEST(ScoreTest, PropertiesOnRandomInputs) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const std::string x = random_text(rng);
    const std::vector<std::string> self = {x};
    EXPECT_EQ(score(x, self).em, 1) << "'" << x << "'";

    std::vector<std::string> gold;
    const std::size_t n_gold = rng.below(3);
    for (std::size_t g = 0; g < n_gold; ++g) gold.push_back(random_text(rng));
    const ScorePair s = score(random_text(rng), gold);
    EXPECT_TRUE(s.em == 0 || s.em == 1);
    EXPECT_GE(s.f1, 0.0);
    EXPECT_LE(s.f1, 1.0);
    EXPECT_LE(static_cast<double>(s.em), s.f1);
  }
}

CandidateSet with_texts(const std::vector<std::string>& texts, std::vector<std::string> gold) {
  CandidateSet ex;
  ex.id = "q";
  ex.gold_answers = std::move(gold);
  double p = 0.5;
  for (const auto& t : texts) {
    ex.candidates.push_back({t, 1.0, 1.0, p});
    p /= 2;
  }
  return ex;
}

TEST(LabelBestTest, PicksUniqueMaximum) {
  // F1 against "red fox": 0, 1, 0.5 (one of two tokens, precision 1/2).
  CandidateSet ex = with_texts({"blue whale", "red fox", "red whale"}, {"red fox"});
  EXPECT_EQ(label_best(ex), 1);
  EXPECT_EQ(ex.label, 1);
}

TEST(LabelBestTest, AllZeroTiesGoToRankZero) {
  CandidateSet ex = with_texts({"aaa", "bbb", "ccc"}, {"zzz"});
  EXPECT_EQ(label_best(ex), 0);
}

TEST(LabelBestTest, EqualF1TiesGoToSmallestIndex) {
  // Both first candidates score 0.8 against "quick brown fox".
  CandidateSet ex = with_texts({"brown fox", "quick brown", "fox"}, {"quick brown fox"});
  EXPECT_DOUBLE_EQ(score("brown fox", ex.gold_answers).f1, 0.8);
  EXPECT_DOUBLE_EQ(score("quick brown", ex.gold_answers).f1, 0.8);
  EXPECT_EQ(label_best(ex), 0);
}

TEST(LabelBestTest, UnanswerablePrefersEmptyCandidate) {
  CandidateSet ex = with_texts({"cat", "dog", ""}, {});
  EXPECT_EQ(label_best(ex), 2);
}

TEST(CorpusScoresTest, SingleExampleAveraging) {
  Corpus c;
  c.meta.k = 2;
  // "red whale" vs "red fox": F1 0.5, EM 0.
  c.examples.push_back(with_texts({"red fox", "red whale"}, {"red fox"}));
  const std::vector<int> choice = {1};
  const CorpusScores s = corpus_scores(c, choice);
  EXPECT_DOUBLE_EQ(s.em, 0.0);
  EXPECT_DOUBLE_EQ(s.f1, 50.0);
}

TEST(CorpusScoresTest, LengthMismatchAndRangeErrors) {
  Corpus c;
  c.meta.k = 2;
  c.examples.push_back(with_texts({"a", "b"}, {"a"}));
  const std::vector<int> none;
  EXPECT_THROW(corpus_scores(c, none), InvalidArgument);
  const std::vector<int> out_of_range = {2};
  EXPECT_THROW(corpus_scores(c, out_of_range), InvalidArgument);
}

TEST(CorpusScoresTest, OracleDominatesAnyChoice) {
  Rng rng(5);
  static const std::vector<std::string> words = {"red", "fox", "blue", "whale", "cat", "the", "dog"};
  for (int trial = 0; trial < 50; ++trial) {
    Corpus c;
    c.meta.k = 4;
    for (int i = 0; i < 20; ++i) {
      std::vector<std::string> texts;
      for (int j = 0; j < 4; ++j) {
        std::string t;
        for (std::size_t w = rng.below(4); w > 0; --w) t += words[rng.below(words.size())] + " ";
        texts.push_back(t);
      }
      std::vector<std::string> gold;
      if (rng.below(4)) gold.push_back(words[rng.below(words.size())] + " " + words[rng.below(words.size())]);
      c.examples.push_back(with_texts(texts, gold));
      c.examples.back().id = std::to_string(i);
    }
    label_corpus(c);
    std::vector<int> labels, baseline(c.size(), 0), random(c.size());
    for (const auto& ex : c.examples) labels.push_back(*ex.label);
    for (int& r : random) r = static_cast<int>(rng.below(4));
    const CorpusScores oracle = corpus_scores(c, labels);
    EXPECT_GE(oracle.f1, corpus_scores(c, baseline).f1);
    EXPECT_GE(oracle.f1, corpus_scores(c, random).f1);
    EXPECT_GE(oracle.em, corpus_scores(c, baseline).em);
  }
}

TEST(ScoreTest, GoldenSuite) {
  ASSERT_GE(testing::golden_cases().size(), 20u);
  for (const testing::GoldenCase& c : testing::golden_cases()) {
    const ScorePair s = score(c.prediction, c.gold);
    EXPECT_EQ(s.em, c.em) << "'" << c.prediction << "'";
    EXPECT_DOUBLE_EQ(s.f1, c.f1) << "'" << c.prediction << "'";
  }
}

}  // namespace
}  // namespace qarerank
