#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qarerank/corpus.h"

namespace qarerank {

struct ScorePair {
  int em = 0;       // 0 or 1
  double f1 = 0.0;  // in [0, 1]
};

// Percentages in [0, 100].
struct CorpusScores {
  double em = 0.0;
  double f1 = 0.0;
};

// SQuAD answer normalization: lowercase, drop punctuation (Unicode P* and the
// ASCII punctuation set), drop the articles a/an/the as whole tokens, and
// collapse whitespace.
std::string normalize_answer(std::string_view text);

// Whitespace tokens of the normalized text.
std::vector<std::string> answer_tokens(std::string_view text);

// An empty gold list marks an unanswerable question, which only the empty
// prediction answers correctly.
ScorePair score(std::string_view prediction, std::span<const std::string> gold_answers);

// Index of the candidate with the highest F1 against the gold answers; ties go
// to the smallest index. Stores the result in example.label.
int label_best(CandidateSet& example);
void label_corpus(Corpus& corpus);

// Mean EM/F1 (as percentages) when example i answers with candidates[choices[i]].
CorpusScores corpus_scores(const Corpus& corpus, std::span<const int> choices);

}  // namespace qarerank
