#include "qarerank/squad_eval.h"

#include <algorithm>
#include <cstdint>
#include <unordered_map>

#include "qarerank/error.h"

namespace qarerank {

namespace {

struct CodeRange {
  char32_t first;
  char32_t last;
};

struct CaseMapping {
  char32_t upper;
  char32_t lower;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodeRange (&table)[N], char32_t cp) {
  auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                             [](char32_t v, const CodeRange& r) { return v < r.first; });
  if (it == std::begin(table)) return false;
  --it;
  return cp <= it->last;
}

bool is_punctuation(char32_t cp) {
  // ASCII symbols such as $ + < = > ^ ` | ~ are not in P* but are removed by
  // the reference SQuAD normalizer, so both sets apply.
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  return in_ranges(kPunctuationRanges, cp);
}

bool is_space(char32_t cp) { return in_ranges(kWhitespaceRanges, cp); }

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  auto it = std::lower_bound(std::begin(kLowercaseMap), std::end(kLowercaseMap), cp,
                             [](const CaseMapping& m, char32_t v) { return m.upper < v; });
  return (it != std::end(kLowercaseMap) && it->upper == cp) ? it->lower : cp;
}

// Decodes UTF-8; malformed sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      if (i + k >= s.size()) {
        ok = false;
        break;
      }
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_article(const std::string& token) { return token == "a" || token == "an" || token == "the"; }

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return (pred.empty() && gold.empty()) ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::vector<std::string> answer_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !is_article(current)) tokens.push_back(current);
    current.clear();
  };
  for (char32_t cp : decode_utf8(text)) {
    if (is_space(cp)) {
      flush();
    } else if (!is_punctuation(cp)) {
      append_utf8(current, to_lower(cp));
    }
  }
  flush();
  return tokens;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const std::string& t : answer_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

ScorePair score(std::string_view prediction, std::span<const std::string> gold_answers) {
  const std::vector<std::string> pred = answer_tokens(prediction);
  if (gold_answers.empty()) {
    const int hit = pred.empty() ? 1 : 0;
    return {hit, static_cast<double>(hit)};
  }
  ScorePair best;
  for (const std::string& gold : gold_answers) {
    const std::vector<std::string> g = answer_tokens(gold);
    if (g == pred) best.em = 1;
    best.f1 = std::max(best.f1, token_f1(pred, g));
  }
  return best;
}

int label_best(CandidateSet& example) {
  if (example.candidates.empty()) throw InvalidArgument("example '" + example.id + "' has no candidates");
  int best = 0;
  double best_f1 = -1.0;
  for (std::size_t j = 0; j < example.candidates.size(); ++j) {
    const double f1 = score(example.candidates[j].text, example.gold_answers).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = static_cast<int>(j);
    }
  }
  example.label = best;
  return best;
}

void label_corpus(Corpus& corpus) {
  for (CandidateSet& ex : corpus.examples) label_best(ex);
}

CorpusScores corpus_scores(const Corpus& corpus, std::span<const int> choices) {
  if (choices.size() != corpus.size()) {
    throw InvalidArgument("choices length " + std::to_string(choices.size()) +
                          " differs from corpus size " + std::to_string(corpus.size()));
  }
  if (corpus.empty()) return {};
  double em = 0.0;
  double f1 = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CandidateSet& ex = corpus.examples[i];
    const int c = choices[i];
    if (c < 0 || static_cast<std::size_t>(c) >= ex.candidates.size()) {
      throw InvalidArgument("choice " + std::to_string(c) + " out of range for example '" + ex.id + "'");
    }
    const ScorePair s = score(ex.candidates[static_cast<std::size_t>(c)].text, ex.gold_answers);
    em += s.em;
    f1 += s.f1;
  }
  const double n = static_cast<double>(corpus.size());
  return {100.0 * em / n, 100.0 * f1 / n};
}

}  // namespace qarerank
