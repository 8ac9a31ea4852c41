#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qarerank {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kDefaultTopK = 10;

// One answer span proposed by the reading-comprehension model.
struct Candidate {
  std::string text;  // empty = no-answer prediction
  double start_logit = 0.0;
  double end_logit = 0.0;
  double prob = 0.0;

  bool operator==(const Candidate&) const = default;
};

// Pooled hidden-state summaries of one example.
struct RepVectors {
  std::vector<double> embedding;    // embedding-layer output
  std::vector<double> hidden_last;  // last hidden layer
  std::vector<double> hidden_avg;   // mean of all layers plus embedding
  int num_layers = 1;

  std::size_t dim() const { return embedding.size(); }
  bool operator==(const RepVectors&) const = default;
};

// One question with its ranked top-k candidates. The candidate order is the
// producing model's ranking and is never changed by this toolkit.
struct CandidateSet {
  std::string id;
  std::string question;
  std::string context;
  std::vector<std::string> gold_answers;  // empty = unanswerable
  std::vector<Candidate> candidates;
  std::optional<RepVectors> rep;
  std::optional<int> label;  // index of the best candidate

  std::size_t k() const { return candidates.size(); }
  bool operator==(const CandidateSet&) const = default;
};

struct CorpusMeta {
  std::string source_name;
  int k = kDefaultTopK;
  std::optional<int> hidden_dim;
  int schema_version = kSchemaVersion;

  bool operator==(const CorpusMeta&) const = default;
};

struct Corpus {
  CorpusMeta meta;
  std::vector<CandidateSet> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  bool has_rep() const { return !examples.empty() && examples.front().rep.has_value(); }
  bool fully_labeled() const;
  bool operator==(const Corpus&) const = default;
};

// Throws SchemaError naming the first offending example.
void validate(const CandidateSet& example, int k, std::optional<int> hidden_dim);
void validate(const Corpus& corpus);

// Reads a candidate dump. Throws ParseError on malformed JSON and SchemaError
// on any invariant violation.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(const std::string& json_text);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string dump_corpus(const Corpus& corpus);

// Seeded shuffle then split; the first part holds floor(fraction * N) examples.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed);

}  // namespace qarerank
