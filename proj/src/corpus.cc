#include "qarerank/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "qarerank/error.h"
#include "qarerank/random.h"

namespace qarerank {

using nlohmann::json;

namespace {

std::string where(const std::string& id) { return "example '" + id + "': "; }

void require_finite(double v, const std::string& ctx, const char* field) {
  if (!std::isfinite(v)) throw SchemaError(ctx + field + ": non-finite value");
}

const json& field(const json& obj, const char* name, const std::string& ctx) {
  if (!obj.is_object()) throw SchemaError(ctx + "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(ctx + "missing field '" + name + "'");
  return *it;
}

std::string get_string(const json& obj, const char* name, const std::string& ctx) {
  const json& v = field(obj, name, ctx);
  if (!v.is_string()) throw SchemaError(ctx + "field '" + name + "' must be a string");
  return v.get<std::string>();
}

// Non-finite values cannot be spelled in strict JSON, so producers that
// write them emit strings such as "NaN" or "Infinity"; those are reported as
// non-finite rather than as a type mismatch.
double get_number(const json& obj, const char* name, const std::string& ctx) {
  const json& v = field(obj, name, ctx);
  if (v.is_number()) {
    const double d = v.get<double>();
    require_finite(d, ctx, name);
    return d;
  }
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s.find("nan") != std::string::npos || s.find("inf") != std::string::npos) {
      throw SchemaError(ctx + name + ": non-finite value");
    }
  }
  throw SchemaError(ctx + "field '" + name + "' must be a number");
}

std::int64_t get_int(const json& v, const std::string& ctx, const char* name) {
  if (!v.is_number_integer()) throw SchemaError(ctx + "field '" + name + "' must be an integer");
  return v.get<std::int64_t>();
}

std::vector<double> get_vector(const json& obj, const char* name, const std::string& ctx) {
  const json& v = field(obj, name, ctx);
  if (!v.is_array()) throw SchemaError(ctx + "field '" + name + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (e.is_string()) throw SchemaError(ctx + name + ": non-finite value");
    if (!e.is_number()) throw SchemaError(ctx + "field '" + name + "' must hold numbers");
    const double d = e.get<double>();
    require_finite(d, ctx, name);
    out.push_back(d);
  }
  return out;
}

Candidate candidate_from_json(const json& j, const std::string& ctx) {
  Candidate c;
  c.text = get_string(j, "text", ctx);
  c.start_logit = get_number(j, "start_logit", ctx);
  c.end_logit = get_number(j, "end_logit", ctx);
  c.prob = get_number(j, "prob", ctx);
  return c;
}

RepVectors rep_from_json(const json& j, const std::string& ctx) {
  RepVectors r;
  r.embedding = get_vector(j, "embedding", ctx);
  r.hidden_last = get_vector(j, "hidden_last", ctx);
  r.hidden_avg = get_vector(j, "hidden_avg", ctx);
  r.num_layers = static_cast<int>(get_int(field(j, "num_layers", ctx), ctx, "num_layers"));
  return r;
}

CandidateSet example_from_json(const json& j, std::size_t position) {
  std::string ctx = "example #" + std::to_string(position) + ": ";
  CandidateSet ex;
  ex.id = get_string(j, "id", ctx);
  ctx = where(ex.id);
  ex.question = get_string(j, "question", ctx);
  ex.context = get_string(j, "context", ctx);

  const json& gold = field(j, "gold_answers", ctx);
  if (!gold.is_array()) throw SchemaError(ctx + "field 'gold_answers' must be an array");
  for (const json& g : gold) {
    if (!g.is_string()) throw SchemaError(ctx + "gold answers must be strings");
    ex.gold_answers.push_back(g.get<std::string>());
  }

  const json& cands = field(j, "candidates", ctx);
  if (!cands.is_array()) throw SchemaError(ctx + "field 'candidates' must be an array");
  for (const json& c : cands) ex.candidates.push_back(candidate_from_json(c, ctx));

  const json& rep = field(j, "rep", ctx);
  if (!rep.is_null()) ex.rep = rep_from_json(rep, ctx);

  const json& label = field(j, "label", ctx);
  if (!label.is_null()) ex.label = static_cast<int>(get_int(label, ctx, "label"));
  return ex;
}

json to_json(const CandidateSet& ex) {
  json cands = json::array();
  for (const Candidate& c : ex.candidates) {
    cands.push_back({{"text", c.text},
                     {"start_logit", c.start_logit},
                     {"end_logit", c.end_logit},
                     {"prob", c.prob}});
  }
  json rep = nullptr;
  if (ex.rep) {
    rep = {{"embedding", ex.rep->embedding},
           {"hidden_last", ex.rep->hidden_last},
           {"hidden_avg", ex.rep->hidden_avg},
           {"num_layers", ex.rep->num_layers}};
  }
  json gold = json::array();
  for (const std::string& g : ex.gold_answers) gold.push_back(g);
  return {{"id", ex.id},
          {"question", ex.question},
          {"context", ex.context},
          {"gold_answers", std::move(gold)},
          {"candidates", std::move(cands)},
          {"rep", std::move(rep)},
          {"label", ex.label ? json(*ex.label) : json(nullptr)}};
}

}  // namespace

bool Corpus::fully_labeled() const {
  return std::all_of(examples.begin(), examples.end(),
                     [](const CandidateSet& e) { return e.label.has_value(); });
}

void validate(const CandidateSet& ex, int k, std::optional<int> hidden_dim) {
  const std::string ctx = where(ex.id);
  if (ex.candidates.size() != static_cast<std::size_t>(k)) {
    throw SchemaError(ctx + "expected " + std::to_string(k) + " candidates, found " +
                      std::to_string(ex.candidates.size()));
  }
  for (std::size_t j = 0; j < ex.candidates.size(); ++j) {
    const Candidate& c = ex.candidates[j];
    require_finite(c.start_logit, ctx, "start_logit");
    require_finite(c.end_logit, ctx, "end_logit");
    require_finite(c.prob, ctx, "prob");
    if (c.prob < 0.0 || c.prob > 1.0) {
      throw SchemaError(ctx + "candidate " + std::to_string(j) + " prob outside [0,1]");
    }
    if (j > 0 && c.prob > ex.candidates[j - 1].prob) {
      throw SchemaError(ctx + "candidates not ordered by non-increasing prob at rank " +
                        std::to_string(j));
    }
  }
  double total = 0.0;
  for (const Candidate& c : ex.candidates) total += c.prob;
  if (total > 1.0 + 1e-9) throw SchemaError(ctx + "candidate probabilities sum above 1");
  if (ex.label && (*ex.label < 0 || *ex.label >= k)) {
    throw SchemaError(ctx + "label " + std::to_string(*ex.label) + " outside [0, k-1]");
  }
  if (ex.rep) {
    const RepVectors& r = *ex.rep;
    if (!hidden_dim) throw SchemaError(ctx + "rep vectors present but meta.hidden_dim is null");
    const auto l = static_cast<std::size_t>(*hidden_dim);
    if (r.embedding.size() != l || r.hidden_last.size() != l || r.hidden_avg.size() != l) {
      throw SchemaError(ctx + "rep vector dimension differs from meta.hidden_dim " +
                        std::to_string(l));
    }
    if (r.num_layers < 1) throw SchemaError(ctx + "num_layers must be positive");
    for (const auto* vec : {&r.embedding, &r.hidden_last, &r.hidden_avg}) {
      for (double v : *vec) require_finite(v, ctx, "rep");
    }
  }
}

void validate(const Corpus& corpus) {
  const CorpusMeta& m = corpus.meta;
  if (m.schema_version != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + std::to_string(m.schema_version));
  }
  if (m.k < 1) throw SchemaError("meta.k must be at least 1");
  if (m.hidden_dim && *m.hidden_dim < 1) throw SchemaError("meta.hidden_dim must be positive");

  std::unordered_set<std::string> seen;
  const bool want_rep = corpus.has_rep();
  for (const CandidateSet& ex : corpus.examples) {
    if (!seen.insert(ex.id).second) throw SchemaError(where(ex.id) + "duplicate id");
    if (ex.rep.has_value() != want_rep) {
      throw SchemaError(where(ex.id) + "mixed presence of rep vectors within the corpus");
    }
    validate(ex, m.k, m.hidden_dim);
  }
}

Corpus parse_corpus(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw SchemaError("dump root must be an object");

  Corpus corpus;
  corpus.meta.schema_version =
      static_cast<int>(get_int(field(root, "schema_version", ""), "", "schema_version"));
  if (corpus.meta.schema_version != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + std::to_string(corpus.meta.schema_version));
  }
  const json& meta = field(root, "meta", "");
  corpus.meta.source_name = get_string(meta, "source_name", "meta: ");
  corpus.meta.k = static_cast<int>(get_int(field(meta, "k", "meta: "), "meta: ", "k"));
  const json& hd = field(meta, "hidden_dim", "meta: ");
  if (!hd.is_null()) corpus.meta.hidden_dim = static_cast<int>(get_int(hd, "meta: ", "hidden_dim"));

  const json& examples = field(root, "examples", "");
  if (!examples.is_array()) throw SchemaError("field 'examples' must be an array");
  corpus.examples.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    corpus.examples.push_back(example_from_json(examples[i], i));
  }
  validate(corpus);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string dump_corpus(const Corpus& corpus) {
  json examples = json::array();
  for (const CandidateSet& ex : corpus.examples) examples.push_back(to_json(ex));
  json root = {
      {"schema_version", corpus.meta.schema_version},
      {"meta",
       {{"source_name", corpus.meta.source_name},
        {"k", corpus.meta.k},
        {"hidden_dim", corpus.meta.hidden_dim ? json(*corpus.meta.hidden_dim) : json(nullptr)}}},
      {"examples", std::move(examples)}};
  try {
    return root.dump() + "\n";
  } catch (const json::type_error& e) {
    throw SchemaError(std::string("cannot serialize corpus: ") + e.what());
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  const std::string text = dump_corpus(corpus);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (corpus.empty()) throw InvalidArgument("cannot split an empty corpus");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("split fraction must be in (0,1)");

  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto first_n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first_n));
  std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(first_n), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());

  std::pair<Corpus, Corpus> parts{Corpus{corpus.meta, {}}, Corpus{corpus.meta, {}}};
  for (std::size_t i : first) parts.first.examples.push_back(corpus.examples[i]);
  for (std::size_t i : second) parts.second.examples.push_back(corpus.examples[i]);
  return parts;
}

}  // namespace qarerank
