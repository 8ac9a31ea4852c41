#include "qarerank/features.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qarerank/error.h"

namespace qarerank {

using nlohmann::json;

FeatureConfig FeatureConfig::manual_only() { return FeatureConfig{}; }

FeatureConfig FeatureConfig::rep_only() {
  FeatureConfig c;
  c.use_lengths = c.use_prob = c.use_logits = c.use_entropy = c.use_scaled_softmax = false;
  c.use_embedding = c.use_hidden_last = c.use_hidden_avg = true;
  return c;
}

FeatureConfig FeatureConfig::all() {
  FeatureConfig c;
  c.use_embedding = c.use_hidden_last = c.use_hidden_avg = true;
  return c;
}

void validate(const FeatureConfig& c) {
  const bool any = c.use_lengths || c.use_prob || c.use_logits || c.use_entropy ||
                   c.use_scaled_softmax || c.uses_rep();
  if (!any) throw InvalidArgument("feature config enables no feature group");
  if (c.use_scaled_softmax && !(c.lambda > 1.0)) {
    throw InvalidArgument("softmax scale lambda must exceed 1, got " + std::to_string(c.lambda));
  }
}

std::string feature_config_to_json(const FeatureConfig& c) {
  json j = {{"use_lengths", c.use_lengths},         {"use_prob", c.use_prob},
            {"use_logits", c.use_logits},           {"use_entropy", c.use_entropy},
            {"use_scaled_softmax", c.use_scaled_softmax}, {"lambda", c.lambda},
            {"use_embedding", c.use_embedding},     {"use_hidden_last", c.use_hidden_last},
            {"use_hidden_avg", c.use_hidden_avg}};
  return j.dump();
}

FeatureConfig feature_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("feature config: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("feature config must be an object");
  FeatureConfig c;
  for (auto& [key, value] : j.items()) {
    if (key == "lambda") {
      if (!value.is_number()) throw SchemaError("feature config: lambda must be a number");
      c.lambda = value.get<double>();
      continue;
    }
    bool* flag = nullptr;
    if (key == "use_lengths") flag = &c.use_lengths;
    else if (key == "use_prob") flag = &c.use_prob;
    else if (key == "use_logits") flag = &c.use_logits;
    else if (key == "use_entropy") flag = &c.use_entropy;
    else if (key == "use_scaled_softmax") flag = &c.use_scaled_softmax;
    else if (key == "use_embedding") flag = &c.use_embedding;
    else if (key == "use_hidden_last") flag = &c.use_hidden_last;
    else if (key == "use_hidden_avg") flag = &c.use_hidden_avg;
    else throw SchemaError("feature config: unknown key '" + key + "'");
    if (!value.is_boolean()) throw SchemaError("feature config: '" + key + "' must be a boolean");
    *flag = value.get<bool>();
  }
  validate(c);
  return c;
}

std::size_t text_length(std::string_view utf8) {
  return static_cast<std::size_t>(std::count_if(
      utf8.begin(), utf8.end(), [](char ch) { return (static_cast<unsigned char>(ch) & 0xC0) != 0x80; }));
}

double entropy_feature(std::span<const double> probs) {
  double total = 0.0;
  double acc = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InvalidArgument("entropy: negative or NaN probability");
    total += p;
    if (p > 0.0) acc += p * std::log(p);
  }
  if (total > 1.0 + 1e-9) throw InvalidArgument("entropy: probabilities sum above 1");
  const double residual = 1.0 - total;
  if (residual > 0.0) acc += residual * std::log(residual);
  return -acc;
}

std::vector<double> scaled_softmax(std::span<const double> start_logits,
                                   std::span<const double> end_logits, double lambda) {
  if (start_logits.size() != end_logits.size() || start_logits.empty()) {
    throw InvalidArgument("scaled softmax: logit lists must be non-empty and of equal length");
  }
  if (!(lambda > 0.0)) throw InvalidArgument("scaled softmax: lambda must be positive");
  const std::size_t k = start_logits.size();

  double m = -INFINITY;
  for (std::size_t j = 0; j < k; ++j) m = std::max(m, start_logits[j] + end_logits[j]);

  // Only the raw sum is scaled, so the gaps may be positive; the extra shift by
  // the largest gap keeps exp() in range and cancels in the normalisation.
  std::vector<double> g(k);
  for (std::size_t j = 0; j < k; ++j) g[j] = (start_logits[j] + end_logits[j]) / lambda - m;
  const double g_max = *std::max_element(g.begin(), g.end());

  double z = 0.0;
  for (double& v : g) {
    v = std::exp(v - g_max);
    z += v;
  }
  for (double& v : g) v /= z;
  return g;
}

std::vector<double> average_hidden(std::span<const std::vector<double>> per_layer,
                                   std::span<const double> embedding) {
  if (per_layer.empty()) throw InvalidArgument("average_hidden: need at least one layer");
  const std::size_t l = embedding.size();
  std::vector<double> sum(embedding.begin(), embedding.end());
  for (const auto& layer : per_layer) {
    if (layer.size() != l) throw InvalidArgument("average_hidden: dimension mismatch");
    for (std::size_t d = 0; d < l; ++d) sum[d] += layer[d];
  }
  const double denom = static_cast<double>(per_layer.size() + 1);
  for (double& v : sum) v /= denom;
  return sum;
}

std::vector<std::string> feature_layout(const FeatureConfig& c, std::size_t k, std::size_t rep_dim) {
  std::vector<std::string> names;
  auto cand = [](std::size_t j, const char* what) { return "cand" + std::to_string(j) + "_" + what; };
  if (c.use_lengths) {
    names.emplace_back("context_len");
    names.emplace_back("question_len");
  }
  if (c.use_lengths || c.use_prob || c.use_logits) {
    for (std::size_t j = 0; j < k; ++j) {
      if (c.use_lengths) names.push_back(cand(j, "len"));
      if (c.use_prob) names.push_back(cand(j, "prob"));
      if (c.use_logits) {
        names.push_back(cand(j, "start_logit"));
        names.push_back(cand(j, "end_logit"));
      }
    }
  }
  if (c.use_entropy) names.emplace_back("entropy");
  if (c.use_scaled_softmax) {
    for (std::size_t j = 0; j < k; ++j) names.push_back(cand(j, "scaled_prob"));
  }
  auto rep_group = [&](bool on, const char* prefix) {
    if (!on) return;
    for (std::size_t d = 0; d < rep_dim; ++d) names.push_back(std::string(prefix) + std::to_string(d));
  };
  rep_group(c.use_embedding, "embedding_");
  rep_group(c.use_hidden_last, "hidden_last_");
  rep_group(c.use_hidden_avg, "hidden_avg_");
  return names;
}

namespace {

void append_features(const CandidateSet& ex, const FeatureConfig& c, std::vector<double>& out) {
  const std::size_t k = ex.candidates.size();
  if (c.uses_rep() && !ex.rep) {
    throw InvalidArgument("example '" + ex.id + "': representation features requested but rep vectors are absent");
  }
  if (c.use_lengths) {
    out.push_back(static_cast<double>(text_length(ex.context)));
    out.push_back(static_cast<double>(text_length(ex.question)));
  }
  for (const Candidate& cand : ex.candidates) {
    if (c.use_lengths) out.push_back(static_cast<double>(text_length(cand.text)));
    if (c.use_prob) out.push_back(cand.prob);
    if (c.use_logits) {
      out.push_back(cand.start_logit);
      out.push_back(cand.end_logit);
    }
  }
  if (c.use_entropy || c.use_scaled_softmax) {
    std::vector<double> probs(k), starts(k), ends(k);
    for (std::size_t j = 0; j < k; ++j) {
      probs[j] = ex.candidates[j].prob;
      starts[j] = ex.candidates[j].start_logit;
      ends[j] = ex.candidates[j].end_logit;
    }
    if (c.use_entropy) out.push_back(entropy_feature(probs));
    if (c.use_scaled_softmax) {
      const auto sp = scaled_softmax(starts, ends, c.lambda);
      out.insert(out.end(), sp.begin(), sp.end());
    }
  }
  if (c.use_embedding) out.insert(out.end(), ex.rep->embedding.begin(), ex.rep->embedding.end());
  if (c.use_hidden_last) out.insert(out.end(), ex.rep->hidden_last.begin(), ex.rep->hidden_last.end());
  if (c.use_hidden_avg) out.insert(out.end(), ex.rep->hidden_avg.begin(), ex.rep->hidden_avg.end());
}

}  // namespace

FeatureVector featurize(const CandidateSet& example, const FeatureConfig& config) {
  validate(config);
  FeatureVector fv;
  fv.layout = feature_layout(config, example.candidates.size(), example.rep ? example.rep->dim() : 0);
  fv.values.reserve(fv.layout.size());
  append_features(example, config, fv.values);
  return fv;
}

FeatureMatrix featurize_corpus(const Corpus& corpus, const FeatureConfig& config, bool require_labels) {
  validate(config);
  if (corpus.empty()) throw InvalidArgument("empty corpus");
  const CandidateSet& first = corpus.examples.front();
  FeatureMatrix m;
  m.layout = feature_layout(config, first.candidates.size(), first.rep ? first.rep->dim() : 0);
  m.values.reserve(corpus.size() * m.cols());
  if (require_labels) m.labels.emplace().reserve(corpus.size());

  for (const CandidateSet& ex : corpus.examples) {
    if (require_labels && !ex.label) throw InvalidArgument("example '" + ex.id + "': missing label");
    const std::size_t before = m.values.size();
    append_features(ex, config, m.values);
    if (m.values.size() - before != m.cols()) {
      throw SchemaError("example '" + ex.id + "': feature count differs from the corpus layout");
    }
    if (require_labels) m.labels->push_back(*ex.label);
    ++m.rows;
  }
  return m;
}

void save_matrix_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m.layout[j];
  if (m.labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m.at(i, j));
      out << (j ? "," : "") << buf;
    }
    if (m.labels) out << ',' << (*m.labels)[i];
    out << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

FeatureMatrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row");
  FeatureMatrix m;
  m.layout = split(line);
  const bool has_labels = !m.layout.empty() && m.layout.back() == "label";
  if (has_labels) {
    m.layout.pop_back();
    m.labels.emplace();
  }
  if (m.layout.empty()) throw ParseError(path.string() + ": header has no feature columns");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != m.cols() + (has_labels ? 1 : 0)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[j].size() || !std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cells[j] + "'");
      }
      m.values.push_back(v);
    }
    if (has_labels) {
      try {
        m.labels->push_back(std::stoi(cells.back()));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad label");
      }
    }
    ++m.rows;
  }
  return m;
}

}  // namespace qarerank
