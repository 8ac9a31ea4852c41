#include "qarerank/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "qarerank/error.h"
#include "qarerank/random.h"
#include "qarerank/squad_eval.h"

namespace qarerank {

namespace {

constexpr const char* kAttrFeatureConfig = "feature_config";
constexpr const char* kAttrTrainMode = "train_mode";
constexpr std::uint64_t kShiftSampleStream = 0x53484654ULL;  // "SHFT"

void require_labeled(const Corpus& corpus, const std::string& name) {
  for (const CandidateSet& ex : corpus.examples) {
    if (!ex.label) throw InvalidArgument("corpus '" + name + "' is not labeled (example '" + ex.id + "')");
  }
}

// Draws `count` examples without replacement. The remainder keeps corpus order.
std::pair<std::vector<CandidateSet>, Corpus> sample_without_replacement(const Corpus& corpus, std::size_t count,
                                                                        std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<char> taken(corpus.size(), 0);
  std::vector<CandidateSet> sample;
  sample.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    taken[order[i]] = 1;
    sample.push_back(corpus.examples[order[i]]);
  }
  Corpus rest{corpus.meta, {}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!taken[i]) rest.examples.push_back(corpus.examples[i]);
  }
  return {std::move(sample), std::move(rest)};
}

std::string clean_name(const Corpus& c) { return c.meta.source_name.empty() ? "clean" : c.meta.source_name; }

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kClean:
      return "clean";
    case TrainMode::kSingleMixed:
      return "single_mixed";
    case TrainMode::kAllMixed:
      return "all_mixed";
  }
  return "unknown";
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "clean") return TrainMode::kClean;
  if (text == "single_mixed") return TrainMode::kSingleMixed;
  if (text == "all_mixed") return TrainMode::kAllMixed;
  throw InvalidArgument("unknown training mode '" + text + "' (expected clean, single_mixed or all_mixed)");
}

TrainingSet prepare_training(const TrainSpec& spec) {
  validate(spec.feature_config);
  require_labeled(spec.clean_corpus, clean_name(spec.clean_corpus));
  for (const auto& [name, corpus] : spec.shift_corpora) {
    require_labeled(corpus, name);
    if (corpus.meta.k != spec.clean_corpus.meta.k) {
      throw InvalidArgument("corpus '" + name + "' has k=" + std::to_string(corpus.meta.k) +
                            ", clean corpus has k=" + std::to_string(spec.clean_corpus.meta.k));
    }
  }
  if (spec.mode == TrainMode::kSingleMixed) {
    const bool known = std::any_of(spec.shift_corpora.begin(), spec.shift_corpora.end(),
                                   [&](const auto& s) { return s.first == spec.shift_name; });
    if (!known) throw InvalidArgument("unknown shift corpus '" + spec.shift_name + "'");
  }

  auto [clean_train, clean_eval] = split_corpus(spec.clean_corpus, spec.clean_train_fraction, spec.seed);

  TrainingSet set;
  Corpus combined = std::move(clean_train);
  set.held_out.emplace_back(clean_name(spec.clean_corpus), std::move(clean_eval));

  for (std::size_t s = 0; s < spec.shift_corpora.size(); ++s) {
    const auto& [name, corpus] = spec.shift_corpora[s];
    std::size_t count = 0;
    if (spec.mode == TrainMode::kSingleMixed && name == spec.shift_name) count = spec.single_count;
    if (spec.mode == TrainMode::kAllMixed) count = spec.count_each;
    if (count > corpus.size()) {
      throw InvalidArgument("cannot draw " + std::to_string(count) + " examples from '" + name + "' of size " +
                            std::to_string(corpus.size()));
    }
    auto [sample, rest] = sample_without_replacement(corpus, count, derive_seed(spec.seed, kShiftSampleStream, s));
    auto& ids = set.sampled_ids[name];
    for (CandidateSet& ex : sample) {
      ids.push_back(ex.id);
      combined.examples.push_back(std::move(ex));
    }
    set.held_out.emplace_back(name, std::move(rest));
  }

  set.train = featurize_corpus(combined, spec.feature_config, /*require_labels=*/true);
  return set;
}

BoostedModel train_calibrator(const TrainSpec& spec, const TrainingSet& set, const TrainOptions& options) {
  TrainParams params = spec.params;
  params.num_classes = spec.clean_corpus.meta.k;
  BoostedModel model = train(set.train, params, options);
  model.attributes[kAttrFeatureConfig] = feature_config_to_json(spec.feature_config);
  model.attributes[kAttrTrainMode] = to_string(spec.mode);
  return model;
}

BoostedModel train_calibrator(const TrainSpec& spec, const TrainOptions& options) {
  return train_calibrator(spec, prepare_training(spec), options);
}

BoostedModel make_baseline_calibrator(const FeatureConfig& config, std::size_t k, std::size_t rep_dim) {
  validate(config);
  TrainParams params;
  params.num_classes = static_cast<int>(k);
  BoostedModel model = make_untrained_model(params, feature_layout(config, k, rep_dim));
  model.attributes[kAttrFeatureConfig] = feature_config_to_json(config);
  model.attributes[kAttrTrainMode] = "baseline";
  return model;
}

FeatureConfig model_feature_config(const BoostedModel& model) {
  auto it = model.attributes.find(kAttrFeatureConfig);
  if (it == model.attributes.end()) throw SchemaError("model does not record its feature config");
  return feature_config_from_json(it->second);
}

std::vector<int> rerank(const BoostedModel& model, const FeatureMatrix& matrix) {
  if (matrix.layout != model.feature_layout) throw InvalidArgument("feature layout differs from the model's layout");
  std::vector<int> choices(matrix.rows);
  for (std::size_t i = 0; i < matrix.rows; ++i) choices[i] = predict_class(model, matrix.row(i));
  return choices;
}

std::vector<int> rerank(const BoostedModel& model, const Corpus& corpus) {
  if (corpus.empty()) return {};
  if (corpus.meta.k != model.num_classes()) {
    throw InvalidArgument("corpus has k=" + std::to_string(corpus.meta.k) + " but the model has " +
                          std::to_string(model.num_classes()) + " classes");
  }
  return rerank(model, featurize_corpus(corpus, model_feature_config(model)));
}

EvalRow evaluate_set(const BoostedModel& model, const std::string& name, const Corpus& corpus,
                     const std::string& mode) {
  require_labeled(corpus, name);
  EvalRow row;
  row.name = name;
  row.mode = mode;
  row.n = corpus.size();
  if (corpus.empty()) return row;

  const std::vector<int> chosen = rerank(model, corpus);
  std::vector<int> labels(corpus.size());
  std::transform(corpus.examples.begin(), corpus.examples.end(), labels.begin(),
                 [](const CandidateSet& ex) { return *ex.label; });
  const std::vector<int> baseline(corpus.size(), 0);

  std::size_t hits = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) hits += chosen[i] == labels[i] ? 1 : 0;
  row.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(corpus.size());

  const CorpusScores b = corpus_scores(corpus, baseline);
  const CorpusScores c = corpus_scores(corpus, chosen);
  const CorpusScores o = corpus_scores(corpus, labels);
  row.baseline_em = b.em;
  row.baseline_f1 = b.f1;
  row.calibrated_em = c.em;
  row.calibrated_f1 = c.f1;
  row.oracle_em = o.em;
  row.oracle_f1 = o.f1;
  return row;
}

EvalReport evaluate(const BoostedModel& model, const std::vector<std::pair<std::string, Corpus>>& held_out,
                    const std::string& mode) {
  EvalReport report;
  for (const auto& [name, corpus] : held_out) report.rows.push_back(evaluate_set(model, name, corpus, mode));
  return report;
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "name,mode,n,acc,baseline_em,baseline_f1,calibrated_em,calibrated_f1,oracle_em,oracle_f1\n";
  char buf[256];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", r.n, r.accuracy, r.baseline_em,
                  r.baseline_f1, r.calibrated_em, r.calibrated_f1, r.oracle_em, r.oracle_f1);
    out << r.name << ',' << r.mode << ',' << buf << '\n';
  }
}

void save_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_report_csv(report, out);
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

void print_report(const EvalReport& report, std::ostream& out) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-22s %-13s %6s %7s | %7s %7s | %7s %7s | %7s %7s\n", "test set", "mode", "n",
                "acc", "base EM", "base F1", "cal EM", "cal F1", "orc EM", "orc F1");
  out << buf;
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-22s %-13s %6zu %7.2f | %7.2f %7.2f | %7.2f %7.2f | %7.2f %7.2f\n",
                  r.name.c_str(), r.mode.c_str(), r.n, r.accuracy, r.baseline_em, r.baseline_f1, r.calibrated_em,
                  r.calibrated_f1, r.oracle_em, r.oracle_f1);
    out << buf;
  }
}

}  // namespace qarerank
