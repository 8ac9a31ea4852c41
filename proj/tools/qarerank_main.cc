// qarerank: rerank top-k reading-comprehension answers with a boosted calibrator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qarerank/analysis.h"
#include "qarerank/corpus.h"
#include "qarerank/error.h"
#include "qarerank/features.h"
#include "qarerank/gbdt.h"
#include "qarerank/pipeline.h"
#include "qarerank/run_config.h"
#include "qarerank/squad_eval.h"
#include "qarerank/synthgen.h"

namespace fs = std::filesystem;
using namespace qarerank;

namespace {

int default_threads() {
  if (const char* env = std::getenv("QARERANK_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

FeatureConfig feature_config_from_groups(const std::string& groups, double lambda) {
  FeatureConfig c;
  c.use_lengths = c.use_prob = c.use_logits = c.use_entropy = c.use_scaled_softmax = false;
  c.lambda = lambda;
  for (const std::string& g : split_list(groups)) {
    if (g == "manual") {
      c.use_lengths = c.use_prob = c.use_logits = c.use_entropy = c.use_scaled_softmax = true;
    } else if (g == "rep") {
      c.use_embedding = c.use_hidden_last = c.use_hidden_avg = true;
    } else if (g == "lengths") c.use_lengths = true;
    else if (g == "prob") c.use_prob = true;
    else if (g == "logits") c.use_logits = true;
    else if (g == "entropy") c.use_entropy = true;
    else if (g == "scaled_softmax") c.use_scaled_softmax = true;
    else if (g == "embedding") c.use_embedding = true;
    else if (g == "hidden_last") c.use_hidden_last = true;
    else if (g == "hidden_avg") c.use_hidden_avg = true;
    else throw InvalidArgument("unknown feature group '" + g + "'");
  }
  validate(c);
  return c;
}

void write_choices(const Corpus& corpus, const std::vector<int>& choices, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,choice,text\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ex = corpus.examples[i];
    std::string text = ex.candidates[static_cast<std::size_t>(choices[i])].text;
    std::string quoted = "\"";
    for (char c : text) quoted += (c == '"') ? std::string("\"\"") : std::string(1, c);
    quoted += '"';
    out << ex.id << ',' << choices[i] << ',' << quoted << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

int run_label(const fs::path& in, const fs::path& out) {
  Corpus corpus = load_corpus(in);
  label_corpus(corpus);
  save_corpus(corpus, out);
  std::cout << "labeled " << corpus.size() << " examples -> " << out.string() << '\n';
  return 0;
}

int run_featurize(const fs::path& in, const fs::path& out, const std::string& groups, double lambda,
                  bool with_labels) {
  const Corpus corpus = load_corpus(in);
  const FeatureMatrix m = featurize_corpus(corpus, feature_config_from_groups(groups, lambda), with_labels);
  save_matrix_csv(m, out);
  std::cout << m.rows << " rows x " << m.cols() << " features -> " << out.string() << '\n';
  return 0;
}

int run_train(const fs::path& config_path, const fs::path& out, std::optional<int> threads, bool quiet,
              const fs::path& matrix_path) {
  const RunConfig cfg = load_run_config(config_path);
  TrainOptions options;
  options.num_threads = threads.value_or(cfg.threads.value_or(default_threads()));
  if (!quiet) {
    options.on_round = [](int round, double loss) {
      std::cout << "round " << (round + 1) << " log_loss " << loss << '\n';
    };
  }

  BoostedModel model;
  if (!matrix_path.empty()) {
    const FeatureMatrix m = load_matrix_csv(matrix_path);
    const Corpus clean = load_corpus(cfg.clean_path);
    const auto rep_dim = static_cast<std::size_t>(clean.meta.hidden_dim.value_or(0));
    if (m.layout != feature_layout(cfg.features, static_cast<std::size_t>(clean.meta.k), rep_dim)) {
      throw InvalidArgument("matrix columns do not match the config's feature groups");
    }
    TrainParams params = cfg.params;
    params.num_classes = clean.meta.k;
    model = train(m, params, options);
    model.attributes["feature_config"] = feature_config_to_json(cfg.features);
    model.attributes["train_mode"] = "matrix";
  } else {
    const TrainSpec spec = make_train_spec(cfg);
    const TrainingSet set = prepare_training(spec);
    std::cout << "training on " << set.train.rows << " rows x " << set.train.cols() << " features ("
              << to_string(spec.mode) << ")\n";
    model = train_calibrator(spec, set, options);

    fs::path ids_path = out;
    ids_path += ".ids.csv";
    std::ofstream ids(ids_path, std::ios::trunc);
    ids << "corpus,id\n";
    for (const auto& [name, list] : set.sampled_ids) {
      for (const auto& id : list) ids << name << ',' << id << '\n';
    }
    if (!ids.flush()) throw IoError("cannot write " + ids_path.string());
  }
  save_model(model, out);
  std::cout << "model -> " << out.string() << '\n';
  return 0;
}

int run_rerank(const fs::path& model_path, const fs::path& in, const fs::path& out) {
  const BoostedModel model = load_model(model_path);
  const Corpus corpus = load_corpus(in);
  const std::vector<int> choices = rerank(model, corpus);
  write_choices(corpus, choices, out);
  std::size_t moved = 0;
  for (int c : choices) moved += c != 0 ? 1 : 0;
  std::cout << corpus.size() << " examples, " << moved << " moved off rank 0 -> " << out.string() << '\n';
  return 0;
}

int run_eval(const fs::path& model_path, const std::string& tests, const fs::path& report_path,
             std::string mode) {
  const BoostedModel model = load_model(model_path);
  if (mode.empty()) {
    auto it = model.attributes.find("train_mode");
    mode = it != model.attributes.end() ? it->second : "unknown";
  }
  std::vector<std::pair<std::string, Corpus>> sets;
  for (const std::string& p : split_list(tests)) {
    Corpus c = load_corpus(p);
    std::string name = c.meta.source_name.empty() ? fs::path(p).stem().string() : c.meta.source_name;
    sets.emplace_back(std::move(name), std::move(c));
  }
  if (sets.empty()) throw InvalidArgument("--test names no dump");
  const EvalReport report = evaluate(model, sets, mode);
  save_report_csv(report, report_path);
  print_report(report, std::cout);
  return 0;
}

int run_analyze(const fs::path& in, const fs::path& report_path, fs::path hist_path, bool label_first) {
  Corpus corpus = load_corpus(in);
  if (label_first) label_corpus(corpus);
  std::map<std::string, AnalysisReport> reports;
  const std::string name = corpus.meta.source_name.empty() ? in.stem().string() : corpus.meta.source_name;
  reports[name] = better_candidate_stats(corpus);
  if (hist_path.empty()) {
    hist_path = report_path;
    hist_path.replace_extension();
    hist_path += "_hist.csv";
  }
  emit_stats_csv(reports, report_path);
  emit_histogram_csv(reports, hist_path);
  print_analysis(reports, std::cout);
  return 0;
}

int run_synth(const std::string& profile, std::uint64_t seed, const fs::path& dir, std::size_t n, bool labeled) {
  fs::create_directories(dir);
  std::vector<ShiftProfile> chosen;
  const auto all = standard_profiles(seed);
  if (profile == "standard") {
    chosen = all;
  } else {
    for (const auto& p : all) {
      if (p.name == profile) chosen.push_back(p);
    }
    if (chosen.empty()) throw InvalidArgument("unknown profile '" + profile + "'");
  }
  for (ShiftProfile p : chosen) {
    if (n > 0) p.n = n;
    GeneratedCorpus g = generate(p);
    if (labeled) label_corpus(g.corpus);
    const fs::path out = dir / (p.name + ".json");
    save_corpus(g.corpus, out);
    std::cout << p.name << ": " << g.corpus.size() << " examples -> " << out.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qarerank: boosted calibrator that reranks top-k extractive QA answers"};
  app.require_subcommand(1);

  fs::path in, out, model_path, config_path, report_path, hist_path, matrix_path;
  std::string tests, groups = "manual", profile = "standard", mode;
  double lambda = kDefaultSoftmaxScale;
  bool with_labels = false, quiet = false, label_first = false, labeled = false;
  std::optional<int> threads;
  std::uint64_t seed = 42;
  std::size_t n = 0;

  auto* label = app.add_subcommand("label", "Label the best candidate of every example by F1");
  label->add_option("--in", in, "Input candidate dump")->required();
  label->add_option("--out", out, "Output dump with labels")->required();

  auto* featurize = app.add_subcommand("featurize", "Export the feature matrix of a dump as CSV");
  featurize->add_option("--in", in, "Input candidate dump")->required();
  featurize->add_option("--out", out, "Output CSV")->required();
  featurize->add_option("--features", groups,
                        "Comma-separated groups: manual, rep, lengths, prob, logits, entropy, scaled_softmax, "
                        "embedding, hidden_last, hidden_avg")
      ->capture_default_str();
  featurize->add_option("--lambda", lambda, "Softmax scale for scaled probabilities (> 1)")->capture_default_str();
  featurize->add_flag("--labels", with_labels, "Append the label column (dump must be labeled)");

  auto* train_cmd = app.add_subcommand("train", "Train a calibrator from a run config");
  train_cmd->add_option("--config", config_path, "Run config file")->required();
  train_cmd->add_option("--out", out, "Output model file")->required();
  train_cmd->add_option("--threads", threads, "Worker threads (default: QARERANK_THREADS or 1)");
  train_cmd->add_option("--matrix", matrix_path, "Train on a labeled feature CSV instead of the config's dumps");
  train_cmd->add_flag("--quiet", quiet, "Do not print the per-round loss");

  auto* rerank_cmd = app.add_subcommand("rerank", "Choose one candidate per example");
  rerank_cmd->add_option("--model", model_path, "Model file")->required();
  rerank_cmd->add_option("--in", in, "Input candidate dump")->required();
  rerank_cmd->add_option("--out", out, "Output CSV of chosen indices")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Compare baseline, calibrated and oracle scores");
  eval_cmd->add_option("--model", model_path, "Model file")->required();
  eval_cmd->add_option("--test", tests, "Comma-separated labeled test dumps")->required();
  eval_cmd->add_option("--report", report_path, "Output report CSV")->required();
  eval_cmd->add_option("--mode", mode, "Mode column value (default: the model's training mode)");

  auto* analyze = app.add_subcommand("analyze", "Bad-case and best-rank statistics of a labeled dump");
  analyze->add_option("--in", in, "Input candidate dump")->required();
  analyze->add_option("--report", report_path, "Output statistics CSV")->required();
  analyze->add_option("--hist", hist_path, "Output rank histogram CSV (default: <report>_hist.csv)");
  analyze->add_flag("--label", label_first, "Label the dump before analysing it");

  auto* synth = app.add_subcommand("synth", "Write synthetic candidate dumps");
  synth->add_option("--profile", profile, "standard, clean, shift_a, shift_b, shift_c or shift_d")
      ->capture_default_str();
  synth->add_option("--seed", seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--n", n, "Override the number of examples per dump");
  synth->add_flag("--labeled", labeled, "Write labels into the dumps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*label) return run_label(in, out);
    if (*featurize) return run_featurize(in, out, groups, lambda, with_labels);
    if (*train_cmd) return run_train(config_path, out, threads, quiet, matrix_path);
    if (*rerank_cmd) return run_rerank(model_path, in, out);
    if (*eval_cmd) return run_eval(model_path, tests, report_path, mode);
    if (*analyze) return run_analyze(in, report_path, hist_path, label_first);
    if (*synth) return run_synth(profile, seed, out, n, labeled);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
