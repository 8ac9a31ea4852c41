#include "qarerank/analysis.h"

#include <cstdio>
#include <fstream>

#include "qarerank/error.h"
#include "qarerank/squad_eval.h"

namespace qarerank {

namespace {

void require_labels(const Corpus& corpus) {
  for (const CandidateSet& ex : corpus.examples) {
    if (!ex.label) throw InvalidArgument("analysis needs a labeled corpus (example '" + ex.id + "' has no label)");
  }
}

std::vector<double> baseline_f1s(const Corpus& corpus) {
  std::vector<double> f1s;
  f1s.reserve(corpus.size());
  for (const CandidateSet& ex : corpus.examples) f1s.push_back(score(ex.candidates.front().text, ex.gold_answers).f1);
  return f1s;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::string> bad_cases(const Corpus& corpus) {
  require_labels(corpus);
  const auto f1s = baseline_f1s(corpus);
  const double avg = mean(f1s);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (f1s[i] < avg) ids.push_back(corpus.examples[i].id);
  }
  return ids;
}

AnalysisReport better_candidate_stats(const Corpus& corpus) {
  require_labels(corpus);
  AnalysisReport r;
  r.n = corpus.size();
  r.rank_histogram.assign(static_cast<std::size_t>(corpus.meta.k), 0);
  const auto f1s = baseline_f1s(corpus);
  r.mean_f1 = mean(f1s);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int label = *corpus.examples[i].label;
    ++r.rank_histogram[static_cast<std::size_t>(label)];
    const bool better = label != 0;
    if (better) ++r.better_size;
    if (f1s[i] < r.mean_f1) {
      ++r.bad_case_count;
      if (better) ++r.bad_with_better;
    }
  }
  return r;
}

void emit_histogram_csv(const std::map<std::string, AnalysisReport>& reports, const std::filesystem::path& path) {
  std::size_t k = static_cast<std::size_t>(kDefaultTopK);
  if (!reports.empty()) k = reports.begin()->second.rank_histogram.size();
  for (const auto& [name, r] : reports) {
    if (r.rank_histogram.size() != k) throw InvalidArgument("reports disagree on k ('" + name + "')");
  }
  auto out = open_out(path);
  out << "dataset";
  for (std::size_t j = 0; j < k; ++j) out << ",rank_" << j;
  out << '\n';
  for (const auto& [name, r] : reports) {
    out << name;
    for (std::size_t c : r.rank_histogram) out << ',' << c;
    out << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

void emit_stats_csv(const std::map<std::string, AnalysisReport>& reports, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dataset,size,better_size,mean_f1,bad_cases,bad_with_better,bad_with_better_pct\n";
  char buf[128];
  for (const auto& [name, r] : reports) {
    const double pct = r.bad_case_count ? 100.0 * static_cast<double>(r.bad_with_better) /
                                              static_cast<double>(r.bad_case_count)
                                        : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%zu,%zu,%.2f", r.n, r.better_size, r.mean_f1, r.bad_case_count,
                  r.bad_with_better, pct);
    out << name << ',' << buf << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

void print_analysis(const std::map<std::string, AnalysisReport>& reports, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %12s %10s %16s\n", "dataset", "size", "better-size", "bad-cases",
                "bad-with-better");
  out << buf;
  for (const auto& [name, r] : reports) {
    std::snprintf(buf, sizeof buf, "%-24s %8zu %12zu %10zu %16zu\n", name.c_str(), r.n, r.better_size,
                  r.bad_case_count, r.bad_with_better);
    out << buf;
  }
}

}  // namespace qarerank
