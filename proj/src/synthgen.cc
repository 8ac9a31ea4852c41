#include "qarerank/synthgen.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qarerank/error.h"
#include "qarerank/features.h"
#include "qarerank/random.h"

namespace qarerank {

namespace {

constexpr double kCodeAmplitude = 1.0;
constexpr double kLayerNoise = 0.3;
constexpr std::uint64_t kDomainStream = 0x444f4dULL;

// Four-letter consonant-vowel words; none can collide with an article and
// none contains punctuation.
const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    const std::string consonants = "bdfgklmnprstvz";
    const std::string vowels = "aeiou";
    std::vector<std::string> out;
    for (char c1 : consonants)
      for (char v1 : vowels)
        for (char c2 : consonants)
          for (char v2 : vowels) out.push_back(std::string{c1, v1, c2, v2});
    return out;
  }();
  return words;
}

std::string word(Rng& rng) {
  const auto& v = vocabulary();
  return v[rng.below(v.size())];
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s.push_back(' ');
    s += t;
  }
  return s;
}

std::vector<std::string> random_words(Rng& rng, std::size_t count) {
  std::vector<std::string> out(count);
  for (auto& w : out) w = word(rng);
  return out;
}

// Distinct words, so that any strict subset of the gold tokens has F1 < 1.
std::vector<std::string> distinct_words(Rng& rng, std::size_t count) {
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w = word(rng);
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(std::move(w));
  }
  return out;
}

// A span that overlaps the gold tokens without matching them.
std::string distractor(Rng& rng, const std::vector<std::string>& gold) {
  std::vector<std::string> tokens;
  std::vector<std::string> subset = gold;
  rng.shuffle(std::span<std::string>(subset));
  const std::size_t keep = rng.below(gold.size() + 1);
  tokens.assign(subset.begin(), subset.begin() + static_cast<std::ptrdiff_t>(keep));
  std::size_t extra = rng.below(3);
  if (keep == gold.size() && extra == 0) extra = 1;
  if (keep == 0 && extra == 0) extra = 1;
  for (std::size_t i = 0; i < extra; ++i) {
    std::string w = word(rng);
    while (std::find(gold.begin(), gold.end(), w) != gold.end()) w = word(rng);
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(rng.below(tokens.size() + 1)), std::move(w));
  }
  return join(tokens);
}

// Gold-equivalent surface variation that normalization removes.
std::string decorate(Rng& rng, std::string text) {
  switch (rng.below(4)) {
    case 0:
      return "the " + text;
    case 1:
      text[0] = static_cast<char>(text[0] - 'a' + 'A');
      return text;
    case 2:
      return text + ".";
    default:
      return text;
  }
}

// Code dimension (and sign) assigned to each non-zero rank in a domain.
struct CodeLayout {
  std::vector<std::size_t> dim;  // indexed by rank
  double sign = 1.0;
};

CodeLayout code_layout(int domain, int k, int l) {
  std::vector<std::size_t> dims(static_cast<std::size_t>(l));
  std::iota(dims.begin(), dims.end(), 0);
  CodeLayout layout;
  if (domain != 0) {
    Rng rng(derive_seed(kDomainStream, static_cast<std::uint64_t>(domain)));
    rng.shuffle(std::span<std::size_t>(dims));
    layout.sign = -1.0;
  }
  layout.dim.assign(static_cast<std::size_t>(k), 0);
  for (int b = 1; b < k; ++b) layout.dim[static_cast<std::size_t>(b)] = dims[static_cast<std::size_t>(b - 1) % dims.size()];
  return layout;
}

CandidateSet make_example(const ShiftProfile& p, const CodeLayout& code, std::size_t index, int best) {
  Rng rng(derive_seed(p.noise_seed, index, static_cast<std::uint64_t>(p.domain) + 1));
  const auto k = static_cast<std::size_t>(p.k);
  const auto b = static_cast<std::size_t>(best);

  CandidateSet ex;
  ex.id = p.name + "-" + std::to_string(index);

  const bool unanswerable = rng.uniform() < p.unanswerable_rate;
  const std::vector<std::string> gold_tokens = distinct_words(rng, 1 + rng.below(4));
  const std::string gold = join(gold_tokens);
  if (!unanswerable) {
    ex.gold_answers.push_back(gold);
    if (rng.uniform() < 0.3) ex.gold_answers.push_back(decorate(rng, gold));
  }

  // Candidate texts.
  ex.candidates.resize(k);
  bool used_empty = unanswerable;
  for (std::size_t j = 0; j < k; ++j) {
    std::string& text = ex.candidates[j].text;
    if (j == b) {
      text = unanswerable ? std::string() : decorate(rng, gold);
    } else if (unanswerable) {
      text = join(random_words(rng, 1 + rng.below(4)));
    } else if (!used_empty && rng.uniform() < 0.1) {
      used_empty = true;  // a no-answer prediction on an answerable question
    } else {
      text = distractor(rng, gold_tokens);
    }
  }

  // Span scores fall with rank; the start/end split is balanced unless the
  // logit cue marks the planted candidate.
  std::vector<double> score(k);
  score[0] = rng.uniform(3.0, 9.0);
  for (std::size_t j = 1; j < k; ++j) score[j] = score[j - 1] - p.logit_scale * rng.uniform(0.2, 1.2);
  const bool logit_cue = b != 0 && rng.uniform() < p.logit_cue_rate * p.signal_strength;
  std::vector<double> sums(k);
  for (std::size_t j = 0; j < k; ++j) {
    Candidate& c = ex.candidates[j];
    if (logit_cue && j == b) {
      // Same span score, but nearly all of it on the start side.
      const double skew = rng.uniform(3.0, 4.0);
      c.start_logit = score[j] + skew;
      c.end_logit = -skew;
    } else {
      c.start_logit = score[j] * rng.uniform(0.4, 0.6);
      c.end_logit = score[j] - c.start_logit;
    }
    sums[j] = c.start_logit + c.end_logit;
  }
  // Probabilities are the softmax over the k span scores, so they are
  // non-increasing with rank.
  const std::vector<double> zeros(k, 0.0);
  const std::vector<double> probs = scaled_softmax(sums, zeros, 1.0);
  for (std::size_t j = 0; j < k; ++j) ex.candidates[j].prob = probs[j];
  for (std::size_t j = 1; j < k; ++j) {
    ex.candidates[j].prob = std::min(ex.candidates[j].prob, ex.candidates[j - 1].prob);
  }

  // Hidden layers: noise plus, when planted, the domain code of b in every
  // layer. The embedding layer never carries the code.
  const auto l = static_cast<std::size_t>(p.l);
  const bool planted = b != 0 && !logit_cue && rng.uniform() < p.signal_strength;
  std::vector<double> embedding(l);
  for (double& v : embedding) v = kLayerNoise * rng.normal();
  std::vector<std::vector<double>> layers(static_cast<std::size_t>(p.num_layers), std::vector<double>(l));
  for (auto& layer : layers) {
    for (double& v : layer) v = kLayerNoise * rng.normal();
    if (planted) layer[code.dim[b]] += code.sign * kCodeAmplitude;
  }
  RepVectors rep;
  rep.hidden_avg = average_hidden(layers, embedding);
  rep.hidden_last = layers.back();
  rep.embedding = std::move(embedding);
  rep.num_layers = p.num_layers;
  ex.rep = std::move(rep);

  // Question and context are filler around the answer tokens.
  ex.question = join(random_words(rng, 5 + rng.below(11))) + "?";
  std::vector<std::string> context = random_words(rng, 40 + rng.below(111));
  const std::size_t at = rng.below(context.size());
  context.insert(context.begin() + static_cast<std::ptrdiff_t>(at), gold_tokens.begin(), gold_tokens.end());
  ex.context = join(context) + ".";
  return ex;
}

}  // namespace

void validate(const ShiftProfile& p) {
  if (p.n == 0) throw InvalidArgument("profile '" + p.name + "': n must be positive");
  if (p.k < 1) throw InvalidArgument("profile '" + p.name + "': k must be positive");
  if (p.l < 1) throw InvalidArgument("profile '" + p.name + "': l must be positive");
  if (p.num_layers < 1) throw InvalidArgument("profile '" + p.name + "': num_layers must be positive");
  if (p.p_best_rank.size() != static_cast<std::size_t>(p.k)) {
    throw InvalidArgument("profile '" + p.name + "': p_best_rank must have k entries");
  }
  double total = 0.0;
  for (double w : p.p_best_rank) {
    if (!(w >= 0.0)) throw InvalidArgument("profile '" + p.name + "': negative rank probability");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("profile '" + p.name + "': p_best_rank must sum to 1");
  for (double v : {p.signal_strength, p.logit_cue_rate, p.unanswerable_rate}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("profile '" + p.name + "': rates must lie in [0,1]");
  }
  if (!(p.logit_scale > 0.0)) throw InvalidArgument("profile '" + p.name + "': logit_scale must be positive");
}

std::vector<double> rank_distribution(double top, int k) {
  if (k < 1 || !(top >= 0.0 && top <= 1.0)) throw InvalidArgument("rank_distribution: bad arguments");
  std::vector<double> p(static_cast<std::size_t>(k), 0.0);
  p[0] = top;
  if (k == 1) {
    p[0] = 1.0;
    return p;
  }
  // Geometric-like tail: ranks 1-3 hold about 80% of the remaining mass.
  double z = 0.0;
  std::vector<double> w(static_cast<std::size_t>(k), 0.0);
  for (int j = 1; j < k; ++j) {
    w[static_cast<std::size_t>(j)] = std::pow(0.6, j - 1);
    z += w[static_cast<std::size_t>(j)];
  }
  for (int j = 1; j < k; ++j) p[static_cast<std::size_t>(j)] = (1.0 - top) * w[static_cast<std::size_t>(j)] / z;
  return p;
}

ShiftProfile clean_profile(std::size_t n, std::uint64_t seed) {
  ShiftProfile p;
  p.name = "clean";
  p.n = n;
  p.p_best_rank = rank_distribution(0.85, p.k);
  p.noise_seed = seed;
  return p;
}

ShiftProfile shifted_profile(const std::string& name, int domain, double top_mass, std::size_t n,
                             std::uint64_t seed) {
  ShiftProfile p;
  p.name = name;
  p.n = n;
  p.domain = domain;
  p.p_best_rank = rank_distribution(top_mass, p.k);
  p.noise_seed = seed;
  p.logit_scale = 1.4;
  return p;
}

GeneratedCorpus generate(const ShiftProfile& profile) {
  validate(profile);
  GeneratedCorpus out;
  out.corpus.meta.source_name = profile.name;
  out.corpus.meta.k = profile.k;
  out.corpus.meta.hidden_dim = profile.l;
  out.corpus.examples.reserve(profile.n);
  out.planted.reserve(profile.n);

  const CodeLayout code = code_layout(profile.domain, profile.k, profile.l);
  Rng rank_rng(derive_seed(profile.noise_seed, static_cast<std::uint64_t>(profile.domain), 0x52414e4bULL));
  for (std::size_t i = 0; i < profile.n; ++i) {
    const int best = static_cast<int>(rank_rng.categorical(profile.p_best_rank));
    out.planted.push_back(best);
    out.corpus.examples.push_back(make_example(profile, code, i, best));
  }
  return out;
}

std::vector<ShiftProfile> standard_profiles(std::uint64_t seed) {
  return {clean_profile(kSuiteCleanSize, seed),
          shifted_profile("shift_a", 1, 0.55, kSuiteShiftSize, seed),
          shifted_profile("shift_b", 2, 0.60, kSuiteShiftSize, seed),
          shifted_profile("shift_c", 3, 0.50, kSuiteShiftSize, seed),
          shifted_profile("shift_d", 4, 0.65, kSuiteShiftSize, seed)};
}

StandardSuite standard_suite(std::uint64_t seed) {
  const auto profiles = standard_profiles(seed);
  StandardSuite suite;
  suite.clean = generate(profiles.front());
  for (std::size_t i = 1; i < profiles.size(); ++i) suite.shifts.emplace_back(profiles[i].name, generate(profiles[i]));
  return suite;
}

}  // namespace qarerank
