#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qarerank/corpus.h"

namespace qarerank {

// Parameters of one synthetic candidate-dump population.
//
// Every example plants a best rank b drawn from p_best_rank. Candidate b is
// the only one scoring F1 = 1 against the gold answers, while candidate 0
// keeps the highest model probability. With probability signal_strength the
// hidden layers carry a code for b along a domain-specific set of dimensions;
// with probability logit_cue_rate * signal_strength candidate b also gets an
// unusually lopsided start/end logit pair.
struct ShiftProfile {
  std::string name = "clean";
  std::size_t n = 1000;
  int k = kDefaultTopK;
  int l = 16;
  std::vector<double> p_best_rank;
  double signal_strength = 0.8;
  std::uint64_t noise_seed = 0;
  int domain = 0;  // 0 = clean code layout; others permute and negate it
  double logit_cue_rate = 0.3;
  double logit_scale = 1.0;  // >1 sharpens the candidate distribution
  double unanswerable_rate = 0.25;
  int num_layers = 4;
};

void validate(const ShiftProfile& profile);

// Rank distribution with `top` mass on rank 0 and the rest decaying over
// ranks 1..k-1, concentrated on ranks 1-3.
std::vector<double> rank_distribution(double top, int k);

ShiftProfile clean_profile(std::size_t n, std::uint64_t seed);
ShiftProfile shifted_profile(const std::string& name, int domain, double top_mass, std::size_t n,
                             std::uint64_t seed);

struct GeneratedCorpus {
  Corpus corpus;             // unlabeled
  std::vector<int> planted;  // planted best rank per example
};

GeneratedCorpus generate(const ShiftProfile& profile);

inline constexpr std::size_t kSuiteCleanSize = 2000;
inline constexpr std::size_t kSuiteShiftSize = 1200;

struct StandardSuite {
  GeneratedCorpus clean;
  std::vector<std::pair<std::string, GeneratedCorpus>> shifts;  // four sets
};

// Profiles of the standard suite, clean first.
std::vector<ShiftProfile> standard_profiles(std::uint64_t seed);
StandardSuite standard_suite(std::uint64_t seed);

}  // namespace qarerank
