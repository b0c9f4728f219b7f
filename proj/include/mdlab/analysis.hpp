// Copyright 2026 The mdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mdlab/corpus.hpp"
#include "mdlab/denoiser.hpp"

namespace mdlab {

// Top-1 and top-2 probabilities of a Zipf(s, N) law.
struct ZipfParams {
  double s = 0.0;
  std::int64_t N = 0;
  double omega1 = 0.0;
  double omega2 = 0.0;
};

// omega1 = 1 / sum_{k=1..N} k^-s (compensated, smallest terms first),
// omega2 = 2^-s * omega1.
ZipfParams zipf_top_probs(double s, std::int64_t N);

// Parameters matching a chain built by make_zipf_chain_spec: the profile is
// renormalized over min(N, state_count) ranks.
ZipfParams chain_zipf_params(const MarkovChainSpec& spec);

// Upper bound on the largest position-n marginal of a chain whose rows are
// permutations of the Zipf profile:
//   w2 / (1 - (w1 - w2)) + (w1 - w2)^n (1 - w1) / (1 - (w1 - w2)).
// Exactly omega1 at n = 1.
double marginal_upper_bound(const ZipfParams& params, int n);

// Limit of marginal_upper_bound as n grows: w2 / (1 - (w1 - w2)).
double bound_limit(const ZipfParams& params);

struct BoundCurve {
  ZipfParams params;
  std::vector<double> values;  // values[n - 1] = bound at position n
};

BoundCurve bound_curve(const ZipfParams& params, int n_max);

// p^(-1/n).
double ppl(double probability, int n);

struct ParallelMetrics {
  double m1 = 0.0;  // min p_i
  double m2 = 0.0;  // prod p_i
  double m3 = 0.0;  // max(0, sum p_i - (n - 1))
};

ParallelMetrics parallel_metrics(std::span<const double> p);

struct PplRow {
  int k = 0;
  double ppl = 0.0;
};

// Row k: ppl(prod_{n=1..k} marginal_upper_bound(params, n), k).
std::vector<PplRow> ppl_table(const ZipfParams& params, int max_parallel);

// Mean over prompts of each position's row maximum, one denoiser pass per
// prompt. Prompts hold MASK at the positions to be continued.
std::vector<double> max_prob_profile(const Denoiser& denoiser,
                                     std::span<const std::vector<TokenId>> prompts);

struct Homogenization {
  std::vector<TokenId> argmax;  // one-shot greedy prediction per position
  // Most frequent argmax among masked positions (lowest id on ties); only a
  // token predicted at two or more positions counts as collapse.
  std::optional<TokenId> mode_token;
  // Distance of a masked position to the nearest observed token on its left
  // (position + 1 when there is none), and the share of masked positions at
  // that distance predicting mode_token.
  std::vector<std::size_t> distances;
  std::vector<double> collapse_fraction;
  std::vector<std::size_t> count_at_distance;
  std::size_t longest_run = 0;  // longest constant run of argmax over masked positions
  TokenId longest_run_token = 0;
};

Homogenization homogenization_score(const Denoiser& denoiser, std::span<const TokenId> prompt);

struct HomogenizationSummary {
  std::vector<std::size_t> distances;
  std::vector<double> collapse_fraction;  // pooled over prompts
  double mean_longest_run = 0.0;
};

HomogenizationSummary homogenization_summary(const Denoiser& denoiser,
                                             std::span<const std::vector<TokenId>> prompts);

// `count` prompts: corpus entries drawn by weight, first `prompt_length`
// tokens kept and the rest set to MASK.
std::vector<std::vector<TokenId>> prompt_battery(const Corpus& corpus, int count,
                                                 std::size_t prompt_length, std::uint64_t seed);

// CSV writers; floats with six decimals.
void write_bound_csv(std::ostream& out, const BoundCurve& curve);
void write_ppl_csv(std::ostream& out, std::span<const PplRow> rows);
// "n,mean_max_prob,bound" (bound column only when `bound` is given).
void write_profile_csv(std::ostream& out, std::span<const double> profile,
                       const ZipfParams* bound = nullptr);
void write_homogenization_csv(std::ostream& out, std::span<const std::size_t> distances,
                              std::span<const double> collapse_fraction);

}  // namespace mdlab
