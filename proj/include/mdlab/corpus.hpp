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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdlab/sequence.hpp"

namespace mdlab {

// Token inventory. `size` counts every category including MASK and EOT.
class Vocab {
 public:
  Vocab(int size, TokenId mask_id, TokenId eot_id, std::vector<std::string> labels = {});

  int size() const { return size_; }
  TokenId mask_id() const { return mask_id_; }
  TokenId eot_id() const { return eot_id_; }
  bool has_labels() const { return !labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }

  bool contains(TokenId id) const { return id >= 0 && id < size_; }
  bool is_special(TokenId id) const { return id == mask_id_ || id == eot_id_; }

  // Label when present, decimal id otherwise.
  std::string name(TokenId id) const;

  // Resolves a label, or a decimal id when no label matches.
  std::optional<TokenId> find(std::string_view text) const;

 private:
  int size_;
  TokenId mask_id_;
  TokenId eot_id_;
  std::vector<std::string> labels_;
};

struct CorpusEntry {
  std::vector<TokenId> tokens;
  double weight = 0.0;
};

// Finite weighted multiset of fixed-length sequences. Weights are stored as
// given; probability() divides by their total.
class Corpus {
 public:
  Corpus(Vocab vocab, std::size_t length, std::vector<CorpusEntry> entries,
         bool truncated = false);

  const Vocab& vocab() const { return vocab_; }
  std::size_t length() const { return length_; }
  const std::vector<CorpusEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double total_weight() const { return total_weight_; }
  double probability(std::size_t i) const { return entries_[i].weight / total_weight_; }

  // True when the corpus keeps only the highest-probability paths of a larger
  // distribution (renormalized).
  bool truncated() const { return truncated_; }

 private:
  Vocab vocab_;
  std::size_t length_;
  std::vector<CorpusEntry> entries_;
  double total_weight_ = 0.0;
  bool truncated_ = false;
};

// ---------------------------------------------------------------------------
// Toy corpus: 100 sequences of length 5, "x1 x2 C D E_i" with
// (x1, x2) counts AB:34, AB':21, A'B:35, A'B':10 and E_i unique.
// Ids follow construction order: A=0, A'=1, B=2, B'=3, C=4, D=5,
// E1..E100 = 6..105, MASK = 106, EOT = 107.
namespace toy {
inline constexpr TokenId kA = 0;
inline constexpr TokenId kAPrime = 1;
inline constexpr TokenId kB = 2;
inline constexpr TokenId kBPrime = 3;
inline constexpr TokenId kC = 4;
inline constexpr TokenId kD = 5;
inline constexpr TokenId kFirstE = 6;
inline constexpr int kNumE = 100;
inline constexpr TokenId kMask = 106;
inline constexpr TokenId kEot = 107;
inline constexpr int kVocabSize = 108;
inline constexpr std::size_t kLength = 5;
}  // namespace toy

Corpus build_toy_corpus();

// ---------------------------------------------------------------------------
// Markov chains with Zipfian rows.

enum class PermutationRule {
  kCyclicShift,  // row i is the Zipf profile rotated right by i; peak at column i
  kRandom,       // peaks follow a random permutation; remaining mass shuffled
};

std::string_view to_string(PermutationRule rule);
PermutationRule parse_permutation_rule(std::string_view text);

struct MarkovChainSpec {
  int state_count = 0;
  std::vector<double> initial;                  // state_count
  std::vector<std::vector<double>> transition;  // state_count x state_count, row-stochastic
  double zipf_s = 1.0;
  std::int64_t zipf_N = 0;
  PermutationRule permutation_rule = PermutationRule::kCyclicShift;
  std::uint64_t permutation_seed = 0;
};

// Zipf(s, N) probabilities truncated to `count` ranks and renormalized over
// min(N, count) entries (ranks past N get zero).
std::vector<double> zipf_profile(double s, std::int64_t N, int count);

// Rows are permutations of the truncated Zipf profile with peaks forming a
// permutation. The initial distribution is itself a permutation of the
// profile (peak at state 0 for the cyclic rule).
MarkovChainSpec make_zipf_chain_spec(int state_count, double s, std::int64_t N,
                                     PermutationRule rule = PermutationRule::kCyclicShift,
                                     std::uint64_t seed = 0);

// Throws ConfigError naming the first violated invariant.
void validate(const MarkovChainSpec& spec);

struct EnumerationOptions {
  std::uint64_t budget = 10'000'000;       // max paths for exhaustive enumeration
  std::optional<std::uint64_t> top_k;      // keep the k most probable paths instead
};

// Path distribution of an arbitrary chain (initial + row-stochastic
// transition) as a corpus over states 0..S-1 with MASK = S and EOT = S+1.
Corpus build_markov_corpus(std::span<const double> initial,
                           const std::vector<std::vector<double>>& transition,
                           std::size_t length, const EnumerationOptions& options = {});

Corpus build_zipf_chain_corpus(const MarkovChainSpec& spec, std::size_t length,
                               const EnumerationOptions& options = {});

// Exact position marginals initial^T * transition^(n-1) for n = 1..horizon.
std::vector<std::vector<double>> chain_marginals(std::span<const double> initial,
                                                 const std::vector<std::vector<double>>& transition,
                                                 std::size_t horizon);

// ---------------------------------------------------------------------------
// Enumeration oracles. `observed` has the corpus length; positions holding
// the vocab's mask_id are unobserved.

using ConditionalMarginals = std::map<std::size_t, std::vector<double>>;

ConditionalMarginals oracle_conditional_marginals(const Corpus& corpus,
                                                  std::span<const TokenId> observed);

double oracle_joint(const Corpus& corpus, std::span<const TokenId> observed,
                    std::span<const Assignment> query);

struct JointArgmax {
  std::vector<TokenId> tokens;  // aligned with the requested positions
  double probability = 0.0;
};

// Most probable joint assignment of `positions` given `observed`; ties go to
// the lexicographically smallest token tuple.
JointArgmax oracle_joint_argmax(const Corpus& corpus, std::span<const TokenId> observed,
                                std::span<const std::size_t> positions);

// ---------------------------------------------------------------------------
// Text format: header "K L mask_id eot_id", then "weight id id ..." per entry.

void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus read_corpus(std::istream& in);

}  // namespace mdlab
