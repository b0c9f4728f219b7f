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
#include <string_view>
#include <vector>

#include "mdlab/corpus.hpp"
#include "mdlab/denoiser.hpp"
#include "mdlab/random.hpp"
#include "mdlab/schedule.hpp"

namespace mdlab {

enum class Strategy {
  kConfidence,
  kArOrder,
  kReverseOrder,
  kRandomOrder,
  kParallelK,
  kSemiAr,
  kRandomInit,
};

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

struct Selection {
  bool greedy = true;
  double temperature = 1.0;  // used when !greedy
};

// Where semi-AR blocks start. kLeftmostMasked takes the first `block` masked
// positions; kReversePartition reuses the blockwise training partition
// (blocks counted from the end, residual at the front).
enum class BlockAlignment { kLeftmostMasked, kReversePartition };

struct DecodePolicy {
  Strategy strategy = Strategy::kConfidence;
  int k = 1;                          // parallel_k
  int block = 4;                      // semi_ar
  Strategy inner = Strategy::kConfidence;
  BlockAlignment alignment = BlockAlignment::kLeftmostMasked;
  double rho = 0.1;                   // random_init fill ratio
  int rounds = 5;                     // random_init rounds
  int commits_per_round = 1;          // random_init
  Selection selection;
  bool stop_on_eot = false;
  std::optional<std::size_t> max_positions;

  void validate() const;
};

enum class EventKind { kCommit, kRandomFill, kRemask, kForcedEot };

std::string_view to_string(EventKind kind);

struct DecodeEvent {
  int step = 0;
  EventKind kind = EventKind::kCommit;
  std::size_t position = 0;
  TokenId token = 0;
  double probability = 0.0;  // model probability of `token` at commit time
};

struct DecodeTrace {
  std::vector<TokenId> prompt;
  std::vector<DecodeEvent> events;
  std::vector<TokenId> final_sequence;
  // Row maxima of every position at each denoiser call that led to commits.
  std::vector<std::vector<double>> max_prob_snapshots;
  int steps = 0;

  std::vector<DecodeEvent> commits() const;
  // Committed positions in commit order, one entry per step.
  std::vector<std::vector<Assignment>> commits_by_step() const;
};

// One reverse transition x_t -> x_s: unmasked tokens are copied; each masked
// position stays MASK with probability (1 - alpha(s)) / (1 - alpha(t)) and
// otherwise commits a token from its row. Draws, per masked position left to
// right: one uniform for stay/commit, then one uniform when sampling a token.
MaskedSeq reverse_step(const MaskedSeq& input, const DenoiserOutput& output,
                       const Schedule& schedule, double s, const Selection& selection, Rng& rng);

// Token for row j under `selection`; greedy ties go to the lowest id.
TokenId select_token(const DenoiserOutput& output, std::size_t j, const Selection& selection,
                     Rng& rng);

// `prompt` holds MASK at the positions to generate. Draw order per step:
// strategy draws (random_order position, random_init fill positions and
// tokens) first, then one uniform per committed position (left to right)
// when sampling tokens.
DecodeTrace decode(const Denoiser& denoiser, std::span<const TokenId> prompt,
                   const DecodePolicy& policy, std::uint64_t seed);

// Exact probability of all generated tokens given the prompt.
double joint_prob_of_trace(const Corpus& corpus, std::span<const TokenId> prompt,
                           const DecodeTrace& trace);

struct StepAnnotation {
  int step = 0;
  std::vector<Assignment> committed;
  double joint = 0.0;                  // oracle joint of this step's commits
  std::vector<TokenId> best_tokens;    // best joint over the same positions
  double best_joint = 0.0;
  bool suboptimal = false;
};

struct TraceReport {
  std::vector<StepAnnotation> steps;
  double joint = 0.0;       // all generated tokens given the prompt
  double best_joint = 0.0;  // best over the same positions
  bool consistent = true;   // false when the generated tokens have no support
  bool suboptimal = false;
};

TraceReport annotate_trace(const Corpus& corpus, const DecodeTrace& trace);

// JSON lines: one object per event, then a final record with the sequence
// and, when `report` is given, the joint-probability annotations.
void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace, const Vocab& vocab,
                       const TraceReport* report = nullptr);

}  // namespace mdlab
