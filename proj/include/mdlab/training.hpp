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
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "mdlab/corpus.hpp"
#include "mdlab/denoiser.hpp"
#include "mdlab/neural.hpp"
#include "mdlab/random.hpp"
#include "mdlab/schedule.hpp"

namespace mdlab {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class Regime { kStandard, kBlockwiseReverse };

// How blockwise items choose their in-block mask pattern.
enum class PatternMode { kSample, kEnumerate };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

struct TrainConfig {
  int batch_size = 32;
  int steps = 1000;
  double learning_rate = 1e-3;
  OptimizerConfig optimizer;
  double t_epsilon = 1e-3;
  std::uint64_t seed = 0;
  Regime regime = Regime::kStandard;
  int block_size = 4;
  PatternMode pattern_mode = PatternMode::kSample;
  // Exponential moving average of the parameters, returned as the trained
  // model; 0 returns the last iterate.
  double ema_decay = 0.999;

  void validate() const;
};

struct TrainStepRecord {
  int step = 0;
  double loss = 0.0;
  double t_mean = 0.0;
  double masked_fraction = 0.0;
};

// Half-open position range [begin, end).
struct BlockSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const BlockSpan&, const BlockSpan&) = default;
};

// Distinct in-block mask patterns (bit b set = block position b masked)
// seen per block, keyed by block begin.
struct PatternCoverage {
  int block_size = 0;
  std::map<std::size_t, std::set<std::uint32_t>> patterns;  // keyed by block begin
  std::map<std::size_t, std::size_t> block_sizes;


  // Number of distinct patterns at the block with the fewest.
  std::size_t min_patterns_per_full_block() const;
};

struct TrainResult {
  NeuralDenoiser model;
  Regime regime = Regime::kStandard;
  std::vector<TrainStepRecord> trace;
  std::optional<PatternCoverage> coverage;
  std::size_t clamped_probabilities = 0;
};

// loss_weight(t) * sum over masked j of -log probs[j][clean[j]]; zero when
// nothing is masked. Probabilities below kProbabilityFloor are clamped and
// counted in `diagnostics`.
double ct_loss(const DenoiserOutput& output, std::span<const TokenId> clean,
               const MaskedSeq& input, const Schedule& schedule,
               LossDiagnostics* diagnostics = nullptr);

// Same objective for an arbitrary denoiser on a prepared item.
double evaluate_item_loss(const Denoiser& denoiser, const TrainingItem& item,
                          LossDiagnostics* diagnostics = nullptr);

// Index sampler over corpus weights.
class CorpusSampler {
 public:
  explicit CorpusSampler(const Corpus& corpus);
  std::size_t draw(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
};

// Standard items: entry by weight, t ~ Uniform(t_epsilon, 1], forward mask,
// targets = masked positions, weight = loss_weight(t). Draw order per item:
// entry, t, then one uniform per position.
std::vector<TrainingItem> sample_standard_batch(const Corpus& corpus, const CorpusSampler& sampler,
                                                int batch_size, double t_epsilon,
                                                const Schedule& schedule, Rng& rng);

// Blocks from the end of the sequence toward the start; a residual shorter
// than block_size becomes the leftmost block.
std::vector<BlockSpan> reverse_blocks(std::size_t length, std::size_t block_size);

// Supervision items of one sequence: per block (last to first) the prefix is
// clean, the block carries a non-empty mask pattern, the suffix is MASK.
// Targets are the masked positions inside the block; t = masked count / L.
std::vector<TrainingItem> blockwise_items(std::span<const TokenId> clean, TokenId mask_id,
                                          std::size_t block_size, PatternMode mode,
                                          const Schedule& schedule, Rng& rng,
                                          PatternCoverage* coverage = nullptr);

TrainResult train_standard(const Corpus& corpus, const TrainConfig& config,
                           const Schedule& schedule, const NeuralDenoiserConfig& model_config);

TrainResult train_blockwise_reverse(const Corpus& corpus, const TrainConfig& config,
                                    const Schedule& schedule,
                                    const NeuralDenoiserConfig& model_config);

// Dispatches on config.regime.
TrainResult train(const Corpus& corpus, const TrainConfig& config, const Schedule& schedule,
                  const NeuralDenoiserConfig& model_config);

struct NelboEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  int samples = 0;
};

// Monte-Carlo estimate of the T-step NELBO:
//   sum_{i=1..T} (alpha(s_i) - alpha(t_i)) / (1 - alpha(t_i)) * 1[x_{t_i} = m] * CE,
// s_i = (i-1)/T, t_i = i/T. The i = 1 term is the reconstruction term; the
// prior term vanishes because x_1 is all-MASK under both q and p. Each sample
// draws one forward trajectory (position j is masked at t iff v_j >= alpha(t)),
// so every x_{t_i} has its exact marginal and only L+1 distinct states need a
// denoiser call.
NelboEstimate nelbo_discrete(const Denoiser& denoiser, std::span<const TokenId> clean,
                             const Schedule& schedule, int T, int mc_samples, std::uint64_t seed);

// sum_i (alpha(s_i) - alpha(t_i)) / (1 - alpha(t_i)); H_T for the linear schedule.
double nelbo_coefficient_sum(const Schedule& schedule, int T);

// sum_i (1 - alpha(t_i)) * coefficient_i, which telescopes to alpha(0) - alpha(1) = 1.
double nelbo_expected_coefficient_sum(const Schedule& schedule, int T);

// "step,regime,loss,t_mean,masked_fraction" with six-decimal floats.
void write_loss_csv(std::ostream& out, std::span<const TrainStepRecord> trace, Regime regime);

}  // namespace mdlab
