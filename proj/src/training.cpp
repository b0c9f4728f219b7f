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

#include "mdlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

std::string_view to_string(Regime regime) {
  return regime == Regime::kStandard ? "standard" : "blockwise";
}

Regime parse_regime(std::string_view text) {
  if (text == "standard") return Regime::kStandard;
  if (text == "blockwise" || text == "blockwise_reverse") return Regime::kBlockwiseReverse;
  throw ConfigError(fmt::format("unknown training regime '{}'", text));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError(fmt::format("learning rate must be positive (got {})", learning_rate));
  if (!(t_epsilon > 0.0 && t_epsilon <= 0.1))
    throw ConfigError(fmt::format("t_epsilon must lie in (0, 0.1] (got {})", t_epsilon));
  if (block_size < 1) throw ConfigError("block size must be >= 1");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0))
    throw ConfigError(fmt::format("ema_decay must lie in [0, 1) (got {})", ema_decay));
  if (block_size > 16) throw ConfigError("block size above 16 is not supported");
  if (optimizer.kind == OptimizerKind::kAdam &&
      !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
        optimizer.beta2 < 1.0 && optimizer.epsilon > 0.0))
    throw ConfigError("adam requires beta1, beta2 in [0, 1) and epsilon > 0");
}

std::size_t PatternCoverage::min_patterns_per_full_block() const {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  bool any = false;
  for (const auto& [begin, seen] : patterns) {
    const auto size = block_sizes.find(begin);
    if (size != block_sizes.end() && size->second != static_cast<std::size_t>(block_size)) continue;
    best = std::min(best, seen.size());
    any = true;
  }
  return any ? best : 0;
}

// ---------------------------------------------------------------------------
// Losses

double ct_loss(const DenoiserOutput& output, std::span<const TokenId> clean,
               const MaskedSeq& input, const Schedule& schedule, LossDiagnostics* diagnostics) {
  if (output.length() != input.size() || clean.size() != input.size())
    throw ConfigError("ct_loss: output, clean and input lengths differ");
  double nll = 0.0;
  bool any = false;
  for (std::size_t j = 0; j < input.size(); ++j) {
    if (!input.masked(j)) continue;
    any = true;
    double p = output.probs(static_cast<Eigen::Index>(j), clean[j]);
    if (std::isnan(p)) throw NonfiniteLoss("ct_loss: NaN probability");
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      if (diagnostics) ++diagnostics->clamped;
    }
    nll -= std::log(p);
  }
  if (!any) return 0.0;
  const double loss = loss_weight(schedule, input.t) * nll;
  if (!std::isfinite(loss)) throw NonfiniteLoss("ct_loss is not finite");
  return loss;
}

double evaluate_item_loss(const Denoiser& denoiser, const TrainingItem& item,
                          LossDiagnostics* diagnostics) {
  if (item.targets.empty()) return 0.0;
  const DenoiserOutput out = denoiser.denoise(item.input);
  double nll = 0.0;
  for (std::size_t j : item.targets) {
    double p = out.probs(static_cast<Eigen::Index>(j), item.clean[j]);
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      if (diagnostics) ++diagnostics->clamped;
    }
    nll -= std::log(p);
  }
  return item.weight * nll;
}

// ---------------------------------------------------------------------------
// Batches

CorpusSampler::CorpusSampler(const Corpus& corpus) {
  cumulative_.reserve(corpus.size());
  double acc = 0.0;
  for (const auto& e : corpus.entries()) {
    acc += e.weight;
    cumulative_.push_back(acc);
  }
}

std::size_t CorpusSampler::draw(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                               cumulative_.size() - 1);
}

std::vector<TrainingItem> sample_standard_batch(const Corpus& corpus, const CorpusSampler& sampler,
                                                int batch_size, double t_epsilon,
                                                const Schedule& schedule, Rng& rng) {
  const TokenId mask = corpus.vocab().mask_id();
  std::vector<TrainingItem> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const auto& clean = corpus.entries()[sampler.draw(rng)].tokens;
    const double t = 1.0 - (1.0 - t_epsilon) * rng.uniform();  // (eps, 1]
    TrainingItem item;
    item.input = forward_mask(clean, mask, schedule, t, rng);
    item.clean = clean;
    item.targets = item.input.masked_positions();
    item.weight = loss_weight(schedule, t);
    batch.push_back(std::move(item));
  }
  return batch;
}

std::vector<BlockSpan> reverse_blocks(std::size_t length, std::size_t block_size) {
  if (block_size == 0) throw ConfigError("block size must be >= 1");
  std::vector<BlockSpan> blocks;
  std::size_t end = length;
  while (end >= block_size) {
    blocks.push_back({end - block_size, end});
    end -= block_size;
  }
  if (end > 0) blocks.push_back({0, end});
  return blocks;
}

std::vector<TrainingItem> blockwise_items(std::span<const TokenId> clean, TokenId mask_id,
                                          std::size_t block_size, PatternMode mode,
                                          const Schedule& schedule, Rng& rng,
                                          PatternCoverage* coverage) {
  const std::size_t L = clean.size();
  std::vector<TrainingItem> items;
  for (const BlockSpan& block : reverse_blocks(L, block_size)) {
    const std::uint32_t n_patterns = (1u << block.size()) - 1u;
    std::vector<std::uint32_t> patterns;
    if (mode == PatternMode::kEnumerate) {
      for (std::uint32_t p = 1; p <= n_patterns; ++p) patterns.push_back(p);
    } else {
      patterns.push_back(1u + static_cast<std::uint32_t>(rng.below(n_patterns)));
    }
    for (std::uint32_t pattern : patterns) {
      TrainingItem item;
      item.clean.assign(clean.begin(), clean.end());
      item.input.tokens.assign(clean.begin(), clean.end());
      item.input.mask_id = mask_id;
      for (std::size_t j = block.end; j < L; ++j) item.input.tokens[j] = mask_id;
      for (std::size_t b = 0; b < block.size(); ++b) {
        if (pattern & (1u << b)) {
          item.input.tokens[block.begin + b] = mask_id;
          item.targets.push_back(block.begin + b);
        }
      }
      item.input.t = item.input.masked_fraction();
      item.weight = loss_weight(schedule, item.input.t);
      if (coverage) {
        coverage->patterns[block.begin].insert(pattern);
        coverage->block_sizes[block.begin] = block.size();
      }
      items.push_back(std::move(item));
    }
  }
  return items;
}

// ---------------------------------------------------------------------------
// Optimization

namespace {

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, double lr, const NeuralDenoiser& model)
      : config_(config), lr_(lr), m_(model.zero_gradients()), v_(model.zero_gradients()) {}

  void step(std::vector<Parameter>& params, const Gradients& grads) {
    ++t_;
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i].value -= lr_ * grads[i];
      return;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseAbs2();
      params[i].value.array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.epsilon);
    }
  }

 private:
  OptimizerConfig config_;
  double lr_;
  Gradients m_;
  Gradients v_;
  int t_ = 0;
};

NeuralDenoiserConfig resolve_model_config(NeuralDenoiserConfig cfg, const Corpus& corpus) {
  if (cfg.max_len == 0) cfg.max_len = static_cast<int>(corpus.length());
  if (static_cast<std::size_t>(cfg.max_len) < corpus.length())
    throw LengthExceeded("model max_len is shorter than the corpus sequences");
  return cfg;
}

template <typename MakeBatch>
TrainResult run_training(const Corpus& corpus, const TrainConfig& config,
                         const NeuralDenoiserConfig& model_config, Regime regime,
                         MakeBatch&& make_batch) {
  config.validate();
  TrainResult result{NeuralDenoiser(corpus.vocab(), resolve_model_config(model_config, corpus)),
                     regime,
                     {},
                     std::nullopt,
                     0};
  NeuralDenoiser& model = result.model;
  Optimizer optimizer(config.optimizer, config.learning_rate, model);
  Rng rng(config.seed);
  LossDiagnostics diagnostics;
  std::vector<Eigen::MatrixXd> ema;
  if (config.ema_decay > 0.0)
    for (const auto& p : model.parameters()) ema.push_back(p.value);
  result.trace.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    const std::vector<TrainingItem> batch = make_batch(rng);
    Gradients grads = model.zero_gradients();
    double loss = 0.0;
    try {
      loss = model.batch_loss(batch, &grads, &diagnostics);
    } catch (const NonfiniteLoss& e) {
      throw DivergedLoss(fmt::format("step {}: {}", step, e.what()));
    }
    if (!std::isfinite(loss))
      throw DivergedLoss(fmt::format("loss became non-finite at step {}", step));
    optimizer.step(model.parameters(), grads);
    if (!ema.empty()) {
      // short warm-up so the initialization fades quickly
      const double decay = std::min(config.ema_decay, (1.0 + step) / (10.0 + step));
      for (std::size_t i = 0; i < ema.size(); ++i)
        ema[i] = decay * ema[i] + (1.0 - decay) * model.parameters()[i].value;
    }

    TrainStepRecord rec{step, loss, 0.0, 0.0};
    for (const auto& item : batch) {
      rec.t_mean += item.input.t;
      rec.masked_fraction += item.input.masked_fraction();
    }
    rec.t_mean /= static_cast<double>(batch.size());
    rec.masked_fraction /= static_cast<double>(batch.size());
    result.trace.push_back(rec);
  }
  for (std::size_t i = 0; i < ema.size(); ++i) model.parameters()[i].value = ema[i];
  result.clamped_probabilities = diagnostics.clamped;
  return result;
}

}  // namespace

TrainResult train_standard(const Corpus& corpus, const TrainConfig& config,
                           const Schedule& schedule, const NeuralDenoiserConfig& model_config) {
  if (config.regime != Regime::kStandard)
    throw ConfigError("train_standard requires the standard regime");
  const CorpusSampler sampler(corpus);
  return run_training(corpus, config, model_config, Regime::kStandard, [&](Rng& rng) {
    return sample_standard_batch(corpus, sampler, config.batch_size, config.t_epsilon, schedule,
                                 rng);
  });
}

TrainResult train_blockwise_reverse(const Corpus& corpus, const TrainConfig& config,
                                    const Schedule& schedule,
                                    const NeuralDenoiserConfig& model_config) {
  if (config.regime != Regime::kBlockwiseReverse)
    throw ConfigError("train_blockwise_reverse requires the blockwise regime");
  const CorpusSampler sampler(corpus);
  PatternCoverage coverage;
  coverage.block_size = config.block_size;
  const TokenId mask = corpus.vocab().mask_id();
  TrainResult result =
      run_training(corpus, config, model_config, Regime::kBlockwiseReverse, [&](Rng& rng) {
        std::vector<TrainingItem> batch;
        for (int b = 0; b < config.batch_size; ++b) {
          const auto& clean = corpus.entries()[sampler.draw(rng)].tokens;
          auto items =
              blockwise_items(clean, mask, static_cast<std::size_t>(config.block_size),
                              config.pattern_mode, schedule, rng, &coverage);
          std::move(items.begin(), items.end(), std::back_inserter(batch));
        }
        return batch;
      });
  result.coverage = std::move(coverage);
  return result;
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, const Schedule& schedule,
                  const NeuralDenoiserConfig& model_config) {
  return config.regime == Regime::kStandard
             ? train_standard(corpus, config, schedule, model_config)
             : train_blockwise_reverse(corpus, config, schedule, model_config);
}

// ---------------------------------------------------------------------------
// NELBO

namespace {

double step_coefficient(const Schedule& schedule, int i, int T) {
  const double s = static_cast<double>(i - 1) / T;
  const double t = static_cast<double>(i) / T;
  const double at = schedule.alpha(t);
  if (at >= 1.0) return 0.0;
  return (schedule.alpha(s) - at) / (1.0 - at);
}

}  // namespace

double nelbo_coefficient_sum(const Schedule& schedule, int T) {
  double sum = 0.0;
  for (int i = 1; i <= T; ++i) sum += step_coefficient(schedule, i, T);
  return sum;
}

double nelbo_expected_coefficient_sum(const Schedule& schedule, int T) {
  double sum = 0.0;
  for (int i = 1; i <= T; ++i)
    sum += (1.0 - schedule.alpha(static_cast<double>(i) / T)) * step_coefficient(schedule, i, T);
  return sum;
}

NelboEstimate nelbo_discrete(const Denoiser& denoiser, std::span<const TokenId> clean,
                             const Schedule& schedule, int T, int mc_samples,
                             std::uint64_t seed) {
  if (T < 2) throw ConfigError("nelbo_discrete requires T >= 2");
  if (mc_samples < 2) throw ConfigError("nelbo_discrete requires at least 2 samples");
  const std::size_t L = clean.size();
  const TokenId mask = denoiser.vocab().mask_id();

  std::vector<double> coef(static_cast<std::size_t>(T) + 1, 0.0);
  std::vector<double> alpha_t(static_cast<std::size_t>(T) + 1, 0.0);
  for (int i = 1; i <= T; ++i) {
    coef[static_cast<std::size_t>(i)] = step_coefficient(schedule, i, T);
    alpha_t[static_cast<std::size_t>(i)] = schedule.alpha(static_cast<double>(i) / T);
  }

  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> v(L);
  std::vector<std::size_t> order(L);
  for (int sample = 0; sample < mc_samples; ++sample) {
    for (double& x : v) x = rng.uniform();
    for (std::size_t j = 0; j < L; ++j) order[j] = j;
    // positions are masked in order of decreasing v
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return v[a] != v[b] ? v[a] > v[b] : a < b;
    });

    MaskedSeq state{{clean.begin(), clean.end()}, mask, 0.0};
    std::size_t n_masked = 0;
    double ce = 0.0;  // sum over masked positions of -log f[clean]
    double total = 0.0;
    for (int i = 1; i <= T; ++i) {
      const double a = alpha_t[static_cast<std::size_t>(i)];
      std::size_t target = n_masked;
      while (target < L && v[order[target]] >= a) ++target;
      if (target != n_masked) {
        for (std::size_t r = n_masked; r < target; ++r) state.tokens[order[r]] = mask;
        n_masked = target;
        state.t = static_cast<double>(i) / T;
        const DenoiserOutput out = denoiser.denoise(state);
        ce = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          if (!state.masked(j)) continue;
          const double p = std::max(out.probs(static_cast<Eigen::Index>(j), clean[j]),
                                    kProbabilityFloor);
          ce -= std::log(p);
        }
      }
      if (n_masked > 0) total += coef[static_cast<std::size_t>(i)] * ce;
    }
    sum += total;
    sum_sq += total * total;
  }
  const double n = mc_samples;
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), mc_samples};
}

void write_loss_csv(std::ostream& out, std::span<const TrainStepRecord> trace, Regime regime) {
  out << "step,regime,loss,t_mean,masked_fraction\n";
  for (const auto& r : trace)
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", r.step, to_string(regime), r.loss,
                       r.t_mean, r.masked_fraction);
}

}  // namespace mdlab
