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

#include "mdlab/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "json.hpp"
#include "mdlab/error.hpp"

namespace mdlab {

namespace {

constexpr double kJointTolerance = 1e-12;

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kConfidence: return "confidence";
    case Strategy::kArOrder: return "ar_order";
    case Strategy::kReverseOrder: return "reverse_order";
    case Strategy::kRandomOrder: return "random_order";
    case Strategy::kParallelK: return "parallel_k";
    case Strategy::kSemiAr: return "semi_ar";
    case Strategy::kRandomInit: return "random_init";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  for (Strategy s : {Strategy::kConfidence, Strategy::kArOrder, Strategy::kReverseOrder,
                     Strategy::kRandomOrder, Strategy::kParallelK, Strategy::kSemiAr,
                     Strategy::kRandomInit})
    if (text == to_string(s)) return s;
  throw ConfigError(fmt::format("unknown decoding strategy '{}'", text));
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kCommit: return "commit";
    case EventKind::kRandomFill: return "random_fill";
    case EventKind::kRemask: return "remask";
    case EventKind::kForcedEot: return "forced_eot";
  }
  return "?";
}

void DecodePolicy::validate() const {
  if (k < 1) throw ConfigError("parallel k must be >= 1");
  if (block < 1) throw ConfigError("semi-AR block size must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError(fmt::format("rho must lie in (0, 1), got {}", rho));
  if (rounds < 0) throw ConfigError("random_init rounds must be >= 0");
  if (commits_per_round < 1) throw ConfigError("commits_per_round must be >= 1");
  if (!selection.greedy && !(selection.temperature > 0.0 && std::isfinite(selection.temperature)))
    throw ConfigError("temperature must be positive");
  if (inner == Strategy::kSemiAr || inner == Strategy::kRandomInit)
    throw ConfigError("semi-AR inner policy must be a single-block strategy");
  if (max_positions && *max_positions == 0) throw ConfigError("max_positions must be >= 1");
}

std::vector<DecodeEvent> DecodeTrace::commits() const {
  std::vector<DecodeEvent> out;
  for (const auto& e : events)
    if (e.kind == EventKind::kCommit) out.push_back(e);
  return out;
}

std::vector<std::vector<Assignment>> DecodeTrace::commits_by_step() const {
  std::vector<std::vector<Assignment>> out;
  int last = -1;
  for (const auto& e : events) {
    if (e.kind != EventKind::kCommit && e.kind != EventKind::kForcedEot) continue;
    if (e.step != last) {
      out.emplace_back();
      last = e.step;
    }
    out.back().push_back({e.position, e.token});
  }
  return out;
}

TokenId select_token(const DenoiserOutput& output, std::size_t j, const Selection& selection,
                     Rng& rng) {
  if (selection.greedy) return output.argmax(j);
  const auto row = output.probs.row(static_cast<Eigen::Index>(j));
  std::vector<double> w(static_cast<std::size_t>(row.size()));
  if (selection.temperature == 1.0) {
    for (std::size_t v = 0; v < w.size(); ++v) w[v] = row(static_cast<Eigen::Index>(v));
  } else {
    const double inv = 1.0 / selection.temperature;
    for (std::size_t v = 0; v < w.size(); ++v) {
      const double p = row(static_cast<Eigen::Index>(v));
      w[v] = p > 0.0 ? std::pow(p, inv) : 0.0;
    }
  }
  return static_cast<TokenId>(rng.categorical(w));
}

MaskedSeq reverse_step(const MaskedSeq& input, const DenoiserOutput& output,
                       const Schedule& schedule, double s, const Selection& selection, Rng& rng) {
  if (!(s >= 0.0 && s < input.t))
    throw ConfigError(fmt::format("reverse_step needs 0 <= s < t (s={}, t={})", s, input.t));
  if (output.length() != input.size()) throw ConfigError("reverse_step: output length mismatch");
  const double stay = (1.0 - schedule.alpha(s)) / (1.0 - schedule.alpha(input.t));
  MaskedSeq next = input;
  next.t = s;
  for (std::size_t j = 0; j < input.size(); ++j) {
    if (!input.masked(j)) continue;
    if (rng.uniform() < stay) continue;
    next.tokens[j] = select_token(output, j, selection, rng);
  }
  return next;
}

namespace {

std::vector<double> row_maxima(const DenoiserOutput& out) {
  std::vector<double> m(out.length());
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = out.row_max(j);
  return m;
}

// Positions sorted by decreasing row max; ties keep ascending position.
std::vector<std::size_t> by_confidence(const DenoiserOutput& out,
                                       std::span<const std::size_t> candidates) {
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.row_max(a) > out.row_max(b);
  });
  return order;
}

// Positions to commit this step among `candidates` (ascending).
std::vector<std::size_t> choose_positions(Strategy strategy, int k, const DenoiserOutput& out,
                                          std::span<const std::size_t> candidates, Rng& rng) {
  switch (strategy) {
    case Strategy::kConfidence: return {by_confidence(out, candidates).front()};
    case Strategy::kArOrder: return {candidates.front()};
    case Strategy::kReverseOrder: return {candidates.back()};
    case Strategy::kRandomOrder: return {candidates[rng.below(candidates.size())]};
    case Strategy::kParallelK: {
      auto order = by_confidence(out, candidates);
      order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
      std::sort(order.begin(), order.end());
      return order;
    }
    default: throw ConfigError("strategy cannot choose positions directly");
  }
}

class Decoder {
 public:
  Decoder(const Denoiser& denoiser, std::span<const TokenId> prompt, const DecodePolicy& policy,
          std::uint64_t seed)
      : denoiser_(denoiser), policy_(policy), rng_(seed) {
    policy_.validate();
    const Vocab& vocab = denoiser.vocab();
    state_.tokens.assign(prompt.begin(), prompt.end());
    state_.mask_id = vocab.mask_id();
    for (TokenId tok : prompt)
      if (!vocab.contains(tok)) throw ConfigError(fmt::format("prompt token {} is out of range", tok));
    trace_.prompt.assign(prompt.begin(), prompt.end());
  }

  DecodeTrace run() {
    if (policy_.strategy == Strategy::kRandomInit) run_random_init();
    while (!done()) {
      const auto masked = state_.masked_positions();
      switch (policy_.strategy) {
        case Strategy::kSemiAr: semi_ar_step(masked); break;
        case Strategy::kRandomInit: single_step(Strategy::kConfidence, masked); break;
        default: single_step(policy_.strategy, masked); break;
      }
    }
    trace_.final_sequence = state_.tokens;
    trace_.steps = step_;
    return std::move(trace_);
  }

 private:
  bool done() const {
    if (policy_.max_positions && committed_ >= *policy_.max_positions) return true;
    return state_.masked_count() == 0;
  }

  DenoiserOutput call_denoiser(const MaskedSeq& x) {
    MaskedSeq in = x;
    in.t = in.masked_fraction();
    DenoiserOutput out = denoiser_.denoise(in);
    trace_.max_prob_snapshots.push_back(row_maxima(out));
    return out;
  }

  std::size_t remaining_budget() const {
    return policy_.max_positions ? *policy_.max_positions - committed_ : state_.size();
  }

  // Commits `positions` (ascending) from `out`, then applies the EOT stop rule.
  void commit(const DenoiserOutput& out, std::vector<std::size_t> positions) {
    if (positions.size() > remaining_budget()) positions.resize(remaining_budget());
    std::optional<std::size_t> eot_at;
    for (std::size_t j : positions) {
      const TokenId tok = select_token(out, j, policy_.selection, rng_);
      state_.tokens[j] = tok;
      trace_.events.push_back({step_, EventKind::kCommit, j, tok,
                               out.probs(static_cast<Eigen::Index>(j), tok)});
      ++committed_;
      if (policy_.stop_on_eot && tok == denoiser_.vocab().eot_id() && !eot_at) eot_at = j;
    }
    if (eot_at) {
      const TokenId eot = denoiser_.vocab().eot_id();
      for (std::size_t j = *eot_at + 1; j < state_.size(); ++j) {
        if (!state_.masked(j)) continue;
        state_.tokens[j] = eot;
        trace_.events.push_back({step_, EventKind::kForcedEot, j, eot,
                                 out.probs(static_cast<Eigen::Index>(j), eot)});
      }
    }
    ++step_;
  }

  void single_step(Strategy strategy, std::span<const std::size_t> candidates) {
    const DenoiserOutput out = call_denoiser(state_);
    commit(out, choose_positions(strategy, policy_.k, out, candidates, rng_));
  }

  void semi_ar_step(std::span<const std::size_t> masked) {
    block_.erase(std::remove_if(block_.begin(), block_.end(),
                                [&](std::size_t j) { return !state_.masked(j); }),
                 block_.end());
    if (block_.empty()) open_block(masked);
    single_step(policy_.inner, block_);
  }

  void open_block(std::span<const std::size_t> masked) {
    const auto B = static_cast<std::size_t>(policy_.block);
    if (policy_.alignment == BlockAlignment::kLeftmostMasked) {
      block_.assign(masked.begin(), masked.begin() + std::min(B, masked.size()));
      return;
    }
    // Partition block containing the leftmost masked position.
    const std::size_t L = state_.size();
    const std::size_t residual = L % B;
    const std::size_t first = masked.front();
    std::size_t begin = 0, end = residual;
    if (first >= residual) {
      begin = residual + (first - residual) / B * B;
      end = begin + B;
    }
    block_.clear();
    for (std::size_t j : masked)
      if (j >= begin && j < end) block_.push_back(j);
  }

  void run_random_init() {
    const Vocab& vocab = denoiser_.vocab();
    std::vector<TokenId> fill_tokens;
    for (TokenId v = 0; v < vocab.size(); ++v)
      if (!vocab.is_special(v)) fill_tokens.push_back(v);
    if (fill_tokens.empty()) throw ConfigError("random_init needs at least one ordinary token");

    for (int round = 0; round < policy_.rounds && !done(); ++round) {
      std::vector<std::size_t> masked = state_.masked_positions();
      const std::size_t m = masked.size();
      // At least one filled position when two or more are masked, and at
      // least one left to commit.
      std::size_t n_fill = static_cast<std::size_t>(std::llround(policy_.rho * static_cast<double>(m)));
      if (m >= 2) n_fill = std::max<std::size_t>(n_fill, 1);
      n_fill = std::min(n_fill, m - 1);

      for (std::size_t i = 0; i < n_fill; ++i)
        std::swap(masked[i], masked[i + rng_.below(m - i)]);
      std::vector<std::size_t> filled(masked.begin(), masked.begin() + n_fill);
      std::vector<std::size_t> rest(masked.begin() + n_fill, masked.end());
      std::sort(filled.begin(), filled.end());
      std::sort(rest.begin(), rest.end());

      MaskedSeq probe = state_;
      const double p_fill = 1.0 / static_cast<double>(fill_tokens.size());
      for (std::size_t j : filled) {
        probe.tokens[j] = fill_tokens[rng_.below(fill_tokens.size())];
        trace_.events.push_back({step_, EventKind::kRandomFill, j, probe.tokens[j], p_fill});
      }
      const DenoiserOutput out = call_denoiser(probe);
      auto chosen = by_confidence(out, rest);
      chosen.resize(std::min<std::size_t>(chosen.size(),
                                          static_cast<std::size_t>(policy_.commits_per_round)));
      if (chosen.empty())
        throw PolicyStalled(fmt::format("random_init round {} committed nothing", round));
      std::sort(chosen.begin(), chosen.end());
      const int round_step = step_;
      commit(out, chosen);
      for (std::size_t j : filled)
        trace_.events.push_back({round_step, EventKind::kRemask, j, state_.mask_id, 0.0});
    }
  }

  const Denoiser& denoiser_;
  DecodePolicy policy_;
  Rng rng_;
  MaskedSeq state_;
  DecodeTrace trace_;
  std::vector<std::size_t> block_;
  std::size_t committed_ = 0;
  int step_ = 0;
};

std::vector<Assignment> generated(std::span<const TokenId> prompt, const DecodeTrace& trace,
                                  TokenId mask) {
  std::vector<Assignment> out;
  for (std::size_t j = 0; j < prompt.size(); ++j)
    if (prompt[j] == mask && trace.final_sequence[j] != mask)
      out.push_back({j, trace.final_sequence[j]});
  return out;
}

}  // namespace

DecodeTrace decode(const Denoiser& denoiser, std::span<const TokenId> prompt,
                   const DecodePolicy& policy, std::uint64_t seed) {
  return Decoder(denoiser, prompt, policy, seed).run();
}

double joint_prob_of_trace(const Corpus& corpus, std::span<const TokenId> prompt,
                           const DecodeTrace& trace) {
  if (trace.final_sequence.size() != prompt.size())
    throw ConfigError("trace and prompt lengths differ");
  const auto query = generated(prompt, trace, corpus.vocab().mask_id());
  const double p = oracle_joint(corpus, prompt, query);
  if (p <= 0.0) throw NoConsistentEntry("generated tokens have zero probability under the corpus");
  return p;
}

TraceReport annotate_trace(const Corpus& corpus, const DecodeTrace& trace) {
  const TokenId mask = corpus.vocab().mask_id();
  TraceReport report;
  std::vector<TokenId> state = trace.prompt;
  int step_index = 0;
  for (const auto& committed : trace.commits_by_step()) {
    StepAnnotation a;
    a.step = step_index++;
    a.committed = committed;
    std::vector<std::size_t> positions;
    for (const auto& c : committed) positions.push_back(c.position);
    try {
      a.joint = oracle_joint(corpus, state, committed);
      const JointArgmax best = oracle_joint_argmax(corpus, state, positions);
      a.best_tokens = best.tokens;
      a.best_joint = best.probability;
      a.suboptimal = a.joint < a.best_joint - kJointTolerance;
    } catch (const NoConsistentEntry&) {
      report.consistent = false;
    }
    for (const auto& c : committed) state[c.position] = c.token;
    report.suboptimal = report.suboptimal || a.suboptimal;
    report.steps.push_back(std::move(a));
  }

  const auto query = generated(trace.prompt, trace, mask);
  std::vector<std::size_t> positions;
  for (const auto& q : query) positions.push_back(q.position);
  report.joint = oracle_joint(corpus, trace.prompt, query);
  report.best_joint = oracle_joint_argmax(corpus, trace.prompt, positions).probability;
  if (report.joint <= 0.0) report.consistent = false;
  report.suboptimal = report.suboptimal || report.joint < report.best_joint - kJointTolerance;
  return report;
}

void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace, const Vocab& vocab,
                       const TraceReport* report) {
  using nlohmann::json;
  for (const auto& e : trace.events) {
    json j = {{"step", e.step},
              {"event", to_string(e.kind)},
              {"position", e.position},
              {"token", e.token},
              {"label", vocab.name(e.token)},
              {"probability", e.probability}};
    out << j.dump() << '\n';
  }
  json fin = {{"final", true}, {"steps", trace.steps}, {"sequence", trace.final_sequence}};
  std::vector<std::string> labels;
  for (TokenId t : trace.final_sequence) labels.push_back(vocab.name(t));
  fin["labels"] = labels;
  if (report) {
    json steps = json::array();
    for (const auto& s : report->steps) {
      json committed = json::array();
      for (const auto& c : s.committed) committed.push_back({{"position", c.position}, {"token", c.token}});
      steps.push_back({{"step", s.step},
                       {"committed", committed},
                       {"joint", s.joint},
                       {"best_tokens", s.best_tokens},
                       {"best_joint", s.best_joint},
                       {"suboptimal", s.suboptimal}});
    }
    fin["step_annotations"] = steps;
    fin["joint"] = report->joint;
    fin["best_joint"] = report->best_joint;
    fin["consistent"] = report->consistent;
    fin["suboptimal"] = report->suboptimal;
  }
  out << fin.dump() << '\n';
}

}  // namespace mdlab
