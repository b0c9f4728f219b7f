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

#include "mdlab/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mdlab/error.hpp"
#include "mdlab/random.hpp"

namespace mdlab {

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(int size, TokenId mask_id, TokenId eot_id, std::vector<std::string> labels)
    : size_(size), mask_id_(mask_id), eot_id_(eot_id), labels_(std::move(labels)) {
  if (size_ <= 0) throw ConfigError("vocab size must be positive");
  if (mask_id_ == eot_id_) throw ConfigError("mask_id and eot_id must differ");
  if (!contains(mask_id_) || !contains(eot_id_))
    throw ConfigError(fmt::format("mask_id {} / eot_id {} outside vocab of size {}", mask_id_,
                                  eot_id_, size_));
  if (!labels_.empty()) {
    if (labels_.size() != static_cast<std::size_t>(size_))
      throw ConfigError("vocab labels must cover every id");
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw ConfigError("vocab labels must be unique");
  }
}

std::string Vocab::name(TokenId id) const {
  if (has_labels() && contains(id)) return labels_[static_cast<std::size_t>(id)];
  return std::to_string(id);
}

std::optional<TokenId> Vocab::find(std::string_view text) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == text) return static_cast<TokenId>(i);
  TokenId id = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (ec == std::errc() && ptr == text.data() + text.size() && contains(id)) return id;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(Vocab vocab, std::size_t length, std::vector<CorpusEntry> entries,
               bool truncated)
    : vocab_(std::move(vocab)),
      length_(length),
      entries_(std::move(entries)),
      truncated_(truncated) {
  if (length_ == 0) throw ConfigError("corpus length must be positive");
  if (entries_.empty()) throw ConfigError("corpus has no entries");
  for (const auto& e : entries_) {
    if (e.tokens.size() != length_)
      throw ConfigError(fmt::format("corpus entry has length {}, expected {}",
                                    e.tokens.size(), length_));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      throw ConfigError("corpus weights must be positive and finite");
    for (TokenId tok : e.tokens) {
      if (!vocab_.contains(tok)) throw ConfigError(fmt::format("token {} outside vocab", tok));
      if (tok == vocab_.mask_id()) throw ConfigError("corpus entry contains MASK");
    }
    total_weight_ += e.weight;
  }
}

Corpus build_toy_corpus() {
  using namespace toy;
  std::vector<std::string> labels = {"A", "A'", "B", "B'", "C", "D"};
  for (int i = 1; i <= kNumE; ++i) labels.push_back(fmt::format("E{}", i));
  labels.push_back("[MASK]");
  labels.push_back("<eot>");
  Vocab vocab(kVocabSize, kMask, kEot, std::move(labels));

  const std::pair<std::pair<TokenId, TokenId>, int> groups[] = {
      {{kA, kB}, 34}, {{kA, kBPrime}, 21}, {{kAPrime, kB}, 35}, {{kAPrime, kBPrime}, 10}};
  std::vector<CorpusEntry> entries;
  entries.reserve(kNumE);
  TokenId e = kFirstE;
  for (const auto& [pair, count] : groups) {
    for (int i = 0; i < count; ++i)
      entries.push_back({{pair.first, pair.second, kC, kD, e++}, 1.0 / kNumE});
  }
  return Corpus(std::move(vocab), kLength, std::move(entries));
}

// ---------------------------------------------------------------------------
// Markov chains

std::string_view to_string(PermutationRule rule) {
  return rule == PermutationRule::kCyclicShift ? "cyclic" : "random";
}

PermutationRule parse_permutation_rule(std::string_view text) {
  if (text == "cyclic") return PermutationRule::kCyclicShift;
  if (text == "random") return PermutationRule::kRandom;
  throw ConfigError(fmt::format("unknown permutation rule '{}'", text));
}

std::vector<double> zipf_profile(double s, std::int64_t N, int count) {
  if (count < 2) throw ConfigError("zipf profile needs at least 2 ranks");
  if (N < 2) throw ConfigError("zipf support N must be >= 2");
  const std::int64_t support = std::min<std::int64_t>(N, count);
  std::vector<double> p(static_cast<std::size_t>(count), 0.0);
  double z = 0.0;
  for (std::int64_t k = support; k >= 1; --k) z += std::pow(static_cast<double>(k), -s);
  for (std::int64_t k = 1; k <= support; ++k)
    p[static_cast<std::size_t>(k - 1)] = std::pow(static_cast<double>(k), -s) / z;
  return p;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

MarkovChainSpec make_zipf_chain_spec(int state_count, double s, std::int64_t N,
                                     PermutationRule rule, std::uint64_t seed) {
  if (state_count < 2) throw ConfigError("chain needs at least 2 states");
  if (!(s > 0.0)) throw ConfigError("zipf exponent s must be positive");
  const auto S = static_cast<std::size_t>(state_count);
  const std::vector<double> profile = zipf_profile(s, N, state_count);

  MarkovChainSpec spec;
  spec.state_count = state_count;
  spec.zipf_s = s;
  spec.zipf_N = N;
  spec.permutation_rule = rule;
  spec.permutation_seed = seed;
  spec.transition.assign(S, std::vector<double>(S, 0.0));

  if (rule == PermutationRule::kCyclicShift) {
    spec.initial = profile;
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t r = 0; r < S; ++r) spec.transition[i][(i + r) % S] = profile[r];
    return spec;
  }

  Rng rng(seed);
  std::vector<std::size_t> peaks(S);
  std::iota(peaks.begin(), peaks.end(), std::size_t{0});
  shuffle(peaks, rng);
  for (std::size_t i = 0; i < S; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < S; ++c)
      if (c != peaks[i]) others.push_back(c);
    shuffle(others, rng);
    spec.transition[i][peaks[i]] = profile[0];
    for (std::size_t r = 1; r < S; ++r) spec.transition[i][others[r - 1]] = profile[r];
  }
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  spec.initial.assign(S, 0.0);
  for (std::size_t r = 0; r < S; ++r) spec.initial[order[r]] = profile[r];
  return spec;
}

void validate(const MarkovChainSpec& spec) {
  if (spec.state_count < 2) throw ConfigError("chain needs at least 2 states");
  const auto S = static_cast<std::size_t>(spec.state_count);
  if (spec.initial.size() != S || spec.transition.size() != S)
    throw ConfigError("chain initial/transition sizes disagree with state_count");
  const std::vector<double> profile = zipf_profile(spec.zipf_s, spec.zipf_N, spec.state_count);

  auto is_profile_permutation = [&](std::vector<double> row) {
    std::sort(row.begin(), row.end(), std::greater<>());
    for (std::size_t r = 0; r < S; ++r)
      if (std::abs(row[r] - profile[r]) > 1e-12) return false;
    return true;
  };

  if (!is_profile_permutation(spec.initial))
    throw ConfigError("chain initial distribution is not a permutation of the Zipf profile");
  std::vector<bool> peak_used(S, false);
  for (std::size_t i = 0; i < S; ++i) {
    const auto& row = spec.transition[i];
    if (row.size() != S) throw ConfigError("chain transition is not square");
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError(fmt::format("chain transition row {} sums to {}", i, sum));
    if (!is_profile_permutation(row))
      throw ConfigError(fmt::format("chain transition row {} is not a Zipf permutation", i));
    const std::size_t peak = argmax_lowest(row);
    if (peak_used[peak])
      throw ConfigError(fmt::format("chain row peaks collide at column {}", peak));
    peak_used[peak] = true;
  }
}

namespace {

Vocab chain_vocab(std::size_t states) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < states; ++i) labels.push_back(fmt::format("s{}", i));
  labels.push_back("[MASK]");
  labels.push_back("<eot>");
  const auto S = static_cast<TokenId>(states);
  return Vocab(S + 2, S, S + 1, std::move(labels));
}

void check_stochastic(std::span<const double> initial,
                      const std::vector<std::vector<double>>& transition) {
  const std::size_t S = initial.size();
  if (S < 1 || transition.size() != S) throw ConfigError("chain shape mismatch");
  auto check_row = [S](std::span<const double> row, std::string_view what) {
    if (row.size() != S) throw ConfigError(fmt::format("{} has wrong width", what));
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0 || !std::isfinite(p)) throw ConfigError(fmt::format("{} has invalid entry", what));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(fmt::format("{} does not sum to 1", what));
  };
  check_row(initial, "chain initial distribution");
  for (const auto& row : transition) check_row(row, "chain transition row");
}

struct PartialPath {
  double probability;
  std::vector<TokenId> tokens;
};

// Max-heap order: higher probability first, then lexicographically smaller.
struct PathOrder {
  bool operator()(const PartialPath& a, const PartialPath& b) const {
    if (a.probability != b.probability) return a.probability < b.probability;
    return a.tokens > b.tokens;
  }
};

std::vector<CorpusEntry> top_k_paths(std::span<const double> initial,
                                     const std::vector<std::vector<double>>& transition,
                                     std::size_t length, std::uint64_t k) {
  // Extensions never increase probability, so complete paths leave the
  // queue in exact descending order.
  std::priority_queue<PartialPath, std::vector<PartialPath>, PathOrder> queue;
  for (std::size_t s = 0; s < initial.size(); ++s)
    if (initial[s] > 0.0) queue.push({initial[s], {static_cast<TokenId>(s)}});
  std::vector<CorpusEntry> out;
  while (!queue.empty() && out.size() < k) {
    PartialPath top = queue.top();
    queue.pop();
    if (top.tokens.size() == length) {
      out.push_back({std::move(top.tokens), top.probability});
      continue;
    }
    const auto& row = transition[static_cast<std::size_t>(top.tokens.back())];
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (row[s] <= 0.0) continue;
      PartialPath next{top.probability * row[s], top.tokens};
      next.tokens.push_back(static_cast<TokenId>(s));
      queue.push(std::move(next));
    }
  }
  return out;
}

}  // namespace

Corpus build_markov_corpus(std::span<const double> initial,
                           const std::vector<std::vector<double>>& transition,
                           std::size_t length, const EnumerationOptions& options) {
  if (length < 2) throw ConfigError("chain corpus length must be >= 2");
  check_stochastic(initial, transition);
  const std::size_t S = initial.size();

  double paths = std::pow(static_cast<double>(S), static_cast<double>(length));
  const bool exhaustive = paths <= static_cast<double>(options.budget);
  if (options.top_k && (!exhaustive || *options.top_k < paths)) {
    if (*options.top_k == 0) throw ConfigError("top_k must be positive");
    if (static_cast<double>(*options.top_k) > static_cast<double>(options.budget))
      throw EnumerationBudgetExceeded("top_k exceeds the enumeration budget");
    auto entries = top_k_paths(initial, transition, length, *options.top_k);
    return Corpus(chain_vocab(S), length, std::move(entries), /*truncated=*/true);
  }
  if (!exhaustive)
    throw EnumerationBudgetExceeded(fmt::format(
        "{}^{} paths exceed the enumeration budget of {}; request top-k truncation", S, length,
        options.budget));

  std::vector<CorpusEntry> entries;
  std::vector<TokenId> path(length, 0);
  while (true) {
    double p = initial[static_cast<std::size_t>(path[0])];
    for (std::size_t j = 1; j < length && p > 0.0; ++j)
      p *= transition[static_cast<std::size_t>(path[j - 1])][static_cast<std::size_t>(path[j])];
    if (p > 0.0) entries.push_back({path, p});
    // odometer increment, last position fastest
    std::size_t j = length;
    while (j > 0) {
      --j;
      if (++path[j] < static_cast<TokenId>(S)) break;
      path[j] = 0;
      if (j == 0) return Corpus(chain_vocab(S), length, std::move(entries));
    }
  }
}

Corpus build_zipf_chain_corpus(const MarkovChainSpec& spec, std::size_t length,
                               const EnumerationOptions& options) {
  validate(spec);
  return build_markov_corpus(spec.initial, spec.transition, length, options);
}

std::vector<std::vector<double>> chain_marginals(std::span<const double> initial,
                                                 const std::vector<std::vector<double>>& transition,
                                                 std::size_t horizon) {
  check_stochastic(initial, transition);
  const std::size_t S = initial.size();
  std::vector<std::vector<double>> out;
  out.reserve(horizon);
  std::vector<double> current(initial.begin(), initial.end());
  for (std::size_t n = 0; n < horizon; ++n) {
    out.push_back(current);
    std::vector<double> next(S, 0.0);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) next[j] += current[i] * transition[i][j];
    current = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracles

namespace {

void check_observed(const Corpus& corpus, std::span<const TokenId> observed) {
  if (observed.size() != corpus.length())
    throw ConfigError(fmt::format("observed length {} does not match corpus length {}",
                                  observed.size(), corpus.length()));
  for (TokenId tok : observed)
    if (!corpus.vocab().contains(tok))
      throw ConfigError(fmt::format("observed token {} outside vocab", tok));
}

bool consistent(const CorpusEntry& e, std::span<const TokenId> observed, TokenId mask) {
  for (std::size_t j = 0; j < observed.size(); ++j)
    if (observed[j] != mask && e.tokens[j] != observed[j]) return false;
  return true;
}

[[noreturn]] void throw_no_entry() {
  throw NoConsistentEntry("observed tokens contradict every corpus entry");
}

}  // namespace

ConditionalMarginals oracle_conditional_marginals(const Corpus& corpus,
                                                  std::span<const TokenId> observed) {
  check_observed(corpus, observed);
  const TokenId mask = corpus.vocab().mask_id();
  const auto K = static_cast<std::size_t>(corpus.vocab().size());

  std::vector<std::size_t> open;
  for (std::size_t j = 0; j < observed.size(); ++j)
    if (observed[j] == mask) open.push_back(j);

  std::vector<std::vector<double>> mass(open.size(), std::vector<double>(K, 0.0));
  double total = 0.0;
  for (const auto& e : corpus.entries()) {
    if (!consistent(e, observed, mask)) continue;
    total += e.weight;
    for (std::size_t i = 0; i < open.size(); ++i)
      mass[i][static_cast<std::size_t>(e.tokens[open[i]])] += e.weight;
  }
  if (total <= 0.0) throw_no_entry();

  ConditionalMarginals out;
  for (std::size_t i = 0; i < open.size(); ++i) {
    for (double& m : mass[i]) m /= total;
    out.emplace(open[i], std::move(mass[i]));
  }
  return out;
}

double oracle_joint(const Corpus& corpus, std::span<const TokenId> observed,
                    std::span<const Assignment> query) {
  check_observed(corpus, observed);
  const TokenId mask = corpus.vocab().mask_id();
  for (const auto& q : query) {
    if (q.position >= observed.size()) throw ConfigError("query position out of range");
    if (observed[q.position] != mask)
      throw ConfigError(fmt::format("query position {} is already observed", q.position));
  }
  double total = 0.0;
  double hit = 0.0;
  for (const auto& e : corpus.entries()) {
    if (!consistent(e, observed, mask)) continue;
    total += e.weight;
    bool match = true;
    for (const auto& q : query)
      if (e.tokens[q.position] != q.token) {
        match = false;
        break;
      }
    if (match) hit += e.weight;
  }
  if (total <= 0.0) throw_no_entry();
  return hit / total;
}

JointArgmax oracle_joint_argmax(const Corpus& corpus, std::span<const TokenId> observed,
                                std::span<const std::size_t> positions) {
  check_observed(corpus, observed);
  const TokenId mask = corpus.vocab().mask_id();
  std::map<std::vector<TokenId>, double> mass;
  double total = 0.0;
  for (const auto& e : corpus.entries()) {
    if (!consistent(e, observed, mask)) continue;
    total += e.weight;
    std::vector<TokenId> key;
    key.reserve(positions.size());
    for (std::size_t p : positions) key.push_back(e.tokens.at(p));
    mass[key] += e.weight;
  }
  if (total <= 0.0) throw_no_entry();
  JointArgmax best;
  for (const auto& [key, w] : mass) {
    if (w > best.probability * total) {
      best.tokens = key;
      best.probability = w / total;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// IO

namespace {

std::string format_weight(double w) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, w);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_corpus(std::ostream& out, const Corpus& corpus) {
  const Vocab& v = corpus.vocab();
  out << v.size() << ' ' << corpus.length() << ' ' << v.mask_id() << ' ' << v.eot_id() << '\n';
  for (const auto& e : corpus.entries()) {
    out << format_weight(e.weight);
    for (TokenId tok : e.tokens) out << ' ' << tok;
    out << '\n';
  }
}

Corpus read_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("corpus file is empty");
  std::istringstream header(line);
  int K = 0;
  std::size_t L = 0;
  TokenId mask = 0;
  TokenId eot = 0;
  if (!(header >> K >> L >> mask >> eot))
    throw ConfigError("corpus header must be 'K L mask_id eot_id'");
  Vocab vocab(K, mask, eot);

  std::vector<CorpusEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::string weight_text;
    row >> weight_text;
    CorpusEntry e;
    const auto res = std::from_chars(weight_text.data(), weight_text.data() + weight_text.size(),
                                     e.weight);
    if (res.ec != std::errc() || res.ptr != weight_text.data() + weight_text.size())
      throw ConfigError(fmt::format("corpus line {}: bad weight '{}'", line_no, weight_text));
    TokenId tok = 0;
    while (row >> tok) e.tokens.push_back(tok);
    if (!row.eof()) throw ConfigError(fmt::format("corpus line {}: bad token id", line_no));
    entries.push_back(std::move(e));
  }
  return Corpus(std::move(vocab), L, std::move(entries));
}

}  // namespace mdlab
