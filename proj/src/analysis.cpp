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

#include "mdlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "mdlab/error.hpp"
#include "mdlab/random.hpp"
#include "mdlab/training.hpp"

namespace mdlab {

ZipfParams zipf_top_probs(double s, std::int64_t N) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError(fmt::format("zipf exponent must be > 0 (got {})", s));
  if (N < 2) throw ConfigError(fmt::format("zipf support must be >= 2 (got {})", N));
  // Neumaier summation
  double sum = 0.0;
  double comp = 0.0;
  for (std::int64_t k = N; k >= 1; --k) {
    const double term = std::pow(static_cast<double>(k), -s);
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term))
      comp += (sum - t) + term;
    else
      comp += (term - t) + sum;
    sum = t;
  }
  const double omega1 = 1.0 / (sum + comp);
  return {s, N, omega1, std::pow(2.0, -s) * omega1};
}

ZipfParams chain_zipf_params(const MarkovChainSpec& spec) {
  return zipf_top_probs(spec.zipf_s, std::min<std::int64_t>(spec.zipf_N, spec.state_count));
}

double marginal_upper_bound(const ZipfParams& params, int n) {
  if (n < 1) throw ConfigError("bound position must be >= 1");
  if (n == 1) return params.omega1;
  const double d = params.omega1 - params.omega2;
  return params.omega2 / (1.0 - d) + std::pow(d, n) * (1.0 - params.omega1) / (1.0 - d);
}

double bound_limit(const ZipfParams& params) {
  return params.omega2 / (1.0 - (params.omega1 - params.omega2));
}

BoundCurve bound_curve(const ZipfParams& params, int n_max) {
  if (n_max < 1) throw ConfigError("bound curve needs n >= 1");
  BoundCurve curve{params, {}};
  curve.values.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) curve.values.push_back(marginal_upper_bound(params, n));
  return curve;
}

double ppl(double probability, int n) {
  if (n < 1) throw ConfigError("ppl needs n >= 1");
  if (probability == 0.0) throw ZeroProbability("zero joint probability (infinite perplexity)");
  if (!(probability > 0.0 && probability <= 1.0))
    throw ConfigError(fmt::format("probability must lie in (0, 1] (got {})", probability));
  return std::pow(probability, -1.0 / n);
}

ParallelMetrics parallel_metrics(std::span<const double> p) {
  if (p.empty()) throw ConfigError("parallel_metrics needs at least one probability");
  ParallelMetrics m{1.0, 1.0, 0.0};
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(fmt::format("probability {} outside [0, 1]", x));
    m.m1 = std::min(m.m1, x);
    m.m2 *= x;
    sum += x;
  }
  m.m3 = std::max(0.0, sum - static_cast<double>(p.size() - 1));
  return m;
}

std::vector<PplRow> ppl_table(const ZipfParams& params, int max_parallel) {
  if (max_parallel < 1) throw ConfigError("max_parallel must be >= 1");
  std::vector<PplRow> rows;
  double log_joint = 0.0;
  for (int k = 1; k <= max_parallel; ++k) {
    log_joint += std::log(marginal_upper_bound(params, k));
    rows.push_back({k, k == 1 ? 1.0 / params.omega1 : std::exp(-log_joint / k)});
  }
  return rows;
}

std::vector<double> max_prob_profile(const Denoiser& denoiser,
                                     std::span<const std::vector<TokenId>> prompts) {
  if (prompts.empty()) throw ConfigError("max_prob_profile needs at least one prompt");
  const std::size_t L = prompts.front().size();
  std::vector<double> sum(L, 0.0);
  for (const auto& prompt : prompts) {
    if (prompt.size() != L) throw ConfigError("profile prompts must share one length");
    const MaskedSeq in{prompt, denoiser.vocab().mask_id(), 0.0};
    MaskedSeq x = in;
    x.t = in.masked_fraction();
    const DenoiserOutput out = denoiser.denoise(x);
    for (std::size_t j = 0; j < L; ++j) sum[j] += out.row_max(j);
  }
  for (double& v : sum) v /= static_cast<double>(prompts.size());
  return sum;
}

Homogenization homogenization_score(const Denoiser& denoiser, std::span<const TokenId> prompt) {
  MaskedSeq x{{prompt.begin(), prompt.end()}, denoiser.vocab().mask_id(), 0.0};
  x.t = x.masked_fraction();
  const DenoiserOutput out = denoiser.denoise(x);

  Homogenization h;
  h.argmax.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) h.argmax[j] = out.argmax(j);

  std::map<TokenId, std::size_t> freq;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x.masked(j)) ++freq[h.argmax[j]];
  std::size_t best = 0;
  for (const auto& [tok, c] : freq)
    if (c > best) {
      best = c;
      h.mode_token = tok;
    }
  if (best < 2) h.mode_token.reset();

  std::map<std::size_t, std::pair<std::size_t, std::size_t>> by_distance;  // hits, total
  std::optional<std::size_t> last_observed;
  std::size_t run = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!x.masked(j)) {
      last_observed = j;
      run = 0;
      continue;
    }
    const std::size_t d = last_observed ? j - *last_observed : j + 1;
    auto& cell = by_distance[d];
    ++cell.second;
    if (h.mode_token && h.argmax[j] == *h.mode_token) ++cell.first;

    run = (run > 0 && h.argmax[j] == h.argmax[j - 1]) ? run + 1 : 1;
    if (run > h.longest_run) {
      h.longest_run = run;
      h.longest_run_token = h.argmax[j];
    }
  }
  for (const auto& [d, cell] : by_distance) {
    h.distances.push_back(d);
    h.collapse_fraction.push_back(static_cast<double>(cell.first) / static_cast<double>(cell.second));
    h.count_at_distance.push_back(cell.second);
  }
  return h;
}

HomogenizationSummary homogenization_summary(const Denoiser& denoiser,
                                             std::span<const std::vector<TokenId>> prompts) {
  if (prompts.empty()) throw ConfigError("homogenization needs at least one prompt");
  std::map<std::size_t, std::pair<double, double>> pooled;
  HomogenizationSummary summary;
  for (const auto& prompt : prompts) {
    const Homogenization h = homogenization_score(denoiser, prompt);
    for (std::size_t i = 0; i < h.distances.size(); ++i) {
      const double n = static_cast<double>(h.count_at_distance[i]);
      pooled[h.distances[i]].first += h.collapse_fraction[i] * n;
      pooled[h.distances[i]].second += n;
    }
    summary.mean_longest_run += static_cast<double>(h.longest_run);
  }
  summary.mean_longest_run /= static_cast<double>(prompts.size());
  for (const auto& [d, cell] : pooled) {
    summary.distances.push_back(d);
    summary.collapse_fraction.push_back(cell.first / cell.second);
  }
  return summary;
}

std::vector<std::vector<TokenId>> prompt_battery(const Corpus& corpus, int count,
                                                 std::size_t prompt_length, std::uint64_t seed) {
  if (count < 1) throw ConfigError("prompt battery needs count >= 1");
  if (prompt_length > corpus.length()) throw LengthExceeded("prompt longer than the corpus sequences");
  const CorpusSampler sampler(corpus);
  Rng rng(seed);
  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::vector<TokenId> p = corpus.entries()[sampler.draw(rng)].tokens;
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(prompt_length), p.end(),
              corpus.vocab().mask_id());
    prompts.push_back(std::move(p));
  }
  return prompts;
}

void write_bound_csv(std::ostream& out, const BoundCurve& curve) {
  out << "n,bound\n";
  for (std::size_t i = 0; i < curve.values.size(); ++i)
    out << fmt::format("{},{:.6f}\n", i + 1, curve.values[i]);
}

void write_ppl_csv(std::ostream& out, std::span<const PplRow> rows) {
  out << "k,ppl\n";
  for (const auto& r : rows) out << fmt::format("{},{:.6f}\n", r.k, r.ppl);
}

void write_profile_csv(std::ostream& out, std::span<const double> profile, const ZipfParams* bound) {
  out << (bound ? "n,mean_max_prob,bound\n" : "n,mean_max_prob\n");
  for (std::size_t i = 0; i < profile.size(); ++i) {
    out << fmt::format("{},{:.6f}", i + 1, profile[i]);
    if (bound) out << fmt::format(",{:.6f}", marginal_upper_bound(*bound, static_cast<int>(i + 1)));
    out << '\n';
  }
}

void write_homogenization_csv(std::ostream& out, std::span<const std::size_t> distances,
                              std::span<const double> collapse_fraction) {
  out << "distance,collapse_fraction\n";
  for (std::size_t i = 0; i < distances.size(); ++i)
    out << fmt::format("{},{:.6f}\n", distances[i], collapse_fraction[i]);
}

}  // namespace mdlab
