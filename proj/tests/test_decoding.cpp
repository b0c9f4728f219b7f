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

#include <cmath>
#include <memory>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mdlab/decoding.hpp"
#include "mdlab/error.hpp"
#include "mdlab/neural.hpp"
#include "oracles.hpp"

using namespace mdlab;

namespace {

const std::vector<TokenId> kPrompt{toy::kMask, toy::kMask, toy::kC, toy::kD, toy::kMask};

std::shared_ptr<const Corpus> toy_ptr() { return std::make_shared<const Corpus>(build_toy_corpus()); }

DecodePolicy policy(Strategy s) {
  DecodePolicy p;
  p.strategy = s;
  return p;
}

std::vector<TokenId> committed_tokens(const DecodeTrace& t) {
  std::vector<TokenId> out;
  for (const auto& e : t.commits()) out.push_back(e.token);
  return out;
}

// Vocab {0, 1, MASK=2, EOT=3}; after token 0 the sequence usually ends.
Corpus eot_corpus() {
  return Corpus(Vocab(4, 2, 3), 4, {{{0, 3, 3, 3}, 0.6}, {{0, 1, 3, 3}, 0.3}, {{1, 1, 1, 1}, 0.1}});
}

}  // namespace

TEST_SUITE("decoding") {

TEST_CASE("reverse_step") {
  const std::size_t n = 10000;
  MaskedSeq x{std::vector<TokenId>(n, 2), 2, 1.0};
  x.tokens[0] = 1;
  DenoiserOutput out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 3)};
  out.probs.col(0).setOnes();
  out.probs(0, 0) = 0.0;
  out.probs(0, 1) = 1.0;
  Rng rng(5);
  const Schedule lin = Schedule::linear();

  const MaskedSeq half = reverse_step(x, out, lin, 0.5, {}, rng);
  CHECK(half.t == 0.5);
  CHECK(half.tokens[0] == 1);
  std::size_t still = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (half.masked(j)) ++still;
    else CHECK(half.tokens[j] == 0);
  }
  const double frac = static_cast<double>(still) / (n - 1);
  CHECK(std::abs(frac - 0.5) < 3 * std::sqrt(0.25 / (n - 1)));

  const MaskedSeq all = reverse_step(x, out, lin, 0.0, {}, rng);
  CHECK(all.masked_count() == 0);
  CHECK_THROWS_AS(reverse_step(x, out, lin, 1.0, {}, rng), ConfigError);
}

TEST_CASE("temperature sampling") {
  DenoiserOutput out{Eigen::MatrixXd::Zero(1, 3)};
  out.probs(0, 0) = 0.25;
  out.probs(0, 1) = 0.75;
  Rng rng(8);
  const int n = 20000;
  for (const auto& [tau, expected] : {std::pair{1.0, 0.25}, std::pair{0.5, 0.1}}) {
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += select_token(out, 0, {false, tau}, rng) == 0;
    CHECK(std::abs(zeros / double(n) - expected) < 3 * std::sqrt(expected * (1 - expected) / n));
  }
  CHECK(select_token(out, 0, {}, rng) == 1);
}

TEST_CASE("toy ar_order") {
  const auto corpus = toy_ptr();
  const TabularDenoiser d(corpus);
  const DecodeTrace t = decode(d, kPrompt, policy(Strategy::kArOrder), 0);
  const auto c = t.commits();
  REQUIRE(c.size() == 3);
  CHECK(c[0].position == 0);
  CHECK(c[0].token == toy::kA);
  CHECK(c[0].probability == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(c[1].token == toy::kB);
  CHECK(c[1].probability == doctest::Approx(34.0 / 55).epsilon(1e-12));
  CHECK(c[2].token == toy::kFirstE);
  CHECK(c[2].probability == doctest::Approx(1.0 / 34).epsilon(1e-12));
  CHECK(t.steps == 3);
  CHECK(joint_prob_of_trace(*corpus, kPrompt, t) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("toy confidence commits B first") {
  const TabularDenoiser d(toy_ptr());
  const DecodeTrace t = decode(d, kPrompt, policy(Strategy::kConfidence), 0);
  const auto c = t.commits();
  REQUIRE(c.size() == 3);
  CHECK(c[0].position == 1);
  CHECK(c[0].token == toy::kB);
  CHECK(c[1].position == 0);
  CHECK(c[1].token == toy::kAPrime);
  CHECK(c[2].token == toy::kFirstE + 55);
}

TEST_CASE("toy parallel_k=2 commits the suboptimal pair") {
  const auto corpus = toy_ptr();
  const TabularDenoiser d(corpus);
  DecodePolicy p = policy(Strategy::kParallelK);
  p.k = 2;
  p.max_positions = 2;
  const DecodeTrace t = decode(d, kPrompt, p, 0);
  CHECK(t.steps == 1);
  CHECK(committed_tokens(t) == std::vector<TokenId>{toy::kA, toy::kB});
  CHECK(joint_prob_of_trace(*corpus, kPrompt, t) == doctest::Approx(0.34).epsilon(1e-12));

  const TraceReport r = annotate_trace(*corpus, t);
  REQUIRE(r.steps.size() == 1);
  CHECK(r.steps[0].joint == doctest::Approx(0.34).epsilon(1e-12));
  CHECK(r.steps[0].best_joint == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(r.steps[0].best_tokens == std::vector<TokenId>{toy::kAPrime, toy::kB});
  CHECK(r.steps[0].suboptimal);
  CHECK(r.suboptimal);
  CHECK(r.consistent);

  // the product of the marginals differs from the joint
  CHECK(0.55 * 0.69 != doctest::Approx(0.34));
  const std::vector<Assignment> q{{0, toy::kA}, {1, toy::kB}};
  CHECK(oracle_joint(*corpus, kPrompt, q) == doctest::Approx(oracle::toy_pair(toy::kA, toy::kB)));
}

TEST_CASE("full parallel_k=2 run") {
  const TabularDenoiser d(toy_ptr());
  DecodePolicy p = policy(Strategy::kParallelK);
  p.k = 2;
  const DecodeTrace t = decode(d, kPrompt, p, 0);
  CHECK(t.steps == 2);
  CHECK(t.commits().size() == 3);
  CHECK(t.commits_by_step().size() == 2);
}

TEST_CASE("semi_ar with B=1 equals ar_order") {
  const TabularDenoiser d(toy_ptr());
  DecodePolicy p = policy(Strategy::kSemiAr);
  p.block = 1;
  const DecodeTrace a = decode(d, kPrompt, p, 0);
  const DecodeTrace b = decode(d, kPrompt, policy(Strategy::kArOrder), 0);
  CHECK(a.final_sequence == b.final_sequence);
  CHECK(a.commits_by_step() == b.commits_by_step());
}

TEST_CASE("semi_ar block alignment") {
  const TabularDenoiser d(toy_ptr());
  DecodePolicy p = policy(Strategy::kSemiAr);
  p.block = 2;
  const DecodeTrace left = decode(d, kPrompt, p, 0);
  CHECK(left.commits()[0].position == 1);  // block {0, 1}, confidence inside
  CHECK(left.final_sequence[0] == toy::kAPrime);

  p.alignment = BlockAlignment::kReversePartition;  // blocks [0,1) [1,3) [3,5)
  const DecodeTrace part = decode(d, kPrompt, p, 0);
  CHECK(part.commits()[0].position == 0);
  CHECK(part.final_sequence[0] == toy::kA);
  CHECK(part.final_sequence[1] == toy::kB);
}

TEST_CASE("prompt tokens are never overwritten and decoding terminates") {
  const TabularDenoiser d(toy_ptr());
  for (Strategy s : {Strategy::kConfidence, Strategy::kArOrder, Strategy::kReverseOrder,
                     Strategy::kRandomOrder, Strategy::kParallelK, Strategy::kSemiAr}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const DecodeTrace t = decode(d, kPrompt, policy(s), seed);
      CHECK(t.final_sequence[2] == toy::kC);
      CHECK(t.final_sequence[3] == toy::kD);
      for (TokenId tok : t.final_sequence) CHECK(tok != toy::kMask);
      for (const auto& e : t.commits()) CHECK(kPrompt[e.position] == toy::kMask);
      CHECK(t.steps <= 3);
    }
  }
  const DecodeTrace none = decode(d, std::vector<TokenId>{toy::kA, toy::kB, toy::kC, toy::kD, toy::kFirstE},
                                  policy(Strategy::kConfidence), 0);
  CHECK(none.steps == 0);
  CHECK(none.events.empty());
}

TEST_CASE("stop on EOT fills the tail") {
  const auto corpus = std::make_shared<const Corpus>(eot_corpus());
  const TabularDenoiser d(corpus);
  DecodePolicy p = policy(Strategy::kArOrder);
  p.stop_on_eot = true;
  const std::vector<TokenId> prompt(4, 2);
  const DecodeTrace t = decode(d, prompt, p, 0);
  CHECK(t.final_sequence == std::vector<TokenId>{0, 3, 3, 3});
  CHECK(t.steps == 2);
  int forced = 0;
  for (const auto& e : t.events)
    if (e.kind == EventKind::kForcedEot) {
      ++forced;
      CHECK(e.step == 1);
      CHECK(e.position > 1);
    }
  CHECK(forced == 2);
  CHECK(t.commits_by_step().back().size() == 3);

  p.stop_on_eot = false;
  const DecodeTrace u = decode(d, prompt, p, 0);
  CHECK(u.steps == 4);
  for (const auto& e : u.events) CHECK(e.kind == EventKind::kCommit);
}

TEST_CASE("random_init events") {
  const Corpus c = build_toy_corpus();
  NeuralDenoiserConfig mc;
  mc.d_model = 8;
  mc.n_layers = 1;
  mc.d_ff = 16;
  mc.max_len = 5;
  const NeuralDenoiser m(c.vocab(), mc);
  DecodePolicy p = policy(Strategy::kRandomInit);
  p.rho = 0.5;
  p.rounds = 2;
  const DecodeTrace t = decode(m, kPrompt, p, 4);

  int fills = 0, remasks = 0;
  for (const auto& e : t.events) {
    if (e.kind == EventKind::kRandomFill) {
      ++fills;
      CHECK(!c.vocab().is_special(e.token));
      CHECK(e.step < 2);
    }
    if (e.kind == EventKind::kRemask) ++remasks;
  }
  CHECK(fills == 3);  // round 0: 2 of 3 masked, round 1: 1 of 2
  CHECK(remasks == fills);
  CHECK(t.commits().size() == 3);
  for (TokenId tok : t.final_sequence) CHECK(tok != toy::kMask);
  CHECK(t.final_sequence[2] == toy::kC);

  const DecodeTrace again = decode(m, kPrompt, p, 4);
  CHECK(again.final_sequence == t.final_sequence);
}

TEST_CASE("trace jsonl") {
  const auto corpus = toy_ptr();
  const TabularDenoiser d(corpus);
  DecodePolicy p = policy(Strategy::kParallelK);
  p.k = 2;
  const DecodeTrace t = decode(d, kPrompt, p, 0);
  const TraceReport r = annotate_trace(*corpus, t);
  std::ostringstream os;
  write_trace_jsonl(os, t, corpus->vocab(), &r);
  std::istringstream is(os.str());
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == t.events.size() + 1);
  CHECK(lines[0]["event"] == "commit");
  CHECK(lines[0]["label"] == "A");
  const auto& fin = lines.back();
  CHECK(fin["final"] == true);
  CHECK(fin["labels"][2] == "C");
  CHECK(fin["suboptimal"] == true);
  CHECK(fin["step_annotations"].size() == 2);
}

TEST_CASE("policy validation") {
  DecodePolicy p;
  p.k = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.rho = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.inner = Strategy::kSemiAr;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.selection = {false, 0.0};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK(parse_strategy("parallel_k") == Strategy::kParallelK);
  CHECK_THROWS_AS(parse_strategy("beam"), ConfigError);

  const TabularDenoiser d(toy_ptr());
  const std::vector<TokenId> bad{toy::kMask, 500, toy::kC, toy::kD, toy::kMask};
  CHECK_THROWS_AS(decode(d, bad, DecodePolicy{}, 0), ConfigError);
}

}  // TEST_SUITE
