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
#include "mdlab/analysis.hpp"
#include "mdlab/error.hpp"
#include "mdlab/random.hpp"
#include "oracles.hpp"

using namespace mdlab;

namespace {

// Always predicts token 0 at masked positions.
class ConstantDenoiser final : public Denoiser {
 public:
  ConstantDenoiser() : vocab_(4, 2, 3) {}
  DenoiserOutput denoise(const MaskedSeq& in) const override {
    DenoiserOutput out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in.size()), 4)};
    out.probs.col(0).setConstant(0.7);
    out.probs.col(1).setConstant(0.3);
    apply_unmasked_convention(out, in);
    return out;
  }
  const Vocab& vocab() const override { return vocab_; }
  std::size_t max_length() const override { return 64; }

 private:
  Vocab vocab_;
};

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("zipf top probabilities") {
  const ZipfParams two = zipf_top_probs(1.0, 2);
  CHECK(two.omega1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(two.omega2 == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const ZipfParams a = zipf_top_probs(1.05, 150000);
  CHECK(std::abs(a.omega1 - oracle::kOmega1_105) < 1e-15);
  CHECK(std::abs(a.omega2 - oracle::kOmega2_105) < 1e-15);
  CHECK(std::abs(a.omega1 - static_cast<double>(1.0L / oracle::zipf_norm(1.05, 150000))) < 1e-14);
  const ZipfParams b = zipf_top_probs(2.31, 130000);
  CHECK(std::abs(b.omega1 - oracle::kOmega1_231) < 1e-15);
  CHECK(std::abs(b.omega2 - oracle::kOmega2_231) < 1e-15);

  CHECK_THROWS_AS(zipf_top_probs(1.0, 1), ConfigError);
  CHECK_THROWS_AS(zipf_top_probs(0.0, 10), ConfigError);
}

TEST_CASE("bound curve") {
  for (const auto& [s, N] : {std::pair{1.05, std::int64_t{150000}}, std::pair{2.31, std::int64_t{130000}},
                             std::pair{1.5, std::int64_t{8}}}) {
    const ZipfParams z = zipf_top_probs(s, N);
    CHECK(marginal_upper_bound(z, 1) == z.omega1);
    const auto rec = oracle::bound_recursion(z.omega1, z.omega2, 300);
    const BoundCurve c = bound_curve(z, 300);
    for (int n = 1; n <= 300; ++n) CHECK(c.values[n - 1] == doctest::Approx(rec[n - 1]).epsilon(1e-12));
    for (int n = 2; n <= 300; ++n) {
      if (c.values[n - 2] - c.values[n - 1] < 1e-15) break;  // converged to machine precision
      CHECK(c.values[n - 1] < c.values[n - 2]);
    }
    for (int n = 200; n <= 300; ++n) CHECK(std::abs(c.values[n - 1] - bound_limit(z)) < 1e-9);
  }
  CHECK(std::abs(bound_limit(zipf_top_probs(1.05, 150000)) - oracle::kLimit_105) < 1e-15);
  CHECK_THROWS_AS(marginal_upper_bound(zipf_top_probs(1.0, 2), 0), ConfigError);
}

TEST_CASE("ppl") {
  CHECK(ppl(0.25, 2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ppl(1.0, 5) == 1.0);
  CHECK(ppl(0.5, 1) == 2.0);
  CHECK_THROWS_AS(ppl(0.0, 3), ZeroProbability);
  CHECK_THROWS_AS(ppl(1.5, 3), ConfigError);
  CHECK_THROWS_AS(ppl(0.5, 0), ConfigError);
}

TEST_CASE("parallel metrics") {
  const std::vector<double> toy{0.55, 0.69};
  const ParallelMetrics m = parallel_metrics(toy);
  CHECK(m.m1 == 0.55);
  CHECK(m.m2 == doctest::Approx(0.3795).epsilon(1e-14));
  CHECK(m.m3 == doctest::Approx(0.24).epsilon(1e-14));

  const std::vector<double> low{0.3, 0.4, 0.5};
  CHECK(parallel_metrics(low).m3 == 0.0);
  const std::vector<double> bad{0.5, 1.5};
  CHECK_THROWS_AS(parallel_metrics(bad), ConfigError);

  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(1 + rng.below(6));
    for (double& x : p) x = 0.5 + 0.5 * rng.uniform();
    const ParallelMetrics r = parallel_metrics(p);
    CHECK(r.m3 <= r.m2 + 1e-15);
    CHECK(r.m2 <= r.m1);
  }
}

TEST_CASE("ppl table") {
  const ZipfParams z = zipf_top_probs(1.05, 150000);
  const auto rows = ppl_table(z, 8);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].ppl == 1.0 / z.omega1);
  for (int k = 0; k < 8; ++k) {
    CHECK(rows[k].k == k + 1);
    CHECK(rows[k].ppl == doctest::Approx(oracle::kPplRows_105[k]).epsilon(1e-12));
  }
  // near-uniform Zipf: every marginal is 1/N
  const auto flat = ppl_table(zipf_top_probs(1e-9, 1000), 5);
  for (const auto& r : flat) CHECK(r.ppl == doctest::Approx(1000.0).epsilon(1e-5));

  std::ostringstream os;
  write_ppl_csv(os, rows);
  CHECK(os.str().rfind("k,ppl\n1,9.559734\n2,13.044800\n", 0) == 0);
}

TEST_CASE("max-probability profile of an enumerated chain") {
  const MarkovChainSpec spec = make_zipf_chain_spec(8, 1.5, 8);
  const std::size_t L = 6;
  const auto corpus = std::make_shared<const Corpus>(build_zipf_chain_corpus(spec, L));
  const TabularDenoiser d(corpus);
  const std::vector<std::vector<TokenId>> empty{std::vector<TokenId>(L, corpus->vocab().mask_id())};
  const auto profile = max_prob_profile(d, empty);

  Eigen::MatrixXd P(8, 8);
  Eigen::RowVectorXd init(8);
  for (int i = 0; i < 8; ++i) {
    init(i) = spec.initial[i];
    for (int j = 0; j < 8; ++j) P(i, j) = spec.transition[i][j];
  }
  const auto expected = oracle::chain_max_marginals(P, init, static_cast<int>(L));
  const ZipfParams z = chain_zipf_params(spec);
  for (std::size_t n = 0; n < L; ++n) {
    CHECK(profile[n] == doctest::Approx(expected[n]).epsilon(1e-12));
    CHECK(profile[n] <= marginal_upper_bound(z, static_cast<int>(n + 1)) + 1e-12);
  }
}

TEST_CASE("profile of a single-sequence corpus is flat at one") {
  const Vocab v(5, 3, 4);
  const auto one = std::make_shared<const Corpus>(Corpus(v, 4, {{{0, 1, 2, 0}, 1.0}}));
  const TabularDenoiser d(one);
  const auto battery = prompt_battery(*one, 3, 1, 0);
  CHECK(battery[0] == std::vector<TokenId>{0, 3, 3, 3});
  for (double p : max_prob_profile(d, battery)) CHECK(p == 1.0);

  const Homogenization h = homogenization_score(d, battery[0]);
  CHECK(!h.mode_token);
  for (double f : h.collapse_fraction) CHECK(f == 0.0);
  CHECK_THROWS_AS(prompt_battery(*one, 1, 5, 0), LengthExceeded);
}

TEST_CASE("toy homogenization") {
  const auto corpus = std::make_shared<const Corpus>(build_toy_corpus());
  const TabularDenoiser d(corpus);
  const std::vector<TokenId> prompt{toy::kMask, toy::kMask, toy::kC, toy::kD, toy::kMask};
  const Homogenization h = homogenization_score(d, prompt);
  CHECK(h.argmax == std::vector<TokenId>{toy::kA, toy::kB, toy::kC, toy::kD, toy::kFirstE});
  CHECK(!h.mode_token);
  CHECK(h.distances == std::vector<std::size_t>{1, 2});
  CHECK(h.count_at_distance == std::vector<std::size_t>{2, 1});
  CHECK(h.longest_run == 1);
}

TEST_CASE("collapsed predictions") {
  const ConstantDenoiser d;
  const std::vector<TokenId> prompt{1, 2, 2, 2, 1, 2};
  const Homogenization h = homogenization_score(d, prompt);
  REQUIRE(h.mode_token);
  CHECK(*h.mode_token == 0);
  CHECK(h.distances == std::vector<std::size_t>{1, 2, 3});
  CHECK(h.collapse_fraction == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(h.longest_run == 3);
  CHECK(h.longest_run_token == 0);

  const std::vector<std::vector<TokenId>> prompts{prompt, {1, 1, 2, 1, 1, 1}};
  const HomogenizationSummary s = homogenization_summary(d, prompts);
  CHECK(s.distances == std::vector<std::size_t>{1, 2, 3});
  CHECK(s.collapse_fraction[0] == doctest::Approx(2.0 / 3));  // lone mask of prompt 2 has no mode
  CHECK(s.mean_longest_run == doctest::Approx(2.0));
}

TEST_CASE("csv writers") {
  std::ostringstream b;
  write_bound_csv(b, bound_curve(zipf_top_probs(1.0, 2), 2));
  CHECK(b.str() == "n,bound\n1,0.666667\n2,0.555556\n");
  std::ostringstream p;
  const std::vector<double> prof{0.5, 0.25};
  const ZipfParams z = zipf_top_probs(1.0, 2);
  write_profile_csv(p, prof, &z);
  CHECK(p.str() == "n,mean_max_prob,bound\n1,0.500000,0.666667\n2,0.250000,0.555556\n");
  std::ostringstream h;
  const std::vector<std::size_t> dist{1, 2};
  const std::vector<double> frac{0.5, 1.0};
  write_homogenization_csv(h, dist, frac);
  CHECK(h.str() == "distance,collapse_fraction\n1,0.500000\n2,1.000000\n");
}

}  // TEST_SUITE
