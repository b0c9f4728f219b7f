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

#include "mdlab/denoiser.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

TokenId DenoiserOutput::argmax(std::size_t j) const {
  const auto row = probs.row(static_cast<Eigen::Index>(j));
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return static_cast<TokenId>(best);
}

TabularDenoiser::TabularDenoiser(std::shared_ptr<const Corpus> corpus)
    : corpus_(std::move(corpus)) {
  if (!corpus_) throw ConfigError("tabular denoiser needs a corpus");
}

DenoiserOutput TabularDenoiser::denoise(const MaskedSeq& input) const {
  return tabular_denoise(*corpus_, input);
}

DenoiserOutput tabular_denoise(const Corpus& corpus, const MaskedSeq& input) {
  if (input.mask_id != corpus.vocab().mask_id())
    throw ConfigError("input mask id does not match the corpus vocab");
  const ConditionalMarginals marginals = oracle_conditional_marginals(corpus, input.tokens);
  DenoiserOutput out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(input.size()),
                                           corpus.vocab().size())};
  for (const auto& [pos, row] : marginals)
    out.probs.row(static_cast<Eigen::Index>(pos)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  apply_unmasked_convention(out, input);
  return out;
}

void apply_unmasked_convention(DenoiserOutput& output, const MaskedSeq& input) {
  for (std::size_t j = 0; j < input.size(); ++j) {
    if (input.masked(j)) continue;
    const auto r = static_cast<Eigen::Index>(j);
    output.probs.row(r).setZero();
    output.probs(r, input.tokens[j]) = 1.0;
  }
}

bool satisfies_output_invariants(const DenoiserOutput& output, const MaskedSeq& input,
                                  double tol) {
  if (output.length() != input.size()) return false;
  for (std::size_t j = 0; j < input.size(); ++j) {
    const auto row = output.probs.row(static_cast<Eigen::Index>(j));
    if (!row.allFinite() || row.minCoeff() < 0.0) return false;
    if (std::abs(row.sum() - 1.0) > tol) return false;
    if (row[input.mask_id] != 0.0) return false;
    if (!input.masked(j) && row[input.tokens[j]] != 1.0) return false;
  }
  return true;
}

}  // namespace mdlab
