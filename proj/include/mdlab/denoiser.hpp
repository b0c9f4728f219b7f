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

#include <memory>

#include <Eigen/Dense>

#include "mdlab/corpus.hpp"
#include "mdlab/sequence.hpp"

namespace mdlab {

// f(x_t): one probability row per position (L x K). The MASK column is
// identically zero and unmasked rows are point masses on the observed token.
struct DenoiserOutput {
  Eigen::MatrixXd probs;

  std::size_t length() const { return static_cast<std::size_t>(probs.rows()); }
  double row_max(std::size_t j) const { return probs.row(static_cast<Eigen::Index>(j)).maxCoeff(); }
  // Most probable token; ties go to the lowest id.
  TokenId argmax(std::size_t j) const;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual DenoiserOutput denoise(const MaskedSeq& input) const = 0;
  virtual const Vocab& vocab() const = 0;
  virtual std::size_t max_length() const = 0;
};

// Bayes-optimal denoiser: masked rows are the exact conditional marginals of
// the corpus given the unmasked tokens. Ignores t and the count of masks.
class TabularDenoiser final : public Denoiser {
 public:
  explicit TabularDenoiser(std::shared_ptr<const Corpus> corpus);

  DenoiserOutput denoise(const MaskedSeq& input) const override;
  const Vocab& vocab() const override { return corpus_->vocab(); }
  std::size_t max_length() const override { return corpus_->length(); }
  const Corpus& corpus() const { return *corpus_; }

 private:
  std::shared_ptr<const Corpus> corpus_;
};

DenoiserOutput tabular_denoise(const Corpus& corpus, const MaskedSeq& input);

// Sets unmasked rows to point masses on their observed tokens.
void apply_unmasked_convention(DenoiserOutput& output, const MaskedSeq& input);

// Checks row sums (within tol), the zero MASK column and the unmasked-row
// convention.
bool satisfies_output_invariants(const DenoiserOutput& output, const MaskedSeq& input,
                                  double tol = 1e-9);

}  // namespace mdlab
