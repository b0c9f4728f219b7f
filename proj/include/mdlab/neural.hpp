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
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdlab/denoiser.hpp"

namespace mdlab {

struct NeuralDenoiserConfig {
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 64;
  int max_len = 0;
  std::uint64_t param_seed = 0;

  void validate() const;
};

struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
};

// One buffer per parameter, same order and shapes as parameters().
using Gradients = std::vector<Eigen::MatrixXd>;

// One supervised example: the loss is weight * sum over targets of
// -log p_j(clean_j).
struct TrainingItem {
  MaskedSeq input;
  std::vector<TokenId> clean;
  std::vector<std::size_t> targets;
  double weight = 1.0;
};

// Counts probabilities clamped to kProbabilityFloor inside -log.
struct LossDiagnostics {
  std::size_t clamped = 0;
};

inline constexpr double kProbabilityFloor = 1e-30;

// Bidirectional transformer denoiser: token embedding plus sinusoidal
// positions, pre-LayerNorm blocks of full (unmasked) multi-head attention and
// a GELU feed-forward, final LayerNorm and an output head. The MASK logit is
// excluded before the softmax, so its probability is exactly zero. Time is
// not an input.
class NeuralDenoiser final : public Denoiser {
 public:
  NeuralDenoiser(Vocab vocab, NeuralDenoiserConfig config);

  DenoiserOutput denoise(const MaskedSeq& input) const override;
  const Vocab& vocab() const override { return vocab_; }
  std::size_t max_length() const override { return static_cast<std::size_t>(config_.max_len); }

  const NeuralDenoiserConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  Gradients zero_gradients() const;

  // Raw softmax rows (no unmasked-row convention) for every position.
  Eigen::MatrixXd predict(const MaskedSeq& input) const;

  // Loss of one item; when `grads` is non-null adds grad_scale * dloss/dparam.
  double item_loss(const TrainingItem& item, Gradients* grads, double grad_scale = 1.0,
                   LossDiagnostics* diagnostics = nullptr) const;

  // Mean item loss; gradients (when requested) are of the mean.
  double batch_loss(std::span<const TrainingItem> batch, Gradients* grads,
                    LossDiagnostics* diagnostics = nullptr) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static NeuralDenoiser load(std::istream& in);
  static NeuralDenoiser load(const std::filesystem::path& path);

 private:
  struct ForwardCache;

  Eigen::MatrixXd forward(const MaskedSeq& input, ForwardCache* cache) const;
  void backward(const MaskedSeq& input, const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                Gradients& grads) const;
  void check_input(const MaskedSeq& input) const;

  Vocab vocab_;
  NeuralDenoiserConfig config_;
  std::vector<Parameter> params_;
  Eigen::MatrixXd positions_;  // max_len x d_model, fixed
};

struct GradientCheckOptions {
  double step = 1e-4;
  // Parameters beyond this count are subsampled uniformly (seeded).
  std::size_t max_parameters = 100'000;
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

// Central finite differences against the analytic gradient of batch_loss.
// Relative error per scalar: |a - fd| / (|a| + |fd| + 1e-12).
GradientCheckReport gradient_check(NeuralDenoiser& model, std::span<const TrainingItem> batch,
                                   const GradientCheckOptions& options = {});

}  // namespace mdlab
