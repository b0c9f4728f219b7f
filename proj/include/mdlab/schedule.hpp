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
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mdlab/random.hpp"
#include "mdlab/sequence.hpp"

namespace mdlab {

// Masking schedule alpha(t): the probability a token is still clean at time
// t. alpha(0) = 1, alpha(1) = 0, strictly decreasing.
class Schedule {
 public:
  enum class Kind { kLinear, kCosine, kTable };

  static Schedule linear();
  // alpha(t) = cos(pi t / 2)
  static Schedule cosine();
  // Piecewise-linear through (t, alpha) knots; must start at (0, 1), end at
  // (1, 0) and decrease strictly.
  static Schedule from_table(std::vector<std::pair<double, double>> knots);
  // Two whitespace-separated columns "t alpha" per line; '#' starts a comment.
  static Schedule load_table(const std::filesystem::path& path);
  // "linear", "cosine", or "table:<path>".
  static Schedule from_name(std::string_view name);

  Kind kind() const { return kind_; }
  std::string_view name() const;
  double alpha(double t) const;
  double alpha_prime(double t) const;

 private:
  explicit Schedule(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::vector<std::pair<double, double>> knots_;
};

// alpha(t | s) = alpha(t) / alpha(s) for s < t.
double alpha_cond(const Schedule& schedule, double t, double s);

// Each position independently keeps its token with probability alpha(t) and
// becomes MASK otherwise. Draws one uniform per position, left to right.
MaskedSeq forward_mask(std::span<const TokenId> clean, TokenId mask_id, const Schedule& schedule,
                       double t, Rng& rng);
MaskedSeq forward_mask(std::span<const TokenId> clean, TokenId mask_id, const Schedule& schedule,
                       double t, std::uint64_t seed);

// Continues corruption of an already-masked state from time `input.t` to
// `t` with keep probability alpha(t | input.t). Masked positions stay masked.
MaskedSeq forward_mask_from(const MaskedSeq& input, const Schedule& schedule, double t, Rng& rng);

// Cross-entropy weight -alpha'(t) / (1 - alpha(t)); 1/t for the linear schedule.
double loss_weight(const Schedule& schedule, double t);

}  // namespace mdlab
