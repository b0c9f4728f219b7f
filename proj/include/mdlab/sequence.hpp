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

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mdlab {

using TokenId = std::int32_t;

// One observed (position, token) pair of a partial assignment.
struct Assignment {
  std::size_t position;
  TokenId token;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

// A sequence state x_t: tokens with MASK at corrupted positions, and the
// diffusion time it was produced at. masked(j) holds iff tokens[j] == mask_id.
struct MaskedSeq {
  std::vector<TokenId> tokens;
  TokenId mask_id = 0;
  double t = 0.0;

  std::size_t size() const { return tokens.size(); }
  bool masked(std::size_t j) const { return tokens[j] == mask_id; }

  std::vector<bool> mask_flags() const {
    std::vector<bool> flags(tokens.size());
    for (std::size_t j = 0; j < tokens.size(); ++j) flags[j] = masked(j);
    return flags;
  }

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (TokenId tok : tokens) n += (tok == mask_id);
    return n;
  }

  std::vector<std::size_t> masked_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < tokens.size(); ++j)
      if (masked(j)) out.push_back(j);
    return out;
  }

  // Fraction of masked positions; the natural t for states not produced by
  // the forward process.
  double masked_fraction() const {
    return tokens.empty() ? 0.0
                          : static_cast<double>(masked_count()) /
                                static_cast<double>(tokens.size());
  }
};

}  // namespace mdlab
