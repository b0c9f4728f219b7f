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

#include "mdlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

Schedule Schedule::linear() { return Schedule(Kind::kLinear); }

Schedule Schedule::cosine() { return Schedule(Kind::kCosine); }

Schedule Schedule::from_table(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw ConfigError("schedule table needs at least two knots");
  if (knots.front() != std::pair{0.0, 1.0} || knots.back() != std::pair{1.0, 0.0})
    throw ConfigError("schedule table must start at (0, 1) and end at (1, 0)");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].first > knots[i - 1].first))
      throw ConfigError("schedule table times must increase strictly");
    if (!(knots[i].second < knots[i - 1].second))
      throw ConfigError("schedule table alphas must decrease strictly");
  }
  Schedule s(Kind::kTable);
  s.knots_ = std::move(knots);
  return s;
}

Schedule Schedule::load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open schedule table '{}'", path.string()));
  std::vector<std::pair<double, double>> knots;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    double t = 0.0;
    double a = 0.0;
    if (!(row >> t)) continue;
    if (!(row >> a)) throw ConfigError("schedule table rows need two columns");
    knots.emplace_back(t, a);
  }
  return from_table(std::move(knots));
}

Schedule Schedule::from_name(std::string_view name) {
  if (name == "linear") return linear();
  if (name == "cosine") return cosine();
  if (name.starts_with("table:")) return load_table(std::string(name.substr(6)));
  throw ConfigError(fmt::format("unknown schedule '{}'", name));
}

std::string_view Schedule::name() const {
  switch (kind_) {
    case Kind::kLinear:
      return "linear";
    case Kind::kCosine:
      return "cosine";
    case Kind::kTable:
      return "table";
  }
  return "?";
}

double Schedule::alpha(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  switch (kind_) {
    case Kind::kLinear:
      return 1.0 - t;
    case Kind::kCosine:
      return t >= 1.0 ? 0.0 : std::cos(0.5 * std::numbers::pi * t);
    case Kind::kTable: {
      auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                 [](double v, const auto& k) { return v < k.first; });
      if (it == knots_.end()) return knots_.back().second;
      const auto& hi = *it;
      const auto& lo = *(it - 1);
      const double w = (t - lo.first) / (hi.first - lo.first);
      return lo.second + w * (hi.second - lo.second);
    }
  }
  return 0.0;
}

double Schedule::alpha_prime(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  switch (kind_) {
    case Kind::kLinear:
      return -1.0;
    case Kind::kCosine:
      return -0.5 * std::numbers::pi * std::sin(0.5 * std::numbers::pi * t);
    case Kind::kTable: {
      // slope of the segment starting at t; the last segment at t = 1
      auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                 [](double v, const auto& k) { return v < k.first; });
      if (it == knots_.end()) --it;
      const auto& hi = *it;
      const auto& lo = *(it - 1);
      return (hi.second - lo.second) / (hi.first - lo.first);
    }
  }
  return 0.0;
}

double alpha_cond(const Schedule& schedule, double t, double s) {
  if (!(s >= 0.0 && s < t && t <= 1.0))
    throw ConfigError(fmt::format("alpha_cond requires 0 <= s < t <= 1 (s={}, t={})", s, t));
  const double as = schedule.alpha(s);
  if (as <= 0.0) throw DegenerateSchedule(fmt::format("alpha({}) = 0", s));
  return schedule.alpha(t) / as;
}

MaskedSeq forward_mask(std::span<const TokenId> clean, TokenId mask_id, const Schedule& schedule,
                       double t, Rng& rng) {
  const double keep = schedule.alpha(t);
  MaskedSeq out{{clean.begin(), clean.end()}, mask_id, t};
  for (TokenId& tok : out.tokens) {
    if (tok == mask_id) throw ConfigError("forward_mask input already contains MASK");
    if (!(rng.uniform() < keep)) tok = mask_id;
  }
  return out;
}

MaskedSeq forward_mask(std::span<const TokenId> clean, TokenId mask_id, const Schedule& schedule,
                       double t, std::uint64_t seed) {
  Rng rng(seed);
  return forward_mask(clean, mask_id, schedule, t, rng);
}

MaskedSeq forward_mask_from(const MaskedSeq& input, const Schedule& schedule, double t,
                            Rng& rng) {
  const double keep = input.t < t ? alpha_cond(schedule, t, input.t) : 1.0;
  MaskedSeq out = input;
  out.t = std::max(t, input.t);
  for (TokenId& tok : out.tokens) {
    if (tok == out.mask_id) continue;
    if (!(rng.uniform() < keep)) tok = out.mask_id;
  }
  return out;
}

double loss_weight(const Schedule& schedule, double t) {
  if (!(t > 0.0)) throw DegenerateWeight("loss weight diverges at t = 0");
  if (t > 1.0) throw ConfigError("loss weight requires t <= 1");
  if (schedule.kind() == Schedule::Kind::kLinear) return 1.0 / t;
  const double denom = 1.0 - schedule.alpha(t);
  if (denom <= 0.0) throw DegenerateWeight(fmt::format("1 - alpha({}) = 0", t));
  return -schedule.alpha_prime(t) / denom;
}

}  // namespace mdlab
