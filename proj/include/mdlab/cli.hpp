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

#include <iosfwd>
#include <string>
#include <vector>

namespace mdlab {

// Environment variable naming the directory relative output paths resolve
// against.
inline constexpr const char* kOutRootEnv = "MDLAB_OUT_ROOT";

// Entry point of the mdlab tool. Returns the process exit code: 0 success,
// 2 configuration or I/O error, 3 numerical failure, 4 oracle inconsistency.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Same, with argv[1..] given as strings.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdlab
