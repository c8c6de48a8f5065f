// Copyright 2026 The stopburst Authors.
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

namespace stopburst::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

std::string version();

// Runs one command. `args` excludes the program name. Returns 0 on success,
// 1 on an operational error (bad input data, missing files, load failures)
// and 2 on a usage error (unknown subcommand, bad or missing flags).
//
// Every command that writes output also writes a provenance file beside it
// holding the tool version, the argv and the fully resolved configuration;
// `replay <provenance.json>` re-runs the command from that file alone.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stopburst::cli
