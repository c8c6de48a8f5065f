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

#include <string>
#include <string_view>
#include <vector>

namespace stopburst {

std::string_view trim(std::string_view s) noexcept;

// Splits on \n, dropping a trailing \r from each line.
std::vector<std::string_view> split_lines(std::string_view text);

std::vector<std::string> split(std::string_view s, char sep);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Strict full-string parse; nullopt-like failure reported via bool.
bool parse_double(std::string_view s, double& out) noexcept;

bool is_valid_utf8(std::string_view s) noexcept;

}  // namespace stopburst
