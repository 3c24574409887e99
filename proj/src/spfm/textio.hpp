// Copyright 2026 The SPFM Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Locale-independent number formatting and small file helpers shared by the
// CSV writers.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spfm {

// Shortest representation that round-trips; always uses '.'.
std::string format_double(double v);
double parse_double(std::string_view s);
unsigned long long parse_uint(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_quote(std::string_view field);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace spfm
