// Copyright 2026 Shield Authors
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
#include <string>
#include <string_view>
#include <vector>

namespace shield::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

// Splits on runs of ASCII whitespace; no empty pieces.
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

// Last path component, accepting both '/' and '\' separators.
std::string basename(std::string_view path);

// "1.2.3.4:80" -> "1.2.3.4"; "[::1]:443" -> "::1"; bare addresses unchanged.
std::string strip_port(std::string_view address);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a64(std::string_view s);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace shield::text
