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

#include "shield/event.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace shield::ingest {

enum class SourceFormat { jsonl_generic, csv_generic };

SourceFormat parse_format(std::string_view name);  // throws ConfigError

struct ParseOptions {
    double reject_ratio = 0.01;  // fraction of non-blank records allowed to fail
    LogLabel label = LogLabel::testing;
    std::string source_tag;
};

struct ParseReport {
    EventLog log;
    std::size_t records = 0;   // non-blank records seen
    std::size_t rejected = 0;
    std::vector<std::string> reject_samples;  // first few reasons, "line N: why"
};

// Reads one file into a timestamp-ordered log (stable for equal timestamps).
// Throws IoError, SchemaError (CSV header lacks a required column) and
// RejectRatioExceeded.
ParseReport parse_source(const std::string& path, SourceFormat format, const ParseOptions& options = {});

// Same, over in-memory text.
ParseReport parse_text(std::string_view text, SourceFormat format, const ParseOptions& options = {});

// Parses every file and k-way merges them by timestamp; ties keep file order
// then line order.
ParseReport parse_sources(const std::vector<std::string>& paths, SourceFormat format,
                          const ParseOptions& options = {});

std::string serialize_jsonl(const EventLog& log);

// Canonical JSONL without reordering; fails on malformed lines.
EventLog load_canonical(const std::string& path, LogLabel label);

std::set<std::string> observed_types(const EventLog& log);

// Keeps events whose type is in the allow-list (all events when none is
// given). Order is preserved.
EventLog filter_fields(const EventLog& raw, const std::optional<std::set<std::string>>& allow = std::nullopt);

}  // namespace shield::ingest
