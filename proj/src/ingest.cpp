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

#include "shield/ingest.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <queue>
#include <sstream>

namespace shield::ingest {

namespace {

constexpr std::size_t kMaxRejectSamples = 8;

struct Record {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

// RFC 4180 records; quoted cells may span lines.
std::vector<Record> read_csv(std::string_view text) {
    std::vector<Record> records;
    Record current;
    std::string cell;
    bool quoted = false;
    bool cell_started = false;
    std::size_t line = 1;
    current.line = 1;

    auto end_cell = [&] {
        current.cells.push_back(std::move(cell));
        cell.clear();
        cell_started = false;
    };
    auto end_record = [&] {
        end_cell();
        const bool blank = current.cells.size() == 1 && current.cells[0].empty();
        if (!blank) records.push_back(std::move(current));
        current = Record{};
        current.line = line;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                cell.push_back(c);
            }
            continue;
        }
        if (c == '"' && !cell_started) {
            quoted = true;
            cell_started = true;
        } else if (c == ',') {
            end_cell();
        } else if (c == '\n') {
            ++line;
            end_record();
        } else if (c == '\r') {
            // dropped; handled by the following '\n'
        } else {
            cell.push_back(c);
            cell_started = true;
        }
    }
    if (!cell.empty() || !current.cells.empty()) end_record();
    return records;
}

void note_reject(ParseReport& report, std::size_t line, const std::string& why) {
    ++report.rejected;
    if (report.reject_samples.size() < kMaxRejectSamples) {
        report.reject_samples.push_back("line " + std::to_string(line) + ": " + why);
    }
}

void parse_jsonl(std::string_view text, ParseReport& report) {
    const auto lines = text::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = text::trim(lines[i]);
        if (line.empty()) continue;
        ++report.records;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            note_reject(report, i + 1, "invalid JSON");
            continue;
        }
        try {
            report.log.events.push_back(event_from_json(j));
        } catch (const SchemaError& e) {
            note_reject(report, i + 1, e.what());
        }
    }
}

void parse_csv(std::string_view text, ParseReport& report) {
    auto records = read_csv(text);
    if (records.empty()) return;
    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < records[0].cells.size(); ++c) {
        column[text::to_lower(text::trim(records[0].cells[c]))] = c;
    }
    for (const char* required : {"subject_id", "object_id", "event_type", "timestamp"}) {
        if (!column.count(required)) throw SchemaError(std::string("CSV header lacks column '") + required + "'");
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        const Record& rec = records[r];
        ++report.records;
        if (rec.cells.size() != records[0].cells.size()) {
            note_reject(report, rec.line, "expected " + std::to_string(records[0].cells.size()) + " cells, got " +
                                              std::to_string(rec.cells.size()));
            continue;
        }
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [name, idx] : column) {
            if (!rec.cells[idx].empty()) j[name] = rec.cells[idx];
        }
        try {
            report.log.events.push_back(event_from_json(j));
        } catch (const SchemaError& e) {
            note_reject(report, rec.line, e.what());
        }
    }
}

void finish(ParseReport& report, const ParseOptions& options) {
    if (report.records > 0) {
        const double ratio = static_cast<double>(report.rejected) / static_cast<double>(report.records);
        if (ratio > options.reject_ratio) {
            std::ostringstream msg;
            msg << report.rejected << " of " << report.records << " records rejected (limit "
                << options.reject_ratio * 100.0 << "%)";
            if (!report.reject_samples.empty()) msg << "; first: " << report.reject_samples.front();
            throw RejectRatioExceeded(msg.str());
        }
    }
    if (report.rejected > 0) {
        spdlog::warn("{}: rejected {} of {} records", options.source_tag, report.rejected, report.records);
    }
    std::stable_sort(report.log.events.begin(), report.log.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    report.log.label = options.label;
    report.log.source_tag = options.source_tag;
}

}  // namespace

SourceFormat parse_format(std::string_view name) {
    if (name == "jsonl-generic" || name == "jsonl") return SourceFormat::jsonl_generic;
    if (name == "csv-generic" || name == "csv") return SourceFormat::csv_generic;
    throw ConfigError("unknown source format '" + std::string(name) + "'");
}

ParseReport parse_text(std::string_view text, SourceFormat format, const ParseOptions& options) {
    ParseReport report;
    if (format == SourceFormat::jsonl_generic) {
        parse_jsonl(text, report);
    } else {
        parse_csv(text, report);
    }
    finish(report, options);
    return report;
}

ParseReport parse_source(const std::string& path, SourceFormat format, const ParseOptions& options) {
    ParseOptions opts = options;
    if (opts.source_tag.empty()) opts.source_tag = path;
    return parse_text(text::read_file(path), format, opts);
}

ParseReport parse_sources(const std::vector<std::string>& paths, SourceFormat format, const ParseOptions& options) {
    std::vector<ParseReport> parts;
    parts.reserve(paths.size());
    for (const auto& path : paths) {
        ParseOptions opts = options;
        opts.source_tag = path;
        parts.push_back(parse_source(path, format, opts));
    }

    ParseReport merged;
    merged.log.label = options.label;
    merged.log.source_tag = options.source_tag.empty() ? text::join(paths, ",") : options.source_tag;
    for (const auto& p : parts) {
        merged.records += p.records;
        merged.rejected += p.rejected;
        for (const auto& s : p.reject_samples) {
            if (merged.reject_samples.size() < kMaxRejectSamples) merged.reject_samples.push_back(s);
        }
    }

    // (timestamp, file, position); the min-heap pops ties in file order.
    using Head = std::tuple<Timestamp, std::size_t, std::size_t>;
    std::priority_queue<Head, std::vector<Head>, std::greater<>> heap;
    for (std::size_t f = 0; f < parts.size(); ++f) {
        if (!parts[f].log.events.empty()) heap.emplace(parts[f].log.events[0].timestamp, f, 0);
    }
    while (!heap.empty()) {
        auto [ts, f, pos] = heap.top();
        heap.pop();
        merged.log.events.push_back(std::move(parts[f].log.events[pos]));
        if (pos + 1 < parts[f].log.events.size()) heap.emplace(parts[f].log.events[pos + 1].timestamp, f, pos + 1);
    }
    return merged;
}

std::string serialize_jsonl(const EventLog& log) {
    std::string out;
    for (const auto& e : log.events) {
        out += event_to_json(e).dump();
        out += '\n';
    }
    return out;
}

EventLog load_canonical(const std::string& path, LogLabel label) {
    EventLog log;
    log.label = label;
    log.source_tag = path;
    const auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = text::trim(lines[i]);
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw SchemaError(path + ":" + std::to_string(i + 1) + ": invalid JSON");
        log.events.push_back(event_from_json(j));
    }
    return log;
}

std::set<std::string> observed_types(const EventLog& log) {
    std::set<std::string> types;
    for (const auto& e : log.events) types.insert(e.event_type);
    return types;
}

EventLog filter_fields(const EventLog& raw, const std::optional<std::set<std::string>>& allow) {
    EventLog out;
    out.label = raw.label;
    out.source_tag = raw.source_tag;
    out.events.reserve(raw.events.size());
    for (const auto& e : raw.events) {
        if (!allow || allow->count(e.event_type)) out.events.push_back(e);
    }
    return out;
}

}  // namespace shield::ingest
