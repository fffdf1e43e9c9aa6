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

#include <nlohmann/json.hpp>

namespace shield {

// Microseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

constexpr Timestamp kMicrosPerSecond = 1'000'000;
constexpr Timestamp kMicrosPerMinute = 60 * kMicrosPerSecond;

// One normalized audit record. Optional attributes are empty strings when absent.
struct Event {
    std::string subject_id;
    std::string object_id;
    std::string event_type;
    std::string command_line;
    Timestamp timestamp = 0;
    std::string process_path;
    std::string ip_address;  // "addr" or "addr:port"
    std::string file_path;

    bool operator==(const Event&) const = default;
};

enum class LogLabel { training, testing };

struct EventLog {
    std::vector<Event> events;
    LogLabel label = LogLabel::testing;
    std::string source_tag;

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
    const Event& operator[](std::size_t i) const { return events[i]; }

    bool operator==(const EventLog&) const = default;
};

// Names of the eight canonical fields, in serialization order.
inline constexpr std::string_view kEventFields[] = {
    "subject_id", "object_id", "event_type", "command_line",
    "timestamp",  "process_path", "ip_address", "file_path",
};

nlohmann::ordered_json event_to_json(const Event& e);

// Throws SchemaError when a required field is missing or mistyped.
Event event_from_json(const nlohmann::json& j);

// Accepts integer microseconds, a digit string, or an ISO-8601 style
// "YYYY-MM-DD[ T]HH:MM:SS[.ffffff][Z]" string. Throws SchemaError.
Timestamp timestamp_from_json(const nlohmann::json& value);
Timestamp parse_timestamp(std::string_view text);

// "YYYY-MM-DDTHH:MM:SS.ffffffZ"
std::string format_timestamp(Timestamp ts);

// Attaches a port to an address unless it already carries one.
std::string attach_port(std::string_view address, std::string_view port);

}  // namespace shield
