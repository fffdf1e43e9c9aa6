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

#include "shield/event.hpp"

#include "shield/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>

namespace shield {

namespace {

std::string optional_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw SchemaError(std::string("field '") + key + "' must be a string");
}

std::string required_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw SchemaError(std::string("missing required field '") + key + "'");
    std::string value = optional_string(j, key);
    if (value.empty()) throw SchemaError(std::string("required field '") + key + "' is empty");
    return value;
}

bool parse_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

nlohmann::ordered_json event_to_json(const Event& e) {
    nlohmann::ordered_json j;
    j["subject_id"] = e.subject_id;
    j["object_id"] = e.object_id;
    j["event_type"] = e.event_type;
    j["command_line"] = e.command_line;
    j["timestamp"] = e.timestamp;
    j["process_path"] = e.process_path;
    j["ip_address"] = e.ip_address;
    j["file_path"] = e.file_path;
    return j;
}

Event event_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("record is not a JSON object");
    Event e;
    e.subject_id = required_string(j, "subject_id");
    e.object_id = required_string(j, "object_id");
    e.event_type = required_string(j, "event_type");
    auto ts = j.find("timestamp");
    if (ts == j.end() || ts->is_null()) throw SchemaError("missing required field 'timestamp'");
    e.timestamp = timestamp_from_json(*ts);
    e.command_line = optional_string(j, "command_line");
    e.process_path = optional_string(j, "process_path");
    e.ip_address = optional_string(j, "ip_address");
    if (e.ip_address.empty()) e.ip_address = optional_string(j, "ip");
    e.file_path = optional_string(j, "file_path");
    std::string port = optional_string(j, "port");
    if (!port.empty() && !e.ip_address.empty()) e.ip_address = attach_port(e.ip_address, port);
    return e;
}

Timestamp timestamp_from_json(const nlohmann::json& value) {
    if (value.is_number_integer()) return value.get<std::int64_t>();
    if (value.is_number_float()) {
        double v = value.get<double>();
        if (!std::isfinite(v)) throw SchemaError("timestamp is not finite");
        return static_cast<Timestamp>(v);
    }
    if (value.is_string()) return parse_timestamp(std::string_view(value.get_ref<const std::string&>()));
    throw SchemaError("timestamp must be an integer or a string");
}

Timestamp parse_timestamp(std::string_view s) {
    if (s.empty()) throw SchemaError("empty timestamp");
    bool all_digits = true;
    for (std::size_t i = (s[0] == '-' ? 1 : 0); i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            all_digits = false;
            break;
        }
    }
    if (all_digits) {
        Timestamp v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("bad timestamp '" + std::string(s) + "'");
        return v;
    }
    int year, month, day, hour, minute, second;
    if (s.size() < 19 || !parse_digits(s, 0, 4, year) || s[4] != '-' || !parse_digits(s, 5, 2, month) ||
        s[7] != '-' || !parse_digits(s, 8, 2, day) || (s[10] != 'T' && s[10] != ' ') ||
        !parse_digits(s, 11, 2, hour) || s[13] != ':' || !parse_digits(s, 14, 2, minute) || s[16] != ':' ||
        !parse_digits(s, 17, 2, second)) {
        throw SchemaError("bad timestamp '" + std::string(s) + "'");
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        throw SchemaError("timestamp out of range '" + std::string(s) + "'");
    }
    std::size_t pos = 19;
    Timestamp micros = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            if (digits < 6) {
                micros = micros * 10 + (s[pos] - '0');
                ++digits;
            }
            ++pos;
        }
        if (digits == 0) throw SchemaError("bad fractional seconds in '" + std::string(s) + "'");
        while (digits++ < 6) micros *= 10;
    }
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) ++pos;
    if (pos != s.size()) throw SchemaError("trailing characters in timestamp '" + std::string(s) + "'");
    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
    return secs * kMicrosPerSecond + micros;
}

std::string format_timestamp(Timestamp ts) {
    std::int64_t secs = ts / kMicrosPerSecond;
    std::int64_t micros = ts % kMicrosPerSecond;
    if (micros < 0) {
        micros += kMicrosPerSecond;
        --secs;
    }
    std::time_t t = static_cast<std::time_t>(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(micros));
    return buf;
}

std::string attach_port(std::string_view address, std::string_view port) {
    std::string addr(address);
    if (port.empty()) return addr;
    const auto first = addr.find(':');
    const bool ipv6 = first != std::string::npos && addr.find(':', first + 1) != std::string::npos;
    if (ipv6) {
        if (!addr.empty() && addr.front() == '[') return addr;  // already bracketed, assume port present
        return "[" + addr + "]:" + std::string(port);
    }
    if (first != std::string::npos) return addr;
    return addr + ":" + std::string(port);
}

}  // namespace shield
