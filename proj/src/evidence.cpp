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

#include "shield/evidence.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <regex>
#include <tuple>

namespace shield::evidence {

namespace {

using GroupKey = std::tuple<std::string, std::string, std::string, std::string, std::string, std::string, std::string>;

GroupKey key_of(const Event& e) {
    return {e.subject_id, e.object_id, e.event_type, e.process_path, e.ip_address, e.file_path, e.command_line};
}

EventSummary single(const Event& e) {
    return {e.subject_id, e.object_id,   e.event_type, e.process_path, e.ip_address,
            e.file_path,  e.command_line, e.timestamp, e.timestamp,     1};
}

std::vector<std::size_t> time_order(const std::vector<Event>& events) {
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return events[a].timestamp < events[b].timestamp; });
    return order;
}

std::string strip_wrappers(std::string s) {
    s.erase(std::remove(s.begin(), s.end(), '*'), s.end());
    std::string_view v = text::trim(s);
    auto is_wrap = [](char c) { return c == '"' || c == '`' || c == '\''; };
    while (v.size() >= 2 && is_wrap(v.front()) && v.front() == v.back()) v = text::trim(v.substr(1, v.size() - 2));
    return std::string(v);
}

bool grounded(const std::string& cand, const std::vector<std::string>& command_lines) {
    for (const auto& c : command_lines) {
        if (text::icontains(c, cand)) return true;
    }
    return false;
}

}  // namespace

std::vector<EventSummary> group_events(const std::vector<Event>& events) {
    std::map<GroupKey, std::size_t> index;
    std::vector<EventSummary> out;
    for (std::size_t i : time_order(events)) {
        const auto& e = events[i];
        auto [it, inserted] = index.emplace(key_of(e), out.size());
        if (inserted) {
            out.push_back(single(e));
        } else {
            auto& s = out[it->second];
            s.ts_min = std::min(s.ts_min, e.timestamp);
            s.ts_max = std::max(s.ts_max, e.timestamp);
            ++s.count;
        }
    }
    return out;
}

std::vector<EventSummary> summarize(const std::vector<Event>& events, std::size_t bypass_threshold) {
    if (events.size() > bypass_threshold) return group_events(events);
    std::vector<EventSummary> out;
    out.reserve(events.size());
    for (std::size_t i : time_order(events)) out.push_back(single(events[i]));
    return out;
}

std::string summary_header() {
    return "first_seen\tlast_seen\tcount\tsubject\tobject\tevent_type\tcommand_line\tprocess_path\tip_address\tfile_path";
}

std::string summary_row(const EventSummary& s) {
    return format_timestamp(s.ts_min) + '\t' + format_timestamp(s.ts_max) + '\t' + std::to_string(s.count) + '\t' +
           s.subject_id + '\t' + s.object_id + '\t' + s.event_type + '\t' + s.command_line + '\t' + s.process_path +
           '\t' + s.ip_address + '\t' + s.file_path;
}

nlohmann::ordered_json AttackEvidence::to_json() const {
    nlohmann::ordered_json j;
    j["command_lines"] = command_lines;
    j["provider_meta"] = {{"model_id", provider_meta.model_id}, {"prompt_digest", provider_meta.prompt_digest}};
    return j;
}

AttackEvidence AttackEvidence::from_json(const nlohmann::json& j) {
    AttackEvidence e;
    try {
        e.command_lines = j.at("command_lines").get<std::vector<std::string>>();
        if (j.contains("provider_meta")) {
            e.provider_meta.model_id = j["provider_meta"].value("model_id", "");
            e.provider_meta.prompt_digest = j["provider_meta"].value("prompt_digest", "");
        }
    } catch (const nlohmann::json::exception& ex) {
        throw SchemaError(std::string("malformed evidence: ") + ex.what());
    }
    return e;
}

std::vector<std::string> distinct_command_lines(const std::vector<EventSummary>& summaries) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& s : summaries) {
        if (!s.command_line.empty() && seen.insert(s.command_line).second) out.push_back(s.command_line);
    }
    return out;
}

std::string evidence_prompt(const std::vector<EventSummary>& summaries, const std::string& env) {
    std::string p;
    p += "Analyze the command lines below and identify every command that is related to an attack or to highly "
         "suspicious malware activity, without internet search.\n\n";
    p += "Command Lines:\n";
    for (const auto& c : distinct_command_lines(summaries)) p += "- " + c + "\n";
    p += "\nEnvironment: The command lines are collected on " + (env.empty() ? std::string("an unspecified host") : env) +
         ".\n\n";
    p += "Answer with a bulleted list that quotes each suspicious command line exactly as written above. "
         "Answer \"None\" when nothing is suspicious.\n";
    return p;
}

std::vector<std::string> parse_evidence_response(const std::string& response,
                                                 const std::vector<std::string>& command_lines) {
    static const std::regex list_item(R"(^\s*(?:[-*+•]|\d+[.)])\s+(.*)$)");
    static const std::regex quoted(R"("([^"\n]+)\"|`([^`\n]+)`|“([^”\n]+)”)");

    std::vector<std::string> kept;
    std::set<std::string> seen;
    for (const auto& line : text::split_lines(llm::strip_think(response))) {
        std::vector<std::string> cands;
        for (auto it = std::sregex_iterator(line.begin(), line.end(), quoted); it != std::sregex_iterator(); ++it) {
            for (int g = 1; g <= 3; ++g) {
                if ((*it)[g].matched) cands.push_back((*it)[g].str());
            }
        }
        std::smatch m;
        if (std::regex_match(line, m, list_item)) cands.push_back(m[1].str());
        cands.push_back(line);

        bool any = false;
        for (auto& c : cands) {
            c = strip_wrappers(c);
            const auto lower = text::to_lower(c);
            if (c.size() < 3 || lower == "none" || lower == "n/a") continue;
            if (!grounded(c, command_lines)) continue;
            any = true;
            if (seen.insert(lower).second) kept.push_back(c);
        }
        const auto trimmed = strip_wrappers(line);
        const auto lower = text::to_lower(trimmed);
        if (!any && trimmed.size() >= 3 && lower != "none" && lower != "n/a" && (cands.size() > 1)) {
            spdlog::warn("dropping evidence not found in any command line: {}", trimmed);
        }
    }
    return kept;
}

AttackEvidence identify_evidence(const std::vector<EventSummary>& summaries, const std::string& env,
                                 llm::LlmProvider& provider) {
    const auto prompt = evidence_prompt(summaries, env);
    const auto commands = distinct_command_lines(summaries);
    llm::Completion c = provider.complete(prompt, "evidence");
    if (text::trim(llm::strip_think(c.text)).empty()) {
        spdlog::warn("empty evidence response, retrying once");
        c = provider.complete(prompt, "evidence");
        if (text::trim(llm::strip_think(c.text)).empty()) throw EmptyResponse("provider returned an empty evidence response");
    }
    AttackEvidence ev;
    ev.provider_meta = c.meta;
    ev.command_lines = parse_evidence_response(c.text, commands);
    return ev;
}

const char* to_string(EntityKind k) {
    switch (k) {
        case EntityKind::process: return "process";
        case EntityKind::file: return "file";
        case EntityKind::ip: return "ip";
    }
    return "process";
}

ProvenanceGraph build_graph(const std::vector<Event>& events) {
    ProvenanceGraph g;
    auto note = [&](const std::string& id, EntityKind k) {
        auto [it, inserted] = g.nodes.emplace(id, k);
        if (!inserted && static_cast<int>(k) > static_cast<int>(it->second)) it->second = k;
    };
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        note(e.subject_id, EntityKind::process);
        note(e.object_id, !e.ip_address.empty() ? EntityKind::ip
                          : !e.file_path.empty() ? EntityKind::file
                                                 : EntityKind::process);
        const auto key = std::make_pair(e.subject_id, e.object_id);
        auto& edge = g.edges[key];
        if (edge.events.empty()) {
            edge.src = e.subject_id;
            edge.dst = e.object_id;
        }
        edge.events.push_back(i);
        g.incident[e.subject_id].insert(key);
        g.incident[e.object_id].insert(key);
    }
    return g;
}

EvidenceNeighborhood expand(const ProvenanceGraph& graph, const std::vector<Event>& events,
                            const AttackEvidence& evidence, std::size_t t_nbr) {
    if (t_nbr == 0) throw ConfigError("t_nbr must be at least 1");
    std::set<std::string> seeds;
    for (const auto& e : events) {
        if (e.command_line.empty()) continue;
        for (const auto& ev : evidence.command_lines) {
            if (!ev.empty() && text::icontains(e.command_line, ev)) {
                seeds.insert(e.subject_id);
                break;
            }
        }
    }
    if (seeds.empty()) throw NoSeedMatch("no entity matches the attack evidence");

    std::set<std::string> nodes = seeds;
    std::set<std::pair<std::string, std::string>> included;
    std::size_t count = 0;
    auto incident_of = [&](const std::string& n) -> const std::set<std::pair<std::string, std::string>>* {
        auto it = graph.incident.find(n);
        return it == graph.incident.end() ? nullptr : &it->second;
    };

    for (const auto& s : seeds) {
        if (const auto* inc = incident_of(s)) {
            for (const auto& key : *inc) {
                if (seeds.count(key.first) && seeds.count(key.second) && included.insert(key).second) {
                    count += graph.edges.at(key).weight();
                }
            }
        }
    }

    std::size_t iteration = 0;
    while (count <= t_nbr) {
        std::vector<std::pair<std::string, std::string>> batch;
        for (const auto& n : nodes) {
            if (const auto* inc = incident_of(n)) {
                for (const auto& key : *inc) {
                    if (!included.count(key)) batch.push_back(key);
                }
            }
        }
        std::sort(batch.begin(), batch.end());
        batch.erase(std::unique(batch.begin(), batch.end()), batch.end());
        if (batch.empty()) break;
        ++iteration;
        for (const auto& key : batch) {
            included.insert(key);
            nodes.insert(key.first);
            nodes.insert(key.second);
            count += graph.edges.at(key).weight();
        }
    }

    EvidenceNeighborhood n;
    n.seed_nodes.assign(seeds.begin(), seeds.end());
    n.iterations = iteration;
    for (const auto& key : included) {
        const auto& ev = graph.edges.at(key).events;
        n.positions.insert(n.positions.end(), ev.begin(), ev.end());
    }
    std::sort(n.positions.begin(), n.positions.end(), [&](std::size_t a, std::size_t b) {
        return events[a].timestamp != events[b].timestamp ? events[a].timestamp < events[b].timestamp : a < b;
    });
    return n;
}

EvidenceNeighborhood fallback_neighborhood(const std::vector<Event>& events, std::size_t t_nbr) {
    EvidenceNeighborhood n;
    n.fallback = true;
    auto order = time_order(events);
    if (order.size() > t_nbr) order.resize(t_nbr);
    n.positions = std::move(order);
    return n;
}

nlohmann::ordered_json neighborhood_to_json(const EvidenceNeighborhood& n, const std::vector<Event>& events,
                                            const std::vector<std::size_t>& log_indices) {
    nlohmann::ordered_json j;
    j["seed_nodes"] = n.seed_nodes;
    j["iterations"] = n.iterations;
    j["fallback"] = n.fallback;
    auto& arr = j["events"] = nlohmann::ordered_json::array();
    for (auto p : n.positions) {
        auto ev = event_to_json(events[p]);
        nlohmann::ordered_json row;
        row["index"] = p < log_indices.size() ? log_indices[p] : p;
        row["event"] = std::move(ev);
        arr.push_back(std::move(row));
    }
    return j;
}

LoadedNeighborhood neighborhood_from_json(const nlohmann::json& j) {
    LoadedNeighborhood n;
    try {
        n.seed_nodes = j.at("seed_nodes").get<std::vector<std::string>>();
        n.iterations = j.at("iterations").get<std::size_t>();
        n.fallback = j.value("fallback", false);
        for (const auto& row : j.at("events")) {
            n.log_indices.push_back(row.at("index").get<std::size_t>());
            n.events.push_back(event_from_json(row.at("event")));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed neighborhood: ") + e.what());
    }
    return n;
}

}  // namespace shield::evidence
