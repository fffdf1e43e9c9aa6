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
#include "shield/llm.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <set>
#include <string>
#include <vector>

namespace shield::evidence {

struct EventSummary {
    std::string subject_id;
    std::string object_id;
    std::string event_type;
    std::string process_path;
    std::string ip_address;
    std::string file_path;
    std::string command_line;
    Timestamp ts_min = 0;
    Timestamp ts_max = 0;
    std::size_t count = 0;

    bool operator==(const EventSummary&) const = default;
};

inline constexpr std::size_t kSummarizeBypass = 2000;

// Groups by every field except the timestamp. Output ordered by ts_min, then
// by first occurrence.
std::vector<EventSummary> group_events(const std::vector<Event>& events);

// group_events when there are more than bypass_threshold events, otherwise
// one count-1 summary per event in timestamp order.
std::vector<EventSummary> summarize(const std::vector<Event>& events, std::size_t bypass_threshold = kSummarizeBypass);

// Tab-separated rendering used inside prompts, one summary per line.
std::string summary_header();
std::string summary_row(const EventSummary& s);

struct AttackEvidence {
    std::vector<std::string> command_lines;  // distinct, in response order
    llm::ProviderMeta provider_meta;

    nlohmann::ordered_json to_json() const;
    static AttackEvidence from_json(const nlohmann::json& j);
};

// Distinct non-empty command lines, in order of first appearance.
std::vector<std::string> distinct_command_lines(const std::vector<EventSummary>& summaries);

std::string evidence_prompt(const std::vector<EventSummary>& summaries, const std::string& env);

// Candidate strings from a response (list items and quoted or backticked
// spans), kept only when they occur case-insensitively in some command line.
std::vector<std::string> parse_evidence_response(const std::string& response,
                                                 const std::vector<std::string>& command_lines);

// Asks the provider for the suspicious command lines. An empty answer is
// retried once, then raises EmptyResponse.
AttackEvidence identify_evidence(const std::vector<EventSummary>& summaries, const std::string& env,
                                 llm::LlmProvider& provider);

enum class EntityKind { process, file, ip };
const char* to_string(EntityKind k);

struct Edge {
    std::string src;
    std::string dst;
    std::vector<std::size_t> events;  // positions in the graph's source sequence

    std::size_t weight() const { return events.size(); }
};

struct ProvenanceGraph {
    std::map<std::string, EntityKind> nodes;
    std::map<std::pair<std::string, std::string>, Edge> edges;
    // Undirected adjacency: node -> keys of incident edges.
    std::map<std::string, std::set<std::pair<std::string, std::string>>> incident;
};

// One node per entity id, one edge per (subject, object) pair. Object kind is
// ip when the event carries an address, else file when it carries a path,
// else process; subjects are processes.
ProvenanceGraph build_graph(const std::vector<Event>& events);

struct EvidenceNeighborhood {
    std::vector<std::size_t> positions;  // into the source sequence, (timestamp, position) order
    std::vector<std::string> seed_nodes;
    std::size_t iterations = 0;
    bool fallback = false;
};

// Seeds are the subjects of events whose command line contains an evidence
// string. Iteration 0 takes the edges among seeds; each later iteration adds
// every edge incident to the current node set. Stops after the first
// iteration whose cumulative event count exceeds t_nbr, or when nothing new
// is reached. Throws NoSeedMatch.
EvidenceNeighborhood expand(const ProvenanceGraph& graph, const std::vector<Event>& events,
                            const AttackEvidence& evidence, std::size_t t_nbr);

// The first t_nbr events in timestamp order; used when no seed matches.
EvidenceNeighborhood fallback_neighborhood(const std::vector<Event>& events, std::size_t t_nbr);

nlohmann::ordered_json neighborhood_to_json(const EvidenceNeighborhood& n, const std::vector<Event>& events,
                                            const std::vector<std::size_t>& log_indices);

struct LoadedNeighborhood {
    std::vector<Event> events;
    std::vector<std::size_t> log_indices;
    std::vector<std::string> seed_nodes;
    std::size_t iterations = 0;
    bool fallback = false;
};
LoadedNeighborhood neighborhood_from_json(const nlohmann::json& j);

}  // namespace shield::evidence
