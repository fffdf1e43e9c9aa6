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

#include "shield/detect.hpp"
#include "shield/event.hpp"
#include "shield/llm.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace shield::investigate {

// The 14 enterprise ATT&CK tactics.
const std::vector<std::string>& canonical_tactics();

// Canonical spelling of a tactic name (case, "&" and spacing tolerant).
std::optional<std::string> canonical_tactic(std::string_view name);

struct Step {
    std::string tactic;
    std::string description;

    bool operator==(const Step&) const = default;
};

struct Iocs {
    std::vector<std::string> ips;
    std::vector<std::string> domains;
    std::vector<std::string> processes;
    std::vector<std::string> files;

    std::vector<std::string> all() const;
    bool empty() const { return ips.empty() && domains.empty() && processes.empty() && files.empty(); }
    bool operator==(const Iocs&) const = default;
};

struct InvestigationReport {
    std::string narrative;
    std::vector<Step> steps;
    Iocs iocs;
    std::vector<std::string> unknown_tactics;  // step names that matched no tactic
    std::string raw_response;
    llm::ProviderMeta provider_meta;
    bool attack_detected = true;

    nlohmann::ordered_json to_json() const;
    static InvestigationReport from_json(const nlohmann::json& j);
    std::string to_markdown() const;
};

// Report for a run whose selection was empty.
InvestigationReport no_attack_report();

using TokenCounter = std::function<std::size_t(std::string_view)>;

// ceil(characters / 4)
std::size_t approx_tokens(std::string_view text);

struct PromptInputs {
    std::vector<Event> events;             // the evidence neighborhood, time ordered
    std::string profile_block = "{}";
    std::vector<std::string> evidence;
    std::string environment;
};

struct Prompt {
    std::string text;
    std::size_t rows_kept = 0;
    std::size_t rows_total = 0;
};

// Sections in order: Scope, Environment, Logs, Your available evidence,
// Benign Profile, Goals, Output Format. With a nonzero budget, log rows are
// dropped from the end until the prompt fits; throws BudgetUnsatisfiable when
// even zero rows do not fit.
Prompt build_prompt(const PromptInputs& in, std::size_t token_budget = 0, const TokenCounter& counter = approx_tokens);

// Tolerant parser for the three-section answer. Throws ParseError when the
// IOC section is missing.
InvestigationReport parse_report(const std::string& response);

InvestigationReport run_investigation(const std::string& prompt, llm::LlmProvider& provider);

// Name shared by all ids of one real-world entity: command line (or image
// path) for processes, address without port for sockets, path for files.
std::map<std::string, std::string> entity_names(const std::vector<Event>& events);

struct DetectionLabels {
    std::map<std::string, std::string> attack_entities;  // id -> display name
    std::set<std::size_t> attack_event_indices;          // into the testing log

    std::set<std::string> entity_names() const;
    nlohmann::ordered_json to_json() const;
    static DetectionLabels from_json(const nlohmann::json& j);
};

// True when the IoC equals the field, one of its whitespace tokens, or a path
// component of a token. Case-insensitive; addresses compare without ports.
bool ioc_matches(std::string_view ioc, std::string_view field);

// Flags entities of events inside the selected windows whose identifying
// fields match an IoC, widens to every id with the same display name, and
// marks the events touching a flagged entity.
DetectionLabels locate(const Iocs& iocs, const EventLog& testing, const std::vector<std::size_t>& scope);
DetectionLabels locate(const Iocs& iocs, const EventLog& testing, const detect::WindowSelection& selection);

}  // namespace shield::investigate
