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

#include "shield/investigate.hpp"

#include "shield/error.hpp"
#include "shield/evidence.hpp"
#include "shield/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <regex>

namespace shield::investigate {

namespace {

enum class Section { none, narrative, steps, iocs };
enum class IocKind { none, ips, domains, processes, files, other };

std::string normalize_tactic(std::string_view name) {
    std::string s = text::to_lower(text::trim(name));
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '&') {
            out += " and ";
        } else if (s[i] == '-' || s[i] == '_') {
            out += ' ';
        } else {
            out += s[i];
        }
    }
    return text::join(text::split_ws(out), " ");
}

// Removes list bullets, numbering and emphasis markers from a line.
std::string strip_markup(std::string_view line) {
    static const std::regex marker(R"(^\s*(?:[-*+•>]+|#+|\d+[.)](?!\d)|\(\d+\)|\[\d+\])?\s*)");
    std::string s = std::regex_replace(std::string(line), marker, "", std::regex_constants::format_first_only);
    s.erase(std::remove(s.begin(), s.end(), '*'), s.end());
    return std::string(text::trim(s));
}

struct Heading {
    Section section = Section::none;
    std::string rest;  // text after the heading on the same line
};

Heading match_heading(std::string_view line) {
    static const std::vector<std::pair<std::string, Section>> names{
        {"attack narrative", Section::narrative},
        {"narrative", Section::narrative},
        {"key steps", Section::steps},
        {"attack steps", Section::steps},
        {"iocs", Section::iocs},
        {"ioc", Section::iocs},
        {"indicators of compromise", Section::iocs},
    };
    const auto s = strip_markup(line);
    const auto lower = text::to_lower(s);
    for (const auto& [name, sec] : names) {
        if (lower.rfind(name, 0) != 0) continue;
        std::string_view tail = std::string_view(s).substr(name.size());
        // "IOCs (Indicators of Compromise):" style qualifiers.
        if (!tail.empty() && tail.front() == ' ') tail = text::trim(tail);
        if (!tail.empty() && tail.front() == '(') {
            auto close = tail.find(')');
            if (close != std::string_view::npos) tail = text::trim(tail.substr(close + 1));
        }
        if (tail.empty()) return {sec, ""};
        if (tail.front() == ':') return {sec, std::string(text::trim(tail.substr(1)))};
    }
    return {};
}

IocKind ioc_label(std::string_view label) {
    const auto l = normalize_tactic(label);
    if (l == "ips" || l == "ip" || l == "ip addresses" || l == "ip address" || l == "ipv4" || l == "addresses")
        return IocKind::ips;
    if (l == "domains" || l == "domain" || l == "domain names" || l == "urls" || l == "hostnames")
        return IocKind::domains;
    if (l == "processes" || l == "process" || l == "process names" || l == "commands" || l == "executables")
        return IocKind::processes;
    if (l == "files" || l == "file" || l == "filenames" || l == "file names" || l == "file paths" || l == "paths")
        return IocKind::files;
    return IocKind::other;
}

bool is_placeholder(const std::string& v) {
    const auto l = text::to_lower(v);
    static const char* const skip[] = {"none", "n/a", "na", "-", "...", "[...]", "unknown", "not observed",
                                       "none identified", "none observed", "not applicable"};
    for (const char* s : skip) {
        if (l == s) return true;
    }
    return l.rfind("none ", 0) == 0 || l.rfind("no ", 0) == 0;
}

std::string strip_quotes(std::string_view v) {
    v = text::trim(v);
    auto is_q = [](char c) { return c == '"' || c == '\'' || c == '`'; };
    while (v.size() >= 2 && is_q(v.front()) && v.front() == v.back()) v = text::trim(v.substr(1, v.size() - 2));
    while (!v.empty() && (v.back() == '.' || v.back() == ',' || v.back() == ';')) v.remove_suffix(1);
    return std::string(text::trim(v));
}

std::vector<std::string> ioc_values(const std::string& text_in, IocKind kind) {
    std::vector<std::string> out;
    if (kind == IocKind::ips) {
        static const std::regex ip(R"(\b(?:\d{1,3}\.){3}\d{1,3}(?::\d+)?\b)");
        for (auto it = std::sregex_iterator(text_in.begin(), text_in.end(), ip); it != std::sregex_iterator(); ++it) {
            out.push_back(it->str());
        }
        if (!out.empty()) return out;
    }
    static const std::regex quoted(R"("([^"]+)\"|`([^`]+)`|“([^”]+)”)");
    for (auto it = std::sregex_iterator(text_in.begin(), text_in.end(), quoted); it != std::sregex_iterator(); ++it) {
        for (int g = 1; g <= 3; ++g) {
            if ((*it)[g].matched) out.push_back(strip_quotes((*it)[g].str()));
        }
    }
    if (out.empty()) {
        static const std::regex paren(R"(\([^)]*\))");
        const auto cleaned = std::regex_replace(text_in, paren, "");
        std::string cur;
        for (char c : cleaned + ",") {
            if (c == ',' || c == ';') {
                out.push_back(strip_quotes(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    std::vector<std::string> kept;
    for (auto& v : out) {
        if (!v.empty() && !is_placeholder(v)) kept.push_back(std::move(v));
    }
    return kept;
}

void add_unique(std::vector<std::string>& dst, const std::vector<std::string>& values) {
    for (const auto& v : values) {
        if (std::find(dst.begin(), dst.end(), v) == dst.end()) dst.push_back(v);
    }
}

std::vector<std::string>* ioc_list(Iocs& iocs, IocKind k) {
    switch (k) {
        case IocKind::ips: return &iocs.ips;
        case IocKind::domains: return &iocs.domains;
        case IocKind::processes: return &iocs.processes;
        case IocKind::files: return &iocs.files;
        default: return nullptr;
    }
}

// Tactics named by a step label; compound labels ("Execution / Persistence")
// yield one entry per recognized part.
std::vector<std::string> tactics_in(const std::string& label) {
    if (auto t = canonical_tactic(label)) return {*t};
    std::vector<std::string> parts;
    std::string cur;
    const auto norm = normalize_tactic(label);
    auto flush = [&] {
        if (auto t = canonical_tactic(cur)) parts.push_back(*t);
        cur.clear();
    };
    static const std::regex sep(R"(\s*(?:/|,|\+|\||;|\band\b)\s*)");
    // "command and control" must survive the split on "and".
    const auto guarded = std::regex_replace(norm, std::regex("command and control"), "command_c2_control");
    std::sregex_token_iterator it(guarded.begin(), guarded.end(), sep, -1), end;
    for (; it != end; ++it) {
        cur = std::regex_replace(it->str(), std::regex("command_c2_control"), "command and control");
        flush();
    }
    return parts;
}

// `attach` tracks whether a continuation line belongs to the previous step.
void parse_step_line(const std::string& line, InvestigationReport& r, bool& attach) {
    auto s = strip_markup(line);
    if (s.empty()) return;
    static const std::regex step_prefix(R"(^step\s*\d+\s*[-:.)]?\s*)", std::regex::icase);
    s = std::regex_replace(s, step_prefix, "");
    std::string label, desc;
    if (!s.empty() && s.front() == '[') {
        auto close = s.find(']');
        if (close != std::string::npos) {
            label = s.substr(1, close - 1);
            desc = s.substr(close + 1);
        }
    }
    if (label.empty()) {
        auto colon = s.find(':');
        if (colon == std::string::npos || colon > 80) {
            if (attach && !r.steps.empty()) r.steps.back().description += " " + s;
            return;
        }
        label = s.substr(0, colon);
        desc = s.substr(colon);
    }
    desc = std::string(text::trim(desc));
    while (!desc.empty() && (desc.front() == ':' || desc.front() == '-')) desc = std::string(text::trim(desc.substr(1)));
    static const std::regex paren(R"(\s*\([^)]*\)\s*)");
    label = std::string(text::trim(std::regex_replace(label, paren, " ")));
    const auto tactics = tactics_in(label);
    if (tactics.empty()) {
        spdlog::warn("dropping step with unknown tactic '{}'", label);
        r.unknown_tactics.push_back(label);
        attach = false;
        return;
    }
    for (const auto& t : tactics) r.steps.push_back({t, desc});
    attach = tactics.size() == 1;
}

bool whole_tokens_contain(std::string_view field, const std::string& needle) {
    for (const auto& tok : text::split_ws(field)) {
        if (tok == needle) return true;
        std::size_t start = 0;
        while (start <= tok.size()) {
            auto end = tok.find_first_of("/\\", start);
            if (end == std::string::npos) end = tok.size();
            if (end > start && tok.compare(start, end - start, needle) == 0) return true;
            start = end + 1;
        }
    }
    return false;
}

}  // namespace

const std::vector<std::string>& canonical_tactics() {
    static const std::vector<std::string> t{
        "Reconnaissance",   "Resource Development", "Initial Access",    "Execution",
        "Persistence",      "Privilege Escalation", "Defense Evasion",   "Credential Access",
        "Discovery",        "Lateral Movement",     "Collection",        "Command and Control",
        "Exfiltration",     "Impact"};
    return t;
}

std::optional<std::string> canonical_tactic(std::string_view name) {
    const auto n = normalize_tactic(name);
    for (const auto& t : canonical_tactics()) {
        if (normalize_tactic(t) == n) return t;
    }
    return std::nullopt;
}

std::vector<std::string> Iocs::all() const {
    std::vector<std::string> out;
    for (const auto* v : {&ips, &domains, &processes, &files}) out.insert(out.end(), v->begin(), v->end());
    return out;
}

nlohmann::ordered_json InvestigationReport::to_json() const {
    nlohmann::ordered_json j;
    j["attack_detected"] = attack_detected;
    j["narrative"] = narrative;
    auto& st = j["steps"] = nlohmann::ordered_json::array();
    for (const auto& s : steps) st.push_back({{"tactic", s.tactic}, {"description", s.description}});
    j["iocs"] = {{"ips", iocs.ips}, {"domains", iocs.domains}, {"processes", iocs.processes}, {"files", iocs.files}};
    j["unknown_tactics"] = unknown_tactics;
    j["raw_response"] = raw_response;
    j["provider_meta"] = {{"model_id", provider_meta.model_id}, {"prompt_digest", provider_meta.prompt_digest}};
    return j;
}

InvestigationReport InvestigationReport::from_json(const nlohmann::json& j) {
    InvestigationReport r;
    try {
        r.attack_detected = j.value("attack_detected", true);
        r.narrative = j.at("narrative").get<std::string>();
        for (const auto& s : j.at("steps")) {
            Step step{s.at("tactic").get<std::string>(), s.value("description", "")};
            if (!canonical_tactic(step.tactic)) throw SchemaError("unknown tactic in report: " + step.tactic);
            r.steps.push_back(std::move(step));
        }
        const auto& i = j.at("iocs");
        r.iocs.ips = i.value("ips", std::vector<std::string>{});
        r.iocs.domains = i.value("domains", std::vector<std::string>{});
        r.iocs.processes = i.value("processes", std::vector<std::string>{});
        r.iocs.files = i.value("files", std::vector<std::string>{});
        r.unknown_tactics = j.value("unknown_tactics", std::vector<std::string>{});
        r.raw_response = j.value("raw_response", "");
        if (j.contains("provider_meta")) {
            r.provider_meta.model_id = j["provider_meta"].value("model_id", "");
            r.provider_meta.prompt_digest = j["provider_meta"].value("prompt_digest", "");
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string InvestigationReport::to_markdown() const {
    std::string md = "# Investigation report\n\n";
    if (!attack_detected) return md + narrative + "\n";
    md += "## Attack Narrative\n\n" + narrative + "\n\n## Key Steps\n\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        md += std::to_string(i + 1) + ". **" + steps[i].tactic + "**: " + steps[i].description + "\n";
    }
    md += "\n## IOCs\n\n";
    auto list = [&](const char* label, const std::vector<std::string>& v) {
        md += std::string("- ") + label + ": " + (v.empty() ? std::string("none") : text::join(v, ", ")) + "\n";
    };
    list("IPs", iocs.ips);
    list("Domains", iocs.domains);
    list("Processes", iocs.processes);
    list("Files", iocs.files);
    if (!provider_meta.model_id.empty()) md += "\n_Model: " + provider_meta.model_id + "_\n";
    return md;
}

InvestigationReport no_attack_report() {
    InvestigationReport r;
    r.attack_detected = false;
    r.narrative = "No attack windows were selected: no window scored above the anomaly threshold.";
    return r;
}

std::size_t approx_tokens(std::string_view s) { return (s.size() + 3) / 4; }

namespace {

std::string render_prompt(const PromptInputs& in, const std::vector<evidence::EventSummary>& rows, std::size_t keep) {
    std::string p;
    p += "You are assisting a threat hunter. Review the host audit logs below and decide whether they show "
         "malicious activity. Do not use internet search.\n\n";
    p += "Scope: processes, files, IP addresses and domains that appear in the logs.\n\n";
    p += "Environment: The logs are collected on " +
         (in.environment.empty() ? std::string("an unspecified host") : in.environment) + ".\n\n";
    p += "Logs:\n" + evidence::summary_header() + "\n";
    for (std::size_t i = 0; i < keep; ++i) p += evidence::summary_row(rows[i]) + "\n";
    if (keep < rows.size()) p += "(" + std::to_string(rows.size() - keep) + " further rows omitted)\n";
    p += "\nYour available evidence:\n";
    if (in.evidence.empty()) {
        p += "- (none identified)\n";
    } else {
        for (const auto& e : in.evidence) p += "- " + e + "\n";
    }
    p += "\nBenign Profile: activity of the same processes on these machines during an attack-free period, as "
         "exec -> {object: frequency}.\n";
    p += (in.profile_block.empty() ? std::string("{}") : in.profile_block) + "\n\n";
    p += "Goals:\n";
    p += "1. Write a detailed narrative of the attack procedure.\n";
    p += "2. Break the attack into ordered steps, naming each step after a MITRE ATT&CK tactic (";
    p += text::join(canonical_tactics(), ", ") + ").\n";
    p += "3. From the narrative and steps, list the malicious entities as indicators of compromise.\n";
    p += "Treat activity that matches the benign profile as normal unless the evidence says otherwise.\n\n";
    p += "Output Format:\n";
    p += "Attack Narrative: <one paragraph>\n";
    p += "Key Steps:\n1) <Tactic name>: <description>\n2) <Tactic name>: <description>\n";
    p += "IOCs:\n- IPs: <comma separated>\n- Domains: <comma separated>\n- Processes: <comma separated>\n"
         "- Files: <comma separated>\n";
    return p;
}

}  // namespace

Prompt build_prompt(const PromptInputs& in, std::size_t token_budget, const TokenCounter& counter) {
    const auto rows = evidence::summarize(in.events);
    Prompt out;
    out.rows_total = rows.size();
    out.rows_kept = rows.size();
    out.text = render_prompt(in, rows, rows.size());
    if (token_budget == 0 || counter(out.text) <= token_budget) return out;

    if (counter(render_prompt(in, rows, 0)) > token_budget) {
        throw BudgetUnsatisfiable("investigation prompt exceeds the token budget of " + std::to_string(token_budget) +
                                  " even without log rows");
    }
    std::size_t lo = 0, hi = rows.size();  // lo fits, hi does not
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (counter(render_prompt(in, rows, mid)) <= token_budget) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    spdlog::warn("prompt over budget: kept {} of {} log rows", lo, rows.size());
    out.rows_kept = lo;
    out.text = render_prompt(in, rows, lo);
    return out;
}

InvestigationReport parse_report(const std::string& response) {
    InvestigationReport r;
    r.raw_response = response;
    const auto body = llm::strip_think(response);

    Section sec = Section::none;
    IocKind kind = IocKind::none;
    bool saw_narrative = false, saw_steps = false, saw_iocs = false;
    bool attach = false;
    std::vector<std::string> narrative;

    auto ioc_line = [&](const std::string& raw) {
        const auto s = strip_markup(raw);
        if (s.empty()) return;
        static const std::regex labelled(R"(^([A-Za-z][A-Za-z /_-]{0,30})\s*:\s*(.*)$)");
        std::smatch m;
        if (std::regex_match(s, m, labelled)) {
            const auto k = ioc_label(m[1].str());
            if (k != IocKind::other || kind == IocKind::none) {
                kind = k;
                if (auto* dst = ioc_list(r.iocs, kind)) add_unique(*dst, ioc_values(m[2].str(), kind));
                return;
            }
        }
        if (auto* dst = ioc_list(r.iocs, kind)) add_unique(*dst, ioc_values(s, kind));
    };

    for (const auto& line : text::split_lines(body)) {
        if (auto h = match_heading(line); h.section != Section::none) {
            sec = h.section;
            saw_narrative |= sec == Section::narrative;
            saw_steps |= sec == Section::steps;
            saw_iocs |= sec == Section::iocs;
            kind = IocKind::none;
            if (!h.rest.empty()) {
                if (sec == Section::narrative) narrative.push_back(h.rest);
                if (sec == Section::steps) parse_step_line(h.rest, r, attach);
                if (sec == Section::iocs) ioc_line(h.rest);
            }
            continue;
        }
        switch (sec) {
            case Section::narrative: {
                const auto t = std::string(text::trim(line));
                if (!t.empty()) narrative.push_back(strip_markup(t));
                break;
            }
            case Section::steps: parse_step_line(line, r, attach); break;
            case Section::iocs: ioc_line(line); break;
            case Section::none: break;
        }
    }
    r.narrative = text::join(narrative, " ");
    if (!saw_narrative && !saw_steps && !saw_iocs) throw ParseError("response has no recognizable sections", response);
    if (!saw_iocs) throw ParseError("response has no IOCs section", response);
    return r;
}

InvestigationReport run_investigation(const std::string& prompt, llm::LlmProvider& provider) {
    auto c = provider.complete(prompt, "investigation");
    if (text::trim(c.text).empty()) throw EmptyResponse("provider returned an empty investigation response");
    auto r = parse_report(c.text);
    r.provider_meta = c.meta;
    return r;
}

std::map<std::string, std::string> entity_names(const std::vector<Event>& events) {
    std::vector<std::size_t> order(events.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return events[a].timestamp < events[b].timestamp; });
    std::map<std::string, std::string> subject, object;
    for (auto i : order) {
        const auto& e = events[i];
        if (!subject.count(e.subject_id)) {
            const auto& n = !e.command_line.empty() ? e.command_line : e.process_path;
            if (!n.empty()) subject.emplace(e.subject_id, n);
        }
        if (!object.count(e.object_id)) {
            if (!e.ip_address.empty()) {
                object.emplace(e.object_id, text::strip_port(e.ip_address));
            } else if (!e.file_path.empty()) {
                object.emplace(e.object_id, e.file_path);
            }
        }
    }
    std::map<std::string, std::string> names;
    for (const auto& e : events) {
        for (const auto* id : {&e.subject_id, &e.object_id}) {
            if (names.count(*id)) continue;
            if (auto s = subject.find(*id); s != subject.end()) {
                names.emplace(*id, s->second);
            } else if (auto o = object.find(*id); o != object.end()) {
                names.emplace(*id, o->second);
            } else {
                names.emplace(*id, *id);
            }
        }
    }
    return names;
}

std::set<std::string> DetectionLabels::entity_names() const {
    std::set<std::string> out;
    for (const auto& [id, name] : attack_entities) out.insert(name);
    return out;
}

nlohmann::ordered_json DetectionLabels::to_json() const {
    nlohmann::ordered_json j;
    auto& ents = j["attack_entities"] = nlohmann::ordered_json::array();
    for (const auto& [id, name] : attack_entities) ents.push_back({{"id", id}, {"name", name}});
    j["attack_event_indices"] = attack_event_indices;
    return j;
}

DetectionLabels DetectionLabels::from_json(const nlohmann::json& j) {
    DetectionLabels d;
    try {
        for (const auto& e : j.at("attack_entities")) {
            d.attack_entities.emplace(e.at("id").get<std::string>(), e.at("name").get<std::string>());
        }
        for (const auto& i : j.at("attack_event_indices")) d.attack_event_indices.insert(i.get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed labels: ") + e.what());
    }
    return d;
}

bool ioc_matches(std::string_view ioc, std::string_view field) {
    const auto needle = text::to_lower(text::trim(ioc));
    if (needle.empty() || field.empty()) return false;
    const auto hay = text::to_lower(field);
    return hay == needle || whole_tokens_contain(hay, needle);
}

DetectionLabels locate(const Iocs& iocs, const EventLog& testing, const std::vector<std::size_t>& scope) {
    DetectionLabels out;
    const auto all = iocs.all();
    if (all.empty() || scope.empty()) return out;

    std::vector<std::string> addrs;
    for (const auto& i : all) addrs.push_back(text::to_lower(text::strip_port(text::trim(i))));

    std::vector<Event> in_scope;
    in_scope.reserve(scope.size());
    for (auto idx : scope) {
        if (idx >= testing.size()) throw ConfigError("selection refers to event " + std::to_string(idx) + " outside the log");
        in_scope.push_back(testing[idx]);
    }
    const auto names = entity_names(testing.events);

    std::set<std::string> matched_names;
    for (const auto& e : in_scope) {
        bool subj = false, obj = false;
        for (std::size_t k = 0; k < all.size() && !(subj && obj); ++k) {
            const auto& ioc = all[k];
            subj = subj || ioc_matches(ioc, e.process_path) || ioc_matches(ioc, e.command_line);
            obj = obj || ioc_matches(ioc, e.file_path) ||
                  (!e.ip_address.empty() && text::to_lower(text::strip_port(e.ip_address)) == addrs[k]);
        }
        if (subj) matched_names.insert(names.at(e.subject_id));
        if (obj) matched_names.insert(names.at(e.object_id));
    }
    if (matched_names.empty()) return out;

    for (std::size_t p = 0; p < scope.size(); ++p) {
        const auto& e = in_scope[p];
        bool hit = false;
        for (const auto* id : {&e.subject_id, &e.object_id}) {
            const auto& n = names.at(*id);
            if (matched_names.count(n)) {
                out.attack_entities.emplace(*id, n);
                hit = true;
            }
        }
        if (hit) out.attack_event_indices.insert(scope[p]);
    }
    return out;
}

DetectionLabels locate(const Iocs& iocs, const EventLog& testing, const detect::WindowSelection& selection) {
    return locate(iocs, testing, selection.truncated_events);
}

}  // namespace shield::investigate
