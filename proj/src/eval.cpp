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

#include "shield/eval.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>

namespace shield::eval {

nlohmann::ordered_json GroundTruth::to_json() const {
    nlohmann::ordered_json j;
    j["attack_entities"] = attack_entities;
    j["attack_event_indices"] = attack_event_indices;
    auto& st = j["tactic_steps"] = nlohmann::ordered_json::array();
    for (const auto& s : tactic_steps) st.push_back({{"tactic", s.tactic}, {"description", s.description}});
    j["narrative"] = narrative;
    return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
    GroundTruth g;
    try {
        g.attack_entities = j.at("attack_entities").get<std::set<std::string>>();
        g.attack_event_indices = j.value("attack_event_indices", std::set<std::size_t>{});
        for (const auto& s : j.value("tactic_steps", nlohmann::json::array())) {
            const auto name = s.at("tactic").get<std::string>();
            auto t = investigate::canonical_tactic(name);
            if (!t) throw SchemaError("ground truth names an unknown tactic: " + name);
            g.tactic_steps.push_back({*t, s.value("description", "")});
        }
        g.narrative = j.value("narrative", "");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed ground truth: ") + e.what());
    }
    return g;
}

namespace {

template <typename T>
Confusion confusion_of(const std::set<T>& predicted, const std::set<T>& truth, std::uint64_t population) {
    Confusion c;
    for (const auto& p : predicted) (truth.count(p) ? c.tp : c.fp)++;
    for (const auto& t : truth) {
        if (!predicted.count(t)) ++c.fn;
    }
    const std::uint64_t used = c.tp + c.fp + c.fn;
    if (population < used) {
        throw PopulationTooSmall("population " + std::to_string(population) + " is smaller than the " +
                                 std::to_string(used) + " labelled items");
    }
    c.tn = population - used;
    return c;
}

}  // namespace

Confusion confusion(const std::set<std::string>& predicted, const std::set<std::string>& truth,
                    std::uint64_t population) {
    return confusion_of(predicted, truth, population);
}

Confusion confusion(const std::set<std::size_t>& predicted, const std::set<std::size_t>& truth,
                    std::uint64_t population) {
    return confusion_of(predicted, truth, population);
}

PrecisionMcc precision_mcc(const Confusion& c) {
    using i128 = __int128;
    PrecisionMcc r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const i128 tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
    const i128 a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
    if (a == 0 || b == 0 || d == 0 || e == 0) return r;
    const i128 num = tp * tn - fp * fn;
    // Exact while every count is below 2^62.
    const long double den = std::sqrt(static_cast<long double>(a * b)) * std::sqrt(static_cast<long double>(d * e));
    r.mcc = static_cast<double>(static_cast<long double>(num) / den);
    return r;
}

double SimilarityProvider::similarity(const std::string& a, const std::string& b) {
    const auto x = embed(a);
    const auto y = embed(b);
    if (x.size() != y.size()) throw ProviderError("embedding sizes differ");
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    if (nx == 0 || ny == 0) return 0.0;
    return dot / std::sqrt(nx * ny);
}

std::vector<double> TrigramEmbedder::embed(const std::string& input) {
    const std::string s = " " + text::join(text::split_ws(text::to_lower(input)), " ") + " ";
    std::vector<double> v(dims_, 0.0);
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) v[text::fnv1a64(std::string_view(s).substr(i, 3)) % dims_] += 1.0;
    double n = 0;
    for (double x : v) n += x * x;
    if (n > 0) {
        n = std::sqrt(n);
        for (double& x : v) x /= n;
    }
    return v;
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, std::string api_key_env, int timeout_seconds)
    : model_(std::move(model)), key_env_(std::move(api_key_env)), timeout_(timeout_seconds) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(endpoint, m, url)) throw ConfigError("invalid embedding endpoint: " + endpoint);
    host_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/embeddings";
}

std::vector<double> HttpEmbedder::embed(const std::string& input) {
    httplib::Client cli(host_);
    cli.set_connection_timeout(timeout_, 0);
    cli.set_read_timeout(timeout_, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(key_env_.c_str()); key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
    const nlohmann::json body{{"model", model_}, {"input", input}};
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw ProviderError("embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ProviderError("embedding endpoint returned status " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
}

TacticScore tactic_metrics(const std::vector<investigate::Step>& predicted,
                           const std::vector<investigate::Step>& truth, SimilarityProvider& sim, double threshold) {
    TacticScore s;
    std::vector<bool> claimed(truth.size(), false);
    for (const auto& p : predicted) {
        std::size_t hit = truth.size();
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (!claimed[i] && text::iequals(truth[i].tactic, p.tactic)) {
                hit = i;
                break;
            }
        }
        if (hit == truth.size()) {
            ++s.fp;
            continue;
        }
        claimed[hit] = true;
        if (threshold <= 0.0 || sim.similarity(p.description, truth[hit].description) > threshold) {
            ++s.tp;
        } else {
            ++s.fp;
        }
    }
    for (bool c : claimed) s.fn += !c;
    if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    const auto denom = 2 * s.tp + s.fp + s.fn;
    if (denom > 0) s.f1 = 2.0 * static_cast<double>(s.tp) / static_cast<double>(denom);
    return s;
}

double story_sim(const std::string& narrative, const std::string& truth_narrative, SimilarityProvider& sim) {
    if (text::trim(narrative).empty() || text::trim(truth_narrative).empty()) {
        throw ConfigError("story similarity needs two non-empty narratives");
    }
    return std::clamp(sim.similarity(narrative, truth_narrative), 0.0, 1.0);
}

std::uint64_t entity_population(const EventLog& log) {
    std::set<std::string> names;
    for (const auto& [id, name] : investigate::entity_names(log.events)) names.insert(name);
    return names.size();
}

nlohmann::ordered_json MetricsReport::to_json() const {
    auto block = [](const Confusion& c, const PrecisionMcc& s) {
        return nlohmann::ordered_json{{"tp", c.tp},           {"fp", c.fp},   {"tn", c.tn},
                                      {"fn", c.fn},           {"precision", s.precision},
                                      {"mcc", s.mcc}};
    };
    nlohmann::ordered_json j;
    j["entity"] = block(entity, entity_scores);
    j["event"] = block(event, event_scores);
    if (tactics) {
        j["tactic"] = {{"tp", tactics->tp},
                       {"fp", tactics->fp},
                       {"fn", tactics->fn},
                       {"precision", tactics->precision},
                       {"f1", tactics->f1}};
    }
    if (story) j["story_sim"] = *story;
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport m;
    auto block = [](const nlohmann::json& b, Confusion& c, PrecisionMcc& s) {
        c.tp = b.at("tp").get<std::uint64_t>();
        c.fp = b.at("fp").get<std::uint64_t>();
        c.tn = b.at("tn").get<std::uint64_t>();
        c.fn = b.at("fn").get<std::uint64_t>();
        s.precision = b.at("precision").get<double>();
        s.mcc = b.at("mcc").get<double>();
    };
    try {
        block(j.at("entity"), m.entity, m.entity_scores);
        block(j.at("event"), m.event, m.event_scores);
        if (j.contains("tactic")) {
            const auto& t = j["tactic"];
            m.tactics = TacticScore{t.at("tp").get<std::uint64_t>(), t.at("fp").get<std::uint64_t>(),
                                    t.at("fn").get<std::uint64_t>(), t.at("precision").get<double>(),
                                    t.at("f1").get<double>()};
        }
        if (j.contains("story_sim")) m.story = j["story_sim"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed metrics: ") + e.what());
    }
    return m;
}

MetricsReport evaluate(const investigate::DetectionLabels& labels, const investigate::InvestigationReport* report,
                       const GroundTruth& truth, const EventLog& testing, SimilarityProvider& sim,
                       std::optional<std::uint64_t> entity_population_override) {
    MetricsReport m;
    const auto population = entity_population_override.value_or(entity_population(testing));
    m.entity = confusion(labels.entity_names(), truth.attack_entities, population);
    m.entity_scores = precision_mcc(m.entity);
    m.event = confusion(labels.attack_event_indices, truth.attack_event_indices, testing.size());
    m.event_scores = precision_mcc(m.event);
    if (report && !truth.tactic_steps.empty()) m.tactics = tactic_metrics(report->steps, truth.tactic_steps, sim);
    if (report && !truth.narrative.empty() && !text::trim(report->narrative).empty()) {
        m.story = story_sim(report->narrative, truth.narrative, sim);
    }
    return m;
}

EventLog inject_mimicry(const EventLog& log, const GroundTruth& truth, std::size_t n, std::uint64_t seed) {
    if (truth.attack_entities.empty()) throw NoAttackEntities("ground truth lists no attack entities");
    EventLog out = log;
    if (n == 0) return out;

    const auto names = investigate::entity_names(log.events);
    auto is_attack = [&](const std::string& id) { return truth.attack_entities.count(names.at(id)) > 0; };

    std::vector<std::size_t> attack_subject_event;  // first event of each attack subject
    std::set<std::string> seen;
    std::vector<std::size_t> benign;
    Timestamp lo = 0, hi = 0;
    bool any_attack = false;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& e = log[i];
        const bool subj = is_attack(e.subject_id), obj = is_attack(e.object_id);
        if (subj || obj || truth.attack_event_indices.count(i)) {
            lo = any_attack ? std::min(lo, e.timestamp) : e.timestamp;
            hi = any_attack ? std::max(hi, e.timestamp) : e.timestamp;
            any_attack = true;
            if (subj && seen.insert(e.subject_id).second) attack_subject_event.push_back(i);
        } else {
            benign.push_back(i);
        }
    }
    if (attack_subject_event.empty()) throw NoAttackEntities("no attack entity acts as a subject in the log");
    if (benign.empty()) throw InsufficientData("log has no benign events to copy");

    Rng rng(mix_seed(seed, 0x6d696d6963ULL));
    out.events.reserve(log.size() + n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& a = log[attack_subject_event[rng.below(attack_subject_event.size())]];
        const auto& b = log[benign[rng.below(benign.size())]];
        Event e;
        e.subject_id = a.subject_id;
        e.process_path = a.process_path;
        e.command_line = a.command_line;
        e.object_id = b.object_id;
        e.event_type = b.event_type;
        e.file_path = b.file_path;
        e.ip_address = b.ip_address;
        e.timestamp = lo + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(hi - lo) + 1));
        out.events.push_back(std::move(e));
    }
    return out;
}

}  // namespace shield::eval
