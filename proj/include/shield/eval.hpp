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
#include "shield/investigate.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace shield::eval {

struct GroundTruth {
    std::set<std::string> attack_entities;  // display names
    std::set<std::size_t> attack_event_indices;
    std::vector<investigate::Step> tactic_steps;
    std::string narrative;

    nlohmann::ordered_json to_json() const;
    // Throws SchemaError, including for non-canonical tactic names.
    static GroundTruth from_json(const nlohmann::json& j);
};

struct Confusion {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

// Throws PopulationTooSmall when population < |predicted ∪ truth|.
Confusion confusion(const std::set<std::string>& predicted, const std::set<std::string>& truth,
                    std::uint64_t population);
Confusion confusion(const std::set<std::size_t>& predicted, const std::set<std::size_t>& truth,
                    std::uint64_t population);

struct PrecisionMcc {
    double precision = 0.0;
    double mcc = 0.0;
};

// Integer numerator and denominator, one square root at the end. Zero
// precision without positives, zero MCC when a marginal is empty.
PrecisionMcc precision_mcc(const Confusion& c);

class SimilarityProvider {
public:
    virtual ~SimilarityProvider() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    // Cosine of the two embeddings.
    double similarity(const std::string& a, const std::string& b);
};

// Hashed character-trigram counts, L2-normalized. Deterministic and offline.
class TrigramEmbedder : public SimilarityProvider {
public:
    explicit TrigramEmbedder(std::size_t dims = 4096) : dims_(dims) {}
    std::vector<double> embed(const std::string& text) override;

private:
    std::size_t dims_;
};

// Embeddings route ({model, input}) of an OpenAI-compatible server.
class HttpEmbedder : public SimilarityProvider {
public:
    HttpEmbedder(std::string endpoint, std::string model, std::string api_key_env = "SHIELD_LLM_API_KEY",
                 int timeout_seconds = 60);
    std::vector<double> embed(const std::string& text) override;

private:
    std::string host_, path_, model_, key_env_;
    int timeout_;
};

struct TacticScore {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0;
    double f1 = 0.0;
};

// Each prediction claims the first unclaimed truth step with the same
// tactic; a claim counts as TP when the descriptions are more similar than
// the threshold (a threshold of 0 accepts every claim). Unclaimed truth
// steps are FN.
TacticScore tactic_metrics(const std::vector<investigate::Step>& predicted,
                           const std::vector<investigate::Step>& truth, SimilarityProvider& sim,
                           double threshold = 0.7);

// Cosine similarity clamped to [0, 1]. Both texts must be non-empty.
double story_sim(const std::string& narrative, const std::string& truth_narrative, SimilarityProvider& sim);

// Distinct display names in a log; the entity-level population.
std::uint64_t entity_population(const EventLog& log);

struct MetricsReport {
    Confusion entity;
    PrecisionMcc entity_scores;
    Confusion event;
    PrecisionMcc event_scores;
    std::optional<TacticScore> tactics;
    std::optional<double> story;

    nlohmann::ordered_json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);  // throws SchemaError
};

MetricsReport evaluate(const investigate::DetectionLabels& labels, const investigate::InvestigationReport* report,
                       const GroundTruth& truth, const EventLog& testing, SimilarityProvider& sim,
                       std::optional<std::uint64_t> entity_population_override = std::nullopt);

// Appends n events whose subject is an attack process and whose object side
// (object id, type, path, address) is copied from a benign event. Subject
// attributes stay those of the attack process; timestamps fall inside the
// attack entities' active span. Throws NoAttackEntities.
EventLog inject_mimicry(const EventLog& log, const GroundTruth& truth, std::size_t n, std::uint64_t seed);

}  // namespace shield::eval
