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
#include "shield/error.hpp"
#include "shield/eval.hpp"
#include "shield/evidence.hpp"
#include "shield/ingest.hpp"
#include "shield/investigate.hpp"
#include "shield/llm.hpp"
#include "shield/mae.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

// End-to-end orchestration: ingest, train, detect, evidence, profile,
// investigate and (with ground truth) evaluate. Every stage writes its
// artifacts under the output directory and is skipped on a rerun whose
// inputs hash to the same digest.
namespace shield::pipeline {

struct Hyper {
    Timestamp w_l = 30 * kMicrosPerMinute;
    Timestamp stride = 30 * kMicrosPerMinute;
    double k_pct = 0.10;
    std::size_t c = 3;
    std::size_t t_nbr = 500;
    double r = 0.5;
    std::size_t m = 5;
    std::uint64_t seed = 7;
};

struct ProviderConfig {
    std::string spec = "mock:mock";  // mock:<dir>, http:<url> or a bare http(s) URL
    llm::HttpConfig http;
    // Embeddings for tactic and story similarity; empty uses the offline
    // trigram embedder.
    std::string embedding_endpoint;
    std::string embedding_model;
};

struct PipelineConfig {
    std::vector<std::string> train_logs;
    std::vector<std::string> test_logs;
    std::string format = "jsonl";
    double reject_ratio = 0.01;
    std::optional<std::set<std::string>> event_types;
    std::string model_path;     // prebuilt MAE checkpoint; skips training
    std::string detector_path;  // prebuilt detector state; skips the boundary fit
    std::string profile_path;   // prebuilt benign profile; skips profiling
    std::string ground_truth;
    std::string out_dir = "shield-out";

    Hyper hyper;
    mae::MaeHyper mae;
    detect::OcsvmParams ocsvm;
    ProviderConfig provider;
    std::string environment;

    // Throws ConfigError.
    void validate() const;

    // Relative paths (including a mock provider directory) resolve against
    // base_dir. Unknown keys are rejected.
    static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
    nlohmann::ordered_json to_json() const;
};

// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a
// string. Throws ConfigError.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Reads the file, applies the overrides in order, parses and validates.
PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// A stage failure with the stage name and the artifact it was producing.
class StageError : public Error {
public:
    enum class Kind { config, stage, provider };

    StageError(std::string stage, std::string artifact, const std::string& cause, Kind kind);

    const std::string& stage() const { return stage_; }
    const std::string& artifact() const { return artifact_; }
    Kind kind() const { return kind_; }
    int exit_code() const;  // 2 config, 3 stage, 4 provider

private:
    std::string stage_;
    std::string artifact_;
    Kind kind_;
};

// Maps an exception from a stage to the StageError kind.
StageError::Kind classify(const std::exception& e);

enum class StageStatus { ran, cached, supplied, skipped };
const char* to_string(StageStatus s);

struct StageRecord {
    std::string stage;
    StageStatus status = StageStatus::ran;
    std::string input_digest;
};

struct PipelineResult {
    investigate::InvestigationReport report;
    investigate::DetectionLabels labels;
    std::optional<eval::MetricsReport> metrics;
    std::vector<StageRecord> stages;
};

// Runs every stage in order. A provider passed here replaces the configured
// one (tests use this to count calls).
PipelineResult run_pipeline(const PipelineConfig& config, llm::LlmProvider* provider = nullptr);

// Individual stages over explicit files, shared with the CLI subcommands.
// None of them caches.

ingest::ParseReport ingest_logs(const std::vector<std::string>& inputs, const std::string& format, LogLabel label,
                                double reject_ratio, const std::optional<std::set<std::string>>& event_types,
                                const std::string& out_path);

mae::TrainReport train_model(const std::string& train_log, const mae::MaeHyper& hyper, std::uint64_t seed,
                             const std::string& model_out);

struct DetectOutputs {
    std::string detector;   // detector.json, read when it exists and fit is false
    std::string scores;     // per-event scores of the testing log
    std::string selection;  // selection.json
};

// Fits the boundary and t_ano on the training log (when train_log is
// non-empty), then scores and windows the testing log.
detect::WindowSelection detect_attacks(const std::string& model_path, const std::string& train_log,
                                       const std::string& test_log, const Hyper& hyper,
                                       const detect::OcsvmParams& ocsvm, const DetectOutputs& out);

struct EvidenceResult {
    evidence::AttackEvidence evidence;
    evidence::EvidenceNeighborhood neighborhood;
};

// Empty selections produce an empty evidence list and neighborhood without
// calling the provider.
EvidenceResult collect_evidence(const std::string& selection_path, llm::LlmProvider& provider,
                                const std::string& environment, std::size_t t_nbr, const std::string& evidence_out,
                                const std::string& neighborhood_out);

void build_profiles(const std::string& train_log, double r, std::uint64_t seed, const std::string& benign_out,
                    const std::string& sampled_out);

struct InvestigateOutputs {
    std::string prompt;
    std::string report;
    std::string report_md;
    std::string labels;
    std::string raw_response;  // written when parsing fails
};

PipelineResult investigate_attack(const std::string& selection_path, const std::string& evidence_path,
                                  const std::string& neighborhood_path, const std::string& profile_path,
                                  const std::string& test_log, llm::LlmProvider& provider,
                                  const std::string& environment, const InvestigateOutputs& out);

eval::MetricsReport evaluate_run(const std::string& labels_path, const std::string& report_path,
                                 const std::string& truth_path, const std::string& test_log,
                                 const ProviderConfig& similarity, const std::string& metrics_out);

std::unique_ptr<eval::SimilarityProvider> make_similarity(const ProviderConfig& config);

// pipeline.json for the bundled attack scenario: a small MAE so the whole
// run takes seconds, the mock provider and the scenario's ground truth.
nlohmann::ordered_json scenario_config();

// The scenario's files plus pipeline.json under dir.
void write_scenario_bundle(const std::string& dir, std::uint64_t seed = 7);

}  // namespace shield::pipeline
