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

#include "shield/error.hpp"
#include "shield/ingest.hpp"
#include "shield/pipeline.hpp"
#include "shield/scenario.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>

using namespace shield;
using namespace shield::pipeline;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = text::read_file(e.path().string());
    }
    return files;
}

std::map<std::string, StageStatus> statuses(const PipelineResult& r) {
    std::map<std::string, StageStatus> m;
    for (const auto& s : r.stages) m[s.stage] = s.status;
    return m;
}

PipelineConfig scenario_pipeline(const testing::TempDir& dir, const std::vector<std::string>& overrides = {}) {
    write_scenario_bundle(dir.path().string());
    return load_config(dir.file("pipeline.json"), overrides);
}

double recall(const eval::Confusion& c) {
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

}  // namespace

TEST_SUITE("pipeline config") {

TEST_CASE("defaults follow the documented hyper-parameters") {
    const auto c = PipelineConfig::from_json(nlohmann::json{{"paths", {{"train", "a.jsonl"}, {"test", "b.jsonl"}}}});
    CHECK(c.hyper.w_l == 30 * kMicrosPerMinute);
    CHECK(c.hyper.stride == c.hyper.w_l);
    CHECK(c.hyper.k_pct == doctest::Approx(0.10));
    CHECK(c.hyper.c == 3);
    CHECK(c.hyper.t_nbr == 500);
    CHECK(c.hyper.r == doctest::Approx(0.5));
    CHECK(c.hyper.m == 5);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("relative paths resolve against the config directory") {
    const auto c = PipelineConfig::from_json(
        nlohmann::json{{"paths", {{"train", {"x/a.jsonl", "/abs/b.jsonl"}}, {"test", "c.jsonl"}, {"out_dir", "out"}}},
                       {"provider", {{"spec", "mock:responses"}}}},
        "/base");
    CHECK(c.train_logs == std::vector<std::string>{"/base/x/a.jsonl", "/abs/b.jsonl"});
    CHECK(c.test_logs == std::vector<std::string>{"/base/c.jsonl"});
    CHECK(c.out_dir == "/base/out");
    CHECK(c.provider.spec == "mock:/base/responses");
}

TEST_CASE("overrides set nested values with JSON or string parsing") {
    nlohmann::json j{{"hyper", {{"c", 3}}}};
    apply_override(j, "hyper.c=5");
    apply_override(j, "hyper.k_pct=0.25");
    apply_override(j, "environment=a lab host");
    apply_override(j, "paths.test=[\"t1\",\"t2\"]");
    CHECK(j["hyper"]["c"] == 5);
    CHECK(j["hyper"]["k_pct"] == 0.25);
    CHECK(j["environment"] == "a lab host");
    CHECK(j["paths"]["test"].size() == 2);
    CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "hyper..c=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "environment.x=1"), ConfigError);
}

TEST_CASE("invalid configurations are rejected") {
    const nlohmann::json base{{"paths", {{"train", "a"}, {"test", "b"}}}};
    auto bad = [&](const std::string& o) {
        auto j = base;
        apply_override(j, o);
        return PipelineConfig::from_json(j);
    };
    CHECK_THROWS_AS(bad("hyper.k_pct=0").validate(), ConfigError);
    CHECK_THROWS_AS(bad("hyper.r=1.5").validate(), ConfigError);
    CHECK_THROWS_AS(bad("hyper.c=0").validate(), ConfigError);
    CHECK_THROWS_AS(bad("hyper.t_nbr=0").validate(), ConfigError);
    CHECK_THROWS_AS(bad("hyper.m=0").validate(), ConfigError);
    CHECK_THROWS_AS(bad("hyper.w_l_minutes=-1"), ConfigError);
    CHECK_THROWS_AS(bad("hyper.typo=1"), ConfigError);
    CHECK_THROWS_AS(bad("hyper.c=\"three\""), ConfigError);
    CHECK_THROWS_AS(bad("paths.format=xml").validate(), ConfigError);
    CHECK_THROWS_AS(bad("provider.spec=http://localhost:1/v1/chat/completions").validate(), ConfigError);
    CHECK_THROWS_AS(bad("paths.test=[]").validate(), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/pipeline.json"), ConfigError);
}

TEST_CASE("stage errors map to exit codes") {
    CHECK(StageError("s", "a", "x", classify(ConfigError("x"))).exit_code() == 2);
    CHECK(StageError("s", "a", "x", classify(BudgetUnsatisfiable("x"))).exit_code() == 2);
    CHECK(StageError("s", "a", "x", classify(SchemaError("x"))).exit_code() == 3);
    CHECK(StageError("s", "a", "x", classify(ParseError("x", "raw"))).exit_code() == 3);
    CHECK(StageError("s", "a", "x", classify(ProviderError("x"))).exit_code() == 4);
    CHECK(StageError("s", "a", "x", classify(EmptyResponse("x"))).exit_code() == 4);
}

}  // TEST_SUITE

TEST_SUITE("pipeline run") {

TEST_CASE("bundled scenario matches the goldens and reruns from cache byte for byte") {
    testing::TempDir dir;
    const auto cfg = scenario_pipeline(dir);
    const auto first = run_pipeline(cfg);
    for (const auto& [stage, status] : statuses(first)) CHECK_MESSAGE(status == StageStatus::ran, stage);

    REQUIRE(first.metrics);
    CHECK(first.metrics->entity_scores.precision == 1.0);
    CHECK(recall(first.metrics->entity) >= 0.9);
    CHECK(first.report.attack_detected);

    const std::string golden = SHIELD_GOLDEN_DIR "/gtcache/";
    CHECK(text::read_file(dir.file("out/investigate/report.json")) == text::read_file(golden + "report.json"));
    CHECK(text::read_file(dir.file("out/investigate/labels.json")) == text::read_file(golden + "labels.json"));
    CHECK(text::read_file(dir.file("out/evaluate/metrics.json")) == text::read_file(golden + "metrics.json"));

    const auto before = snapshot(dir.path() / "out");
    const auto second = run_pipeline(cfg);
    for (const auto& [stage, status] : statuses(second)) CHECK_MESSAGE(status == StageStatus::cached, stage);
    CHECK(snapshot(dir.path() / "out") == before);

    // A fresh directory reproduces every artifact.
    testing::TempDir other;
    run_pipeline(scenario_pipeline(other));
    auto a = before, b = snapshot(other.path() / "out");
    a.erase("config.json");  // carries absolute paths
    b.erase("config.json");
    CHECK(a == b);
}

TEST_CASE("changing a detection knob reruns only the dependent stages") {
    testing::TempDir dir;
    run_pipeline(scenario_pipeline(dir));
    const auto r = run_pipeline(load_config(dir.file("pipeline.json"), {"hyper.c=2"}));
    const auto s = statuses(r);
    CHECK(s.at("ingest") == StageStatus::cached);
    CHECK(s.at("train-mae") == StageStatus::cached);
    CHECK(s.at("detect") == StageStatus::ran);
    CHECK(s.at("profile") == StageStatus::cached);
    CHECK(s.at("evaluate") != StageStatus::skipped);

    // Tampering with an artifact invalidates its stage.
    text::write_file(dir.file("out/profile/sampled.json"), "{}");
    const auto t = statuses(run_pipeline(load_config(dir.file("pipeline.json"), {"hyper.c=2"})));
    CHECK(t.at("profile") == StageStatus::ran);
    CHECK(t.at("detect") == StageStatus::cached);
}

TEST_CASE("the provider is asked once per stage and not at all from cache") {
    testing::TempDir dir;
    const auto cfg = scenario_pipeline(dir);
    llm::MockProvider mock(dir.file("mock"));
    run_pipeline(cfg, &mock);
    CHECK(mock.calls() == 2);
    run_pipeline(cfg, &mock);
    CHECK(mock.calls() == 2);
}

TEST_CASE("a quiet testing log yields the no-attack report") {
    testing::TempDir dir;
    auto cfg = scenario_pipeline(dir);
    // The benign event kind that scores lowest under the scenario model.
    const auto sc = scenario::gtcache_scenario();
    EventLog quiet;
    quiet.label = LogLabel::testing;
    for (const auto& e : sc.test.events) {
        if (e.command_line == "nginx: worker process" && e.file_path == "/var/log/nginx/access.log") quiet.events.push_back(e);
    }
    REQUIRE(quiet.size() > 10);
    cfg.test_logs = {dir.write("quiet.jsonl", ingest::serialize_jsonl(quiet))};
    cfg.ground_truth.clear();
    fs::create_directories(dir.file("silent"));
    llm::MockProvider empty(dir.file("silent"));  // would throw if asked
    const auto r = run_pipeline(cfg, &empty);
    CHECK(empty.calls() == 0);
    CHECK_FALSE(r.report.attack_detected);
    CHECK(r.labels.attack_entities.empty());
    CHECK(r.labels.attack_event_indices.empty());
    CHECK(statuses(r).at("evaluate") == StageStatus::skipped);
}

TEST_CASE("stage failures carry the stage name and artifact") {
    testing::TempDir dir;
    const auto cfg = scenario_pipeline(dir, {"provider.spec=mock:absent"});
    try {
        run_pipeline(cfg);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "evidence");
        CHECK(e.artifact().find("evidence.json") != std::string::npos);
        CHECK(e.exit_code() == 4);
    }

    text::write_file(dir.file("garbled/evidence.txt"), text::read_file(dir.file("mock/evidence.txt")));
    text::write_file(dir.file("garbled/investigation.txt"), "nothing structured here\n");
    try {
        run_pipeline(load_config(dir.file("pipeline.json"), {"provider.spec=mock:garbled"}));
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "investigate");
        CHECK(e.exit_code() == 3);
        CHECK(text::read_file(dir.file("out/investigate/raw_response.txt")) == "nothing structured here\n");
    }
}

}  // TEST_SUITE
