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

// shield: command-line front end for the detection and investigation pipeline.

#include "shield/error.hpp"
#include "shield/eval.hpp"
#include "shield/ingest.hpp"
#include "shield/llm.hpp"
#include "shield/pipeline.hpp"
#include "shield/text.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace shield;

namespace {

int exit_code_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const pipeline::StageError*>(&e)) return s->exit_code();
    switch (pipeline::classify(e)) {
        case pipeline::StageError::Kind::config: return 2;
        case pipeline::StageError::Kind::provider: return 4;
        case pipeline::StageError::Kind::stage: break;
    }
    return 3;
}

// Settings shared by the per-stage subcommands: an optional pipeline config
// supplies defaults, individual flags win.
struct Common {
    std::string config;
    std::vector<std::string> overrides;

    pipeline::PipelineConfig load() const {
        if (config.empty()) return {};
        auto j = nlohmann::json::parse(text::read_file(config), nullptr, false);
        if (j.is_discarded()) throw ConfigError(config + " is not valid JSON");
        for (const auto& o : overrides) pipeline::apply_override(j, o);
        return pipeline::PipelineConfig::from_json(j, fs::absolute(config).parent_path().string());
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "pipeline.json supplying defaults")->check(CLI::ExistingFile);
    app->add_option("--override", c.overrides, "config override key=value (repeatable)");
}

std::string read_environment(const std::string& text_value, const std::string& file, const std::string& fallback) {
    if (!file.empty()) return std::string(text::trim(text::read_file(file)));
    if (!text_value.empty()) return text_value;
    return fallback;
}

void print_metrics(const eval::MetricsReport& m) { std::cout << m.to_json().dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Host intrusion detection and LLM-assisted investigation over audit logs"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    // run
    std::string run_config;
    std::vector<std::string> run_overrides;
    auto* run = app.add_subcommand("run", "run every stage from a pipeline config");
    run->add_option("--config", run_config, "pipeline.json")->required()->check(CLI::ExistingFile);
    run->add_option("--override", run_overrides, "config override key=value (repeatable)");

    // scenario
    std::string scenario_out;
    std::uint64_t scenario_seed = 7;
    auto* scen = app.add_subcommand("scenario", "write the bundled attack scenario and its pipeline.json");
    scen->add_option("--out", scenario_out, "output directory")->required();
    scen->add_option("--seed", scenario_seed, "generator seed");

    // ingest
    Common ing_c;
    std::vector<std::string> ing_inputs;
    std::string ing_format = "jsonl", ing_label = "testing", ing_out;
    double ing_reject = 0.01;
    std::vector<std::string> ing_types;
    auto* ing = app.add_subcommand("ingest", "parse raw logs into canonical JSONL");
    add_common(ing, ing_c);
    ing->add_option("inputs", ing_inputs, "raw log files")->required()->check(CLI::ExistingFile);
    ing->add_option("--format", ing_format, "jsonl or csv");
    ing->add_option("--label", ing_label, "training or testing")->check(CLI::IsMember({"training", "testing"}));
    ing->add_option("--reject-ratio", ing_reject, "tolerated fraction of malformed records");
    ing->add_option("--types", ing_types, "event types to keep")->delimiter(',');
    ing->add_option("--out", ing_out, "canonical JSONL output")->required();

    // train-mae
    Common tr_c;
    std::string tr_train, tr_out;
    std::optional<std::size_t> tr_epochs, tr_dim;
    std::optional<std::uint64_t> tr_seed;
    auto* tr = app.add_subcommand("train-mae", "train the event masked autoencoder");
    add_common(tr, tr_c);
    tr->add_option("--train", tr_train, "canonical training JSONL")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "model checkpoint")->required();
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--dim", tr_dim);
    tr->add_option("--seed", tr_seed);

    // detect
    Common det_c;
    std::string det_model, det_train, det_test, det_detector, det_scores, det_selection;
    std::optional<std::size_t> det_c_windows;
    auto* det = app.add_subcommand("detect", "score events and select attack windows");
    add_common(det, det_c);
    det->add_option("--model", det_model)->required()->check(CLI::ExistingFile);
    det->add_option("--train", det_train, "training JSONL; omit to reuse --detector")->check(CLI::ExistingFile);
    det->add_option("--test", det_test)->required()->check(CLI::ExistingFile);
    det->add_option("--detector", det_detector, "detector state (written when --train is given)")->required();
    det->add_option("--scores", det_scores)->required();
    det->add_option("--selection", det_selection)->required();
    det->add_option("--c", det_c_windows, "maximum windows selected");

    // evidence
    Common ev_c;
    std::string ev_selection, ev_provider, ev_env, ev_env_file, ev_out, ev_nbr_out;
    std::optional<std::size_t> ev_t_nbr;
    auto* ev = app.add_subcommand("evidence", "ask the model for attack evidence and expand it");
    add_common(ev, ev_c);
    ev->add_option("--selection", ev_selection)->required()->check(CLI::ExistingFile);
    ev->add_option("--provider", ev_provider, "mock:<dir> or http:<url>");
    ev->add_option("--env", ev_env, "environment description");
    ev->add_option("--env-file", ev_env_file)->check(CLI::ExistingFile);
    ev->add_option("--t-nbr", ev_t_nbr);
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--neighborhood-out", ev_nbr_out)->required();

    // build-profile
    Common bp_c;
    std::string bp_train, bp_out, bp_sampled;
    std::optional<double> bp_r;
    std::optional<std::uint64_t> bp_seed;
    auto* bp = app.add_subcommand("build-profile", "build and sample the benign profile");
    add_common(bp, bp_c);
    bp->add_option("--train", bp_train)->required()->check(CLI::ExistingFile);
    bp->add_option("--r", bp_r, "sampling ratio");
    bp->add_option("--seed", bp_seed);
    bp->add_option("--out", bp_out, "full profile")->required();
    bp->add_option("--sampled-out", bp_sampled, "sampled profile")->required();

    // investigate
    Common inv_c;
    std::string inv_selection, inv_evidence, inv_nbr, inv_profile, inv_test, inv_provider, inv_env, inv_env_file,
        inv_out;
    auto* inv = app.add_subcommand("investigate", "write the investigation report and detection labels");
    add_common(inv, inv_c);
    inv->add_option("--selection", inv_selection)->required()->check(CLI::ExistingFile);
    inv->add_option("--evidence", inv_evidence)->required()->check(CLI::ExistingFile);
    inv->add_option("--neighborhood", inv_nbr)->required()->check(CLI::ExistingFile);
    inv->add_option("--profile", inv_profile, "sampled profile")->required()->check(CLI::ExistingFile);
    inv->add_option("--test", inv_test)->required()->check(CLI::ExistingFile);
    inv->add_option("--provider", inv_provider);
    inv->add_option("--env", inv_env);
    inv->add_option("--env-file", inv_env_file)->check(CLI::ExistingFile);
    inv->add_option("--out-dir", inv_out)->required();

    // evaluate
    Common evl_c;
    std::string evl_labels, evl_report, evl_truth, evl_test, evl_out;
    auto* evl = app.add_subcommand("evaluate", "score labels and report against ground truth");
    add_common(evl, evl_c);
    evl->add_option("--labels", evl_labels)->required()->check(CLI::ExistingFile);
    evl->add_option("--report", evl_report)->required()->check(CLI::ExistingFile);
    evl->add_option("--truth", evl_truth)->required()->check(CLI::ExistingFile);
    evl->add_option("--test", evl_test)->required()->check(CLI::ExistingFile);
    evl->add_option("--out", evl_out)->required();

    // inject-mimicry
    std::string mim_log, mim_truth, mim_out, mim_truth_out;
    std::size_t mim_n = 1000;
    std::uint64_t mim_seed = 7;
    auto* mim = app.add_subcommand("inject-mimicry", "append benign-looking events to attack entities");
    mim->add_option("--log", mim_log, "canonical testing JSONL")->required()->check(CLI::ExistingFile);
    mim->add_option("--truth", mim_truth)->required()->check(CLI::ExistingFile);
    mim->add_option("--n", mim_n, "events to add");
    mim->add_option("--seed", mim_seed);
    mim->add_option("--out", mim_out, "injected log, time ordered")->required();
    mim->add_option("--truth-out", mim_truth_out, "ground truth with event indices remapped to the new order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto logger = spdlog::stderr_color_mt("shield");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("%^%l%$ %v");
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*run) {
            const auto cfg = pipeline::load_config(run_config, run_overrides);
            const auto r = pipeline::run_pipeline(cfg);
            for (const auto& s : r.stages) std::cout << s.stage << ": " << pipeline::to_string(s.status) << "\n";
            std::cout << "attack detected: " << (r.report.attack_detected ? "yes" : "no") << "\n";
            std::cout << "attack entities: " << r.labels.entity_names().size() << ", attack events: "
                      << r.labels.attack_event_indices.size() << "\n";
            if (r.metrics) print_metrics(*r.metrics);
            std::cout << "artifacts: " << cfg.out_dir << "\n";
        } else if (*scen) {
            pipeline::write_scenario_bundle(scenario_out, scenario_seed);
            std::cout << "wrote " << scenario_out << "/pipeline.json\n";
        } else if (*ing) {
            const auto cfg = ing_c.load();
            std::optional<std::set<std::string>> types = cfg.event_types;
            if (!ing_types.empty()) types = std::set<std::string>(ing_types.begin(), ing_types.end());
            const auto rep = pipeline::ingest_logs(ing_inputs, ing_format,
                                                   ing_label == "training" ? LogLabel::training : LogLabel::testing,
                                                   ing_reject, types, ing_out);
            std::cout << rep.log.size() << " events (" << rep.rejected << " of " << rep.records
                      << " records rejected)\n";
        } else if (*tr) {
            auto cfg = tr_c.load();
            if (tr_epochs) cfg.mae.epochs = *tr_epochs;
            if (tr_dim) cfg.mae.shape.dim = *tr_dim;
            const auto rep = pipeline::train_model(tr_train, cfg.mae, tr_seed.value_or(cfg.hyper.seed), tr_out);
            std::cout << "held-out loss " << rep.initial_heldout() << " -> " << rep.final_heldout() << "\n";
        } else if (*det) {
            auto cfg = det_c.load();
            if (det_c_windows) cfg.hyper.c = *det_c_windows;
            const auto sel = pipeline::detect_attacks(det_model, det_train, det_test, cfg.hyper, cfg.ocsvm,
                                                      {det_detector, det_scores, det_selection});
            std::cout << sel.selected.size() << " of " << sel.windows.size() << " windows selected, "
                      << sel.truncated_events.size() << " events\n";
        } else if (*ev) {
            auto cfg = ev_c.load();
            if (ev_t_nbr) cfg.hyper.t_nbr = *ev_t_nbr;
            auto provider = llm::make_provider(ev_provider.empty() ? cfg.provider.spec : ev_provider, cfg.provider.http);
            const auto r = pipeline::collect_evidence(ev_selection, *provider,
                                                      read_environment(ev_env, ev_env_file, cfg.environment),
                                                      cfg.hyper.t_nbr, ev_out, ev_nbr_out);
            std::cout << r.evidence.command_lines.size() << " evidence strings, " << r.neighborhood.positions.size()
                      << " neighborhood events\n";
        } else if (*bp) {
            const auto cfg = bp_c.load();
            pipeline::build_profiles(bp_train, bp_r.value_or(cfg.hyper.r), bp_seed.value_or(cfg.hyper.seed), bp_out,
                                     bp_sampled);
        } else if (*inv) {
            const auto cfg = inv_c.load();
            auto provider =
                llm::make_provider(inv_provider.empty() ? cfg.provider.spec : inv_provider, cfg.provider.http);
            const auto d = fs::path(inv_out);
            pipeline::InvestigateOutputs out{(d / "prompt.txt").string(), (d / "report.json").string(),
                                             (d / "report.md").string(), (d / "labels.json").string(),
                                             (d / "raw_response.txt").string()};
            const auto r = pipeline::investigate_attack(inv_selection, inv_evidence, inv_nbr, inv_profile, inv_test,
                                                        *provider,
                                                        read_environment(inv_env, inv_env_file, cfg.environment), out);
            std::cout << r.report.to_markdown();
        } else if (*evl) {
            const auto cfg = evl_c.load();
            print_metrics(pipeline::evaluate_run(evl_labels, evl_report, evl_truth, evl_test, cfg.provider, evl_out));
        } else if (*mim) {
            const auto log = ingest::load_canonical(mim_log, LogLabel::testing);
            auto tj = nlohmann::json::parse(text::read_file(mim_truth), nullptr, false);
            if (tj.is_discarded()) throw SchemaError(mim_truth + " is not valid JSON");
            const auto truth = eval::GroundTruth::from_json(tj);
            auto out = eval::inject_mimicry(log, truth, mim_n, mim_seed);
            // Stable time order, matching what ingest would produce.
            std::vector<std::size_t> order(out.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return out[a].timestamp < out[b].timestamp;
            });
            EventLog sorted;
            sorted.label = out.label;
            sorted.source_tag = out.source_tag;
            auto remapped = truth;
            remapped.attack_event_indices.clear();
            for (std::size_t pos = 0; pos < order.size(); ++pos) {
                if (truth.attack_event_indices.count(order[pos])) remapped.attack_event_indices.insert(pos);
                sorted.events.push_back(out[order[pos]]);
            }
            text::write_file(mim_out, ingest::serialize_jsonl(sorted));
            if (!mim_truth_out.empty()) text::write_file(mim_truth_out, remapped.to_json().dump(2) + "\n");
            std::cout << out.size() - log.size() << " events appended\n";
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
            spdlog::error("unparsed response follows:\n{}", p->raw());
        }
        return exit_code_for(e);
    }
    return 0;
}
