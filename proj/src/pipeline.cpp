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

#include "shield/pipeline.hpp"

#include "shield/profile.hpp"
#include "shield/scenario.hpp"
#include "shield/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

namespace fs = std::filesystem;

namespace shield::pipeline {

namespace {

// --- configuration -------------------------------------------------------

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key) || obj[key].is_null()) return;
    try {
        out = obj[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

std::vector<std::string> read_paths(const nlohmann::json& obj, const char* key, const std::string& base) {
    std::vector<std::string> out;
    if (!obj.contains(key) || obj[key].is_null()) return out;
    const auto& v = obj[key];
    if (v.is_string()) {
        out.push_back(resolve(base, v.get<std::string>()));
    } else if (v.is_array()) {
        for (const auto& x : v) {
            if (!x.is_string()) throw ConfigError(std::string("paths.") + key + " must list strings");
            out.push_back(resolve(base, x.get<std::string>()));
        }
    } else {
        throw ConfigError(std::string("paths.") + key + " must be a string or a list");
    }
    return out;
}

Timestamp minutes_to_micros(double minutes, const char* what) {
    if (!std::isfinite(minutes) || minutes <= 0) throw ConfigError(std::string(what) + " must be positive");
    return static_cast<Timestamp>(std::llround(minutes * 60.0 * 1e6));
}

nlohmann::ordered_json mae_json(const mae::MaeHyper& h) {
    return {{"dim", h.shape.dim},
            {"encoder_layers", h.shape.encoder_layers},
            {"heads", h.shape.heads},
            {"ffn_dim", h.shape.ffn_dim},
            {"max_seq_len", h.shape.max_seq_len},
            {"encode_mask", {h.encode_mask.lo, h.encode_mask.hi}},
            {"decode_mask", {h.decode_mask.lo, h.decode_mask.hi}},
            {"learning_rate", h.learning_rate},
            {"batch_size", h.batch_size},
            {"epochs", h.epochs},
            {"holdout_fraction", h.holdout_fraction},
            {"grad_clip", h.grad_clip},
            {"max_vocab", h.max_vocab}};
}

// --- artifacts -----------------------------------------------------------

struct ArtifactMeta {
    std::string stage;
    int version = 1;
    std::string config_digest;
    std::string input_digest;

    nlohmann::ordered_json to_json() const {
        return {{"stage", stage},
                {"stage_version", version},
                {"config_digest", config_digest},
                {"input_digest", input_digest}};
    }
};

void write_json(const std::string& path, const nlohmann::ordered_json& body, const ArtifactMeta* meta) {
    nlohmann::ordered_json j;
    if (meta) j["meta"] = meta->to_json();
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    text::write_file(path, j.dump(2) + "\n");
}

void write_json(const std::string& path, const nlohmann::json& body, const ArtifactMeta* meta) {
    write_json(path, nlohmann::ordered_json::parse(body.dump()), meta);
}

nlohmann::json read_json(const std::string& path) {
    auto j = nlohmann::json::parse(text::read_file(path), nullptr, false);
    if (j.is_discarded()) throw SchemaError(path + " is not valid JSON");
    return j;
}

std::string file_digest(const std::string& path) { return text::sha256_hex(text::read_file(path)); }

ArtifactMeta describe(const std::string& stage, int version, const nlohmann::ordered_json& config,
                      const std::vector<std::string>& inputs) {
    ArtifactMeta m;
    m.stage = stage;
    m.version = version;
    m.config_digest = text::sha256_hex(config.dump());
    std::string acc = stage + "\n" + std::to_string(version) + "\n" + m.config_digest + "\n";
    for (const auto& in : inputs) acc += file_digest(in) + "\n";
    m.input_digest = text::sha256_hex(acc);
    return m;
}

// Digest of a mock provider's scripted answers, so edits invalidate caches.
std::string mock_digest(const std::string& dir) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 4 && name.ends_with(".txt") && !name.ends_with(".prompt.txt")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += f.filename().string() + " " + file_digest(f.string()) + "\n";
    return text::sha256_hex(acc);
}

nlohmann::ordered_json provider_identity(const ProviderConfig& p, const llm::LlmProvider* injected) {
    nlohmann::ordered_json j;
    if (injected) {
        j["model_id"] = injected->model_id();
        j["token_budget"] = injected->token_budget();
    }
    if (p.spec.rfind("mock:", 0) == 0) {
        j["kind"] = "mock";
        j["responses"] = mock_digest(p.spec.substr(5));
    } else {
        j["kind"] = "http";
        j["endpoint"] = p.spec;
        j["model"] = p.http.model;
    }
    j["configured_budget"] = p.http.token_budget;
    return j;
}

}  // namespace

// --- PipelineConfig ------------------------------------------------------

void PipelineConfig::validate() const {
    if (test_logs.empty()) throw ConfigError("paths.test lists no testing log");
    if (train_logs.empty() && (model_path.empty() || profile_path.empty() || detector_path.empty())) {
        throw ConfigError("paths.train is required unless a model, detector and profile are all supplied");
    }
    ingest::parse_format(format);
    auto fraction = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1]");
    };
    fraction(hyper.k_pct, "hyper.k_pct");
    fraction(hyper.r, "hyper.r");
    if (!(reject_ratio >= 0.0 && reject_ratio <= 1.0)) throw ConfigError("paths.reject_ratio must lie in [0, 1]");
    if (hyper.c < 1 || hyper.t_nbr < 1 || hyper.m < 1) throw ConfigError("hyper.c, hyper.t_nbr and hyper.m must be at least 1");
    detect::WindowParams{hyper.w_l, hyper.stride, hyper.k_pct}.validate();
    mae.validate();
    if (!(ocsvm.nu > 0.0 && ocsvm.nu <= 1.0)) throw ConfigError("ocsvm.nu must lie in (0, 1]");
    if (out_dir.empty()) throw ConfigError("paths.out_dir is empty");
    if (provider.spec.rfind("mock:", 0) != 0 && provider.http.model.empty()) {
        throw ConfigError("provider.model is required for an http provider");
    }
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
    PipelineConfig c;
    check_keys(j, {"paths", "hyper", "mae", "ocsvm", "provider", "similarity", "environment", "environment_file"},
               "config");

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        check_keys(p,
                   {"train", "test", "format", "reject_ratio", "event_types", "model", "detector", "profile",
                    "ground_truth", "out_dir"},
                   "paths");
        c.train_logs = read_paths(p, "train", base_dir);
        c.test_logs = read_paths(p, "test", base_dir);
        read(p, "format", c.format, "paths");
        read(p, "reject_ratio", c.reject_ratio, "paths");
        if (p.contains("event_types") && !p["event_types"].is_null()) {
            std::set<std::string> types;
            read(p, "event_types", types, "paths");
            c.event_types = std::move(types);
        }
        read(p, "model", c.model_path, "paths");
        read(p, "detector", c.detector_path, "paths");
        read(p, "profile", c.profile_path, "paths");
        read(p, "ground_truth", c.ground_truth, "paths");
        read(p, "out_dir", c.out_dir, "paths");
        c.model_path = resolve(base_dir, c.model_path);
        c.detector_path = resolve(base_dir, c.detector_path);
        c.profile_path = resolve(base_dir, c.profile_path);
        c.ground_truth = resolve(base_dir, c.ground_truth);
        c.out_dir = resolve(base_dir, c.out_dir);
    }

    if (j.contains("hyper")) {
        const auto& h = j["hyper"];
        check_keys(h, {"w_l_minutes", "stride_minutes", "k_pct", "c", "t_nbr", "r", "m", "seed"}, "hyper");
        double w = 30.0;
        read(h, "w_l_minutes", w, "hyper");
        double stride = w;
        read(h, "stride_minutes", stride, "hyper");
        c.hyper.w_l = minutes_to_micros(w, "hyper.w_l_minutes");
        c.hyper.stride = minutes_to_micros(stride, "hyper.stride_minutes");
        read(h, "k_pct", c.hyper.k_pct, "hyper");
        read(h, "c", c.hyper.c, "hyper");
        read(h, "t_nbr", c.hyper.t_nbr, "hyper");
        read(h, "r", c.hyper.r, "hyper");
        read(h, "m", c.hyper.m, "hyper");
        read(h, "seed", c.hyper.seed, "hyper");
    }
    c.ocsvm.seed = c.hyper.seed;

    if (j.contains("mae")) {
        const auto& m = j["mae"];
        check_keys(m,
                   {"dim", "encoder_layers", "heads", "ffn_dim", "max_seq_len", "encode_mask", "decode_mask",
                    "learning_rate", "batch_size", "epochs", "holdout_fraction", "grad_clip", "max_vocab"},
                   "mae");
        read(m, "dim", c.mae.shape.dim, "mae");
        read(m, "encoder_layers", c.mae.shape.encoder_layers, "mae");
        read(m, "heads", c.mae.shape.heads, "mae");
        read(m, "ffn_dim", c.mae.shape.ffn_dim, "mae");
        read(m, "max_seq_len", c.mae.shape.max_seq_len, "mae");
        for (auto [key, range] : {std::pair{"encode_mask", &c.mae.encode_mask}, std::pair{"decode_mask", &c.mae.decode_mask}}) {
            std::vector<double> v;
            read(m, key, v, "mae");
            if (v.empty()) continue;
            if (v.size() != 2) throw ConfigError(std::string("mae.") + key + " must be [lo, hi]");
            *range = {v[0], v[1]};
        }
        read(m, "learning_rate", c.mae.learning_rate, "mae");
        read(m, "batch_size", c.mae.batch_size, "mae");
        read(m, "epochs", c.mae.epochs, "mae");
        read(m, "holdout_fraction", c.mae.holdout_fraction, "mae");
        read(m, "grad_clip", c.mae.grad_clip, "mae");
        read(m, "max_vocab", c.mae.max_vocab, "mae");
    }

    if (j.contains("ocsvm")) {
        const auto& o = j["ocsvm"];
        check_keys(o, {"nu", "gamma", "max_fit_points", "tolerance"}, "ocsvm");
        read(o, "nu", c.ocsvm.nu, "ocsvm");
        read(o, "gamma", c.ocsvm.gamma, "ocsvm");
        read(o, "max_fit_points", c.ocsvm.max_fit_points, "ocsvm");
        read(o, "tolerance", c.ocsvm.tolerance, "ocsvm");
    }

    if (j.contains("provider")) {
        const auto& p = j["provider"];
        check_keys(p, {"spec", "model", "api_key_env", "timeout_seconds", "max_in_flight", "token_budget"}, "provider");
        read(p, "spec", c.provider.spec, "provider");
        read(p, "model", c.provider.http.model, "provider");
        read(p, "api_key_env", c.provider.http.api_key_env, "provider");
        read(p, "timeout_seconds", c.provider.http.timeout_seconds, "provider");
        read(p, "max_in_flight", c.provider.http.max_in_flight, "provider");
        read(p, "token_budget", c.provider.http.token_budget, "provider");
    }
    if (c.provider.spec.rfind("mock:", 0) == 0) c.provider.spec = "mock:" + resolve(base_dir, c.provider.spec.substr(5));

    if (j.contains("similarity")) {
        const auto& s = j["similarity"];
        check_keys(s, {"endpoint", "model"}, "similarity");
        read(s, "endpoint", c.provider.embedding_endpoint, "similarity");
        read(s, "model", c.provider.embedding_model, "similarity");
    }

    read(j, "environment", c.environment, "config");
    if (j.contains("environment_file")) {
        std::string f;
        read(j, "environment_file", f, "config");
        try {
            c.environment = std::string(text::trim(text::read_file(resolve(base_dir, f))));
        } catch (const IoError& e) {
            throw ConfigError(std::string("environment_file: ") + e.what());
        }
    }
    return c;
}

nlohmann::ordered_json PipelineConfig::to_json() const {
    nlohmann::ordered_json j;
    auto& p = j["paths"];
    p["train"] = train_logs;
    p["test"] = test_logs;
    p["format"] = format;
    p["reject_ratio"] = reject_ratio;
    p["event_types"] = event_types ? nlohmann::ordered_json(*event_types) : nlohmann::ordered_json(nullptr);
    p["model"] = model_path;
    p["detector"] = detector_path;
    p["profile"] = profile_path;
    p["ground_truth"] = ground_truth;
    p["out_dir"] = out_dir;
    j["hyper"] = {{"w_l_minutes", static_cast<double>(hyper.w_l) / kMicrosPerMinute},
                  {"stride_minutes", static_cast<double>(hyper.stride) / kMicrosPerMinute},
                  {"k_pct", hyper.k_pct},
                  {"c", hyper.c},
                  {"t_nbr", hyper.t_nbr},
                  {"r", hyper.r},
                  {"m", hyper.m},
                  {"seed", hyper.seed}};
    j["mae"] = mae_json(mae);
    j["ocsvm"] = {{"nu", ocsvm.nu},
                  {"gamma", ocsvm.gamma},
                  {"max_fit_points", ocsvm.max_fit_points},
                  {"tolerance", ocsvm.tolerance}};
    j["provider"] = {{"spec", provider.spec},
                     {"model", provider.http.model},
                     {"api_key_env", provider.http.api_key_env},
                     {"timeout_seconds", provider.http.timeout_seconds},
                     {"max_in_flight", provider.http.max_in_flight},
                     {"token_budget", provider.http.token_budget}};
    j["similarity"] = {{"endpoint", provider.embedding_endpoint}, {"model", provider.embedding_model}};
    j["environment"] = environment;
    return j;
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("override '" + key + "' descends into a non-object");
            *node = nlohmann::json::object();
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::string body;
    try {
        body = text::read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
    for (const auto& o : overrides) apply_override(j, o);
    const auto base = fs::absolute(fs::path(path)).parent_path().string();
    auto c = PipelineConfig::from_json(j, base);
    c.validate();
    return c;
}

// --- errors --------------------------------------------------------------

StageError::StageError(std::string stage, std::string artifact, const std::string& cause, Kind kind)
    : Error("stage " + stage + " (" + artifact + "): " + cause),
      stage_(std::move(stage)),
      artifact_(std::move(artifact)),
      kind_(kind) {}

int StageError::exit_code() const {
    switch (kind_) {
        case Kind::config: return 2;
        case Kind::provider: return 4;
        case Kind::stage: break;
    }
    return 3;
}

StageError::Kind classify(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const BudgetUnsatisfiable*>(&e)) {
        return StageError::Kind::config;
    }
    if (dynamic_cast<const ProviderError*>(&e) || dynamic_cast<const EmptyResponse*>(&e)) {
        return StageError::Kind::provider;
    }
    return StageError::Kind::stage;
}

const char* to_string(StageStatus s) {
    switch (s) {
        case StageStatus::ran: return "ran";
        case StageStatus::cached: return "cached";
        case StageStatus::supplied: return "supplied";
        case StageStatus::skipped: return "skipped";
    }
    return "?";
}

// --- stages --------------------------------------------------------------

namespace {

ingest::ParseReport ingest_impl(const std::vector<std::string>& inputs, const std::string& format, LogLabel label,
                                double reject_ratio, const std::optional<std::set<std::string>>& types,
                                const std::string& out_path) {
    ingest::ParseOptions opt;
    opt.reject_ratio = reject_ratio;
    opt.label = label;
    opt.source_tag = label == LogLabel::training ? "train" : "test";
    auto rep = ingest::parse_sources(inputs, ingest::parse_format(format), opt);
    if (rep.rejected > 0) {
        spdlog::warn("ingest: rejected {} of {} records", rep.rejected, rep.records);
        for (const auto& s : rep.reject_samples) spdlog::warn("  {}", s);
    }
    rep.log = ingest::filter_fields(rep.log, types);
    text::write_file(out_path, ingest::serialize_jsonl(rep.log));
    return rep;
}

mae::TrainReport train_impl(const std::string& train_log, const mae::MaeHyper& hyper, std::uint64_t seed,
                            const std::string& model_out, const ArtifactMeta* meta, const std::string& history_out) {
    const auto log = ingest::load_canonical(train_log, LogLabel::training);
    auto result = mae::train(log, hyper, seed, [](const mae::EpochStats& s) {
        spdlog::info("train-mae: epoch {} train {:.4f} held-out {:.4f}", s.epoch, s.train_loss, s.heldout_loss);
    });
    result.model.save(model_out);
    if (!history_out.empty()) {
        nlohmann::ordered_json j;
        j["train_events"] = result.report.train_events;
        j["heldout_events"] = result.report.heldout_events;
        j["vocab"] = result.model.hyper().shape.vocab;
        j["model_sha256"] = file_digest(model_out);
        auto& h = j["history"] = nlohmann::ordered_json::array();
        for (const auto& s : result.report.history) {
            h.push_back({{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"heldout_loss", s.heldout_loss}});
        }
        write_json(history_out, j, meta);
    }
    return result.report;
}

detect::WindowSelection detect_impl(const std::string& model_path, const std::string& train_log,
                                    const std::string& test_log, const Hyper& hyper,
                                    const detect::OcsvmParams& ocsvm, const DetectOutputs& out,
                                    const ArtifactMeta* meta) {
    const auto model = mae::MaeModel::load(model_path);
    const detect::WindowParams wp{hyper.w_l, hyper.stride, hyper.k_pct};
    detect::DetectorState state;
    if (!train_log.empty()) {
        const auto train = ingest::load_canonical(train_log, LogLabel::training);
        const auto emb = mae::embed_log(model, train, hyper.m, hyper.seed);
        state = detect::fit_boundary(emb, ocsvm);
        state.t_ano = detect::derive_t_ano(detect::window_scores(detect::score_embeddings(state, emb), train, wp));
        state.has_t_ano = true;
        spdlog::info("detect: boundary over {} points, t_ano {:.6f}", state.boundary.fit_size(), state.t_ano);
        write_json(out.detector, state.to_json(), meta);
    } else {
        state = detect::DetectorState::from_json(read_json(out.detector));
        if (!state.has_t_ano) throw ConfigError(out.detector + " carries no t_ano");
    }

    const auto test = ingest::load_canonical(test_log, LogLabel::testing);
    const auto scored = detect::score_events(state, model, test, hyper.m, hyper.seed);
    std::vector<double> scores(test.size(), 0.0);
    for (const auto& s : scored) scores[s.event_index] = s.score;
    write_json(out.scores, nlohmann::ordered_json{{"score_sign", detect::kScoreSign}, {"scores", scores}}, meta);

    auto sel = detect::select_windows(detect::window_scores(scored, test, wp), state.t_ano, hyper.c, test);
    spdlog::info("detect: {} windows, {} selected, {} truncated events", sel.windows.size(), sel.selected.size(),
                 sel.truncated_events.size());
    write_json(out.selection, detect::selection_to_json(sel, test), meta);
    return sel;
}

EvidenceResult evidence_impl(const std::string& selection_path, llm::LlmProvider& provider,
                             const std::string& environment, std::size_t t_nbr, const std::string& evidence_out,
                             const std::string& neighborhood_out, const ArtifactMeta* meta) {
    const auto loaded = detect::selection_from_json(read_json(selection_path));
    EvidenceResult r;
    if (!loaded.truncated.empty()) {
        const auto summaries = evidence::summarize(loaded.truncated);
        r.evidence = evidence::identify_evidence(summaries, environment, provider);
        spdlog::info("evidence: {} command lines flagged", r.evidence.command_lines.size());
        const auto graph = evidence::build_graph(loaded.truncated);
        try {
            r.neighborhood = evidence::expand(graph, loaded.truncated, r.evidence, t_nbr);
        } catch (const NoSeedMatch& e) {
            spdlog::warn("evidence: {}; using the first {} truncated events", e.what(), t_nbr);
            r.neighborhood = evidence::fallback_neighborhood(loaded.truncated, t_nbr);
        }
        spdlog::info("evidence: neighborhood of {} events after {} iterations", r.neighborhood.positions.size(),
                     r.neighborhood.iterations);
    }
    write_json(evidence_out, r.evidence.to_json(), meta);
    write_json(neighborhood_out,
               evidence::neighborhood_to_json(r.neighborhood, loaded.truncated, loaded.selection.truncated_events), meta);
    return r;
}

nlohmann::ordered_json benign_json(const profile::BenignProfile& p) {
    return {{"built_from", p.built_from}, {"total_events", p.total_events}, {"store", profile::store_to_json(p.store)}};
}

profile::BenignProfile benign_from_json(const nlohmann::json& j) {
    profile::BenignProfile p;
    try {
        p.built_from = j.value("built_from", "");
        p.total_events = j.value("total_events", std::uint64_t{0});
        p.store = profile::store_from_json(j.at("store"));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed benign profile: ") + e.what());
    }
    return p;
}

void profile_impl(const std::string& train_log, const std::string& supplied, double r, std::uint64_t seed,
                  const std::string& benign_out, const std::string& sampled_out, const ArtifactMeta* meta) {
    profile::BenignProfile benign;
    if (!supplied.empty()) {
        benign = benign_from_json(read_json(supplied));
    } else {
        auto log = ingest::load_canonical(train_log, LogLabel::training);
        log.source_tag = "train";
        benign = profile::build_profile(log);
    }
    const auto sampled = profile::sample_profile(benign, r, seed);
    write_json(benign_out, benign_json(benign), meta);
    write_json(sampled_out,
               nlohmann::ordered_json{{"ratio", sampled.ratio}, {"seed", sampled.seed}, {"store", profile::store_to_json(sampled.store)}},
               meta);
}

PipelineResult investigate_impl(const std::string& selection_path, const std::string& evidence_path,
                                const std::string& neighborhood_path, const std::string& profile_path,
                                const std::string& test_log, llm::LlmProvider& provider,
                                const std::string& environment, const InvestigateOutputs& out,
                                const ArtifactMeta* meta) {
    PipelineResult r;
    const auto sel = detect::selection_from_json(read_json(selection_path));
    if (sel.truncated.empty()) {
        spdlog::info("investigate: no window exceeded t_ano; reporting no attack");
        r.report = investigate::no_attack_report();
        text::write_file(out.prompt, "");
    } else {
        const auto ev = evidence::AttackEvidence::from_json(read_json(evidence_path));
        const auto nbr = evidence::neighborhood_from_json(read_json(neighborhood_path));
        const auto pj = read_json(profile_path);
        if (!pj.contains("store")) throw SchemaError(profile_path + " has no store");
        const auto sampled = profile::store_from_json(pj["store"]);

        investigate::PromptInputs in;
        in.events = nbr.events;
        in.profile_block = profile::match_profile(sampled, nbr.events);
        in.evidence = ev.command_lines;
        in.environment = environment;
        const auto prompt = investigate::build_prompt(in, provider.token_budget());
        if (prompt.rows_kept < prompt.rows_total) {
            spdlog::warn("investigate: prompt budget kept {} of {} log rows", prompt.rows_kept, prompt.rows_total);
        }
        text::write_file(out.prompt, prompt.text);
        try {
            r.report = investigate::run_investigation(prompt.text, provider);
        } catch (const ParseError& e) {
            if (!out.raw_response.empty()) text::write_file(out.raw_response, e.raw());
            throw;
        }
        for (const auto& t : r.report.unknown_tactics) spdlog::warn("investigate: unknown tactic '{}'", t);
        const auto test = ingest::load_canonical(test_log, LogLabel::testing);
        r.labels = investigate::locate(r.report.iocs, test, sel.selection.truncated_events);
        spdlog::info("investigate: {} attack entities, {} attack events", r.labels.attack_entities.size(),
                     r.labels.attack_event_indices.size());
    }
    write_json(out.report, r.report.to_json(), meta);
    text::write_file(out.report_md, r.report.to_markdown());
    write_json(out.labels, r.labels.to_json(), meta);
    return r;
}

eval::MetricsReport evaluate_impl(const std::string& labels_path, const std::string& report_path,
                                  const std::string& truth_path, const std::string& test_log,
                                  const ProviderConfig& similarity, const std::string& metrics_out,
                                  const ArtifactMeta* meta) {
    const auto truth = eval::GroundTruth::from_json(read_json(truth_path));
    const auto labels = investigate::DetectionLabels::from_json(read_json(labels_path));
    const auto report = investigate::InvestigationReport::from_json(read_json(report_path));
    const auto test = ingest::load_canonical(test_log, LogLabel::testing);
    auto sim = make_similarity(similarity);
    auto m = eval::evaluate(labels, report.attack_detected ? &report : nullptr, truth, test, *sim);
    write_json(metrics_out, m.to_json(), meta);
    spdlog::info("evaluate: entity precision {:.4f} mcc {:.4f}; event precision {:.4f} mcc {:.4f}",
                 m.entity_scores.precision, m.entity_scores.mcc, m.event_scores.precision, m.event_scores.mcc);
    return m;
}

}  // namespace

ingest::ParseReport ingest_logs(const std::vector<std::string>& inputs, const std::string& format, LogLabel label,
                                double reject_ratio, const std::optional<std::set<std::string>>& event_types,
                                const std::string& out_path) {
    return ingest_impl(inputs, format, label, reject_ratio, event_types, out_path);
}

mae::TrainReport train_model(const std::string& train_log, const mae::MaeHyper& hyper, std::uint64_t seed,
                             const std::string& model_out) {
    const auto meta = describe("train-mae", 1, nlohmann::ordered_json{{"mae", mae_json(hyper)}, {"seed", seed}}, {train_log});
    return train_impl(train_log, hyper, seed, model_out, &meta, model_out + ".json");
}

detect::WindowSelection detect_attacks(const std::string& model_path, const std::string& train_log,
                                       const std::string& test_log, const Hyper& hyper,
                                       const detect::OcsvmParams& ocsvm, const DetectOutputs& out) {
    std::vector<std::string> inputs{model_path, test_log};
    inputs.push_back(train_log.empty() ? out.detector : train_log);
    const auto meta = describe("detect", 1, nlohmann::ordered_json{{"w_l", hyper.w_l}, {"stride", hyper.stride},
                                                                   {"k_pct", hyper.k_pct}, {"c", hyper.c},
                                                                   {"m", hyper.m}, {"seed", hyper.seed},
                                                                   {"nu", ocsvm.nu}},
                               inputs);
    return detect_impl(model_path, train_log, test_log, hyper, ocsvm, out, &meta);
}

EvidenceResult collect_evidence(const std::string& selection_path, llm::LlmProvider& provider,
                                const std::string& environment, std::size_t t_nbr, const std::string& evidence_out,
                                const std::string& neighborhood_out) {
    const auto meta = describe("evidence", 1,
                               nlohmann::ordered_json{{"model_id", provider.model_id()}, {"environment", environment},
                                                      {"t_nbr", t_nbr}},
                               {selection_path});
    return evidence_impl(selection_path, provider, environment, t_nbr, evidence_out, neighborhood_out, &meta);
}

void build_profiles(const std::string& train_log, double r, std::uint64_t seed, const std::string& benign_out,
                    const std::string& sampled_out) {
    const auto meta = describe("profile", 1, nlohmann::ordered_json{{"r", r}, {"seed", seed}}, {train_log});
    profile_impl(train_log, "", r, seed, benign_out, sampled_out, &meta);
}

PipelineResult investigate_attack(const std::string& selection_path, const std::string& evidence_path,
                                  const std::string& neighborhood_path, const std::string& profile_path,
                                  const std::string& test_log, llm::LlmProvider& provider,
                                  const std::string& environment, const InvestigateOutputs& out) {
    const auto meta = describe("investigate", 1,
                               nlohmann::ordered_json{{"model_id", provider.model_id()},
                                                      {"token_budget", provider.token_budget()},
                                                      {"environment", environment}},
                               {selection_path, evidence_path, neighborhood_path, profile_path, test_log});
    return investigate_impl(selection_path, evidence_path, neighborhood_path, profile_path, test_log, provider,
                            environment, out, &meta);
}

eval::MetricsReport evaluate_run(const std::string& labels_path, const std::string& report_path,
                                 const std::string& truth_path, const std::string& test_log,
                                 const ProviderConfig& similarity, const std::string& metrics_out) {
    const auto meta = describe("evaluate", 1,
                               nlohmann::ordered_json{{"endpoint", similarity.embedding_endpoint},
                                                      {"model", similarity.embedding_model}},
                               {labels_path, report_path, truth_path, test_log});
    return evaluate_impl(labels_path, report_path, truth_path, test_log, similarity, metrics_out, &meta);
}

std::unique_ptr<eval::SimilarityProvider> make_similarity(const ProviderConfig& config) {
    if (config.embedding_endpoint.empty()) return std::make_unique<eval::TrigramEmbedder>();
    if (config.embedding_model.empty()) throw ConfigError("similarity.model is required with an endpoint");
    return std::make_unique<eval::HttpEmbedder>(config.embedding_endpoint, config.embedding_model,
                                                config.http.api_key_env, config.http.timeout_seconds);
}

// --- orchestration -------------------------------------------------------

namespace {

class Runner {
public:
    explicit Runner(std::string out_dir) : out_(std::move(out_dir)) {}

    std::string path(const std::string& rel) const { return (fs::path(out_) / rel).string(); }

    // Runs body unless the stage manifest records the same input digest and
    // every output still hashes to its recorded value.
    void stage(const std::string& name, const nlohmann::ordered_json& config, const std::vector<std::string>& inputs,
               const std::vector<std::string>& outputs, const std::function<void(const ArtifactMeta&)>& body) {
        const std::string primary = outputs.empty() ? path(name) : outputs.front();
        try {
            const auto meta = describe(name, kVersion, config, inputs);
            if (cached(name, meta, outputs)) {
                spdlog::info("{}: cached", name);
                records_.push_back({name, StageStatus::cached, meta.input_digest});
                return;
            }
            spdlog::info("{}: running", name);
            body(meta);
            nlohmann::ordered_json m = meta.to_json();
            auto& outs = m["outputs"] = nlohmann::ordered_json::object();
            for (const auto& o : outputs) outs[fs::path(o).lexically_relative(out_).generic_string()] = file_digest(o);
            text::write_file(manifest(name), m.dump(2) + "\n");
            records_.push_back({name, StageStatus::ran, meta.input_digest});
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, primary, e.what(), classify(e));
        }
    }

    void note(const std::string& name, StageStatus status) { records_.push_back({name, status, ""}); }

    std::vector<StageRecord> take_records() { return std::move(records_); }

private:
    static constexpr int kVersion = 1;

    std::string manifest(const std::string& name) const { return path(name + "/manifest.json"); }

    bool cached(const std::string& name, const ArtifactMeta& meta, const std::vector<std::string>& outputs) const {
        std::error_code ec;
        if (!fs::exists(manifest(name), ec)) return false;
        auto m = nlohmann::json::parse(text::read_file(manifest(name)), nullptr, false);
        if (m.is_discarded() || m.value("input_digest", "") != meta.input_digest ||
            m.value("stage_version", 0) != meta.version || !m.contains("outputs")) {
            return false;
        }
        for (const auto& o : outputs) {
            const auto rel = fs::path(o).lexically_relative(out_).generic_string();
            if (!fs::exists(o, ec) || !m["outputs"].contains(rel) || m["outputs"][rel] != file_digest(o)) return false;
        }
        return true;
    }

    std::string out_;
    std::vector<StageRecord> records_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, llm::LlmProvider* injected) {
    cfg.validate();
    Runner run(cfg.out_dir);
    text::write_file(run.path("config.json"), cfg.to_json().dump(2) + "\n");

    std::unique_ptr<llm::LlmProvider> owned;
    auto provider = [&]() -> llm::LlmProvider& {
        if (injected) return *injected;
        if (!owned) owned = llm::make_provider(cfg.provider.spec, cfg.provider.http);
        return *owned;
    };
    const bool has_train = !cfg.train_logs.empty();
    const auto train_jsonl = run.path("ingest/train.jsonl");
    const auto test_jsonl = run.path("ingest/test.jsonl");

    // ingest
    {
        const nlohmann::ordered_json c{{"format", cfg.format},
                                       {"reject_ratio", cfg.reject_ratio},
                                       {"event_types", cfg.event_types ? nlohmann::ordered_json(*cfg.event_types)
                                                                       : nlohmann::ordered_json(nullptr)},
                                       {"train_files", cfg.train_logs.size()},
                                       {"test_files", cfg.test_logs.size()}};
        std::vector<std::string> inputs = cfg.train_logs;
        inputs.insert(inputs.end(), cfg.test_logs.begin(), cfg.test_logs.end());
        std::vector<std::string> outputs{test_jsonl};
        if (has_train) outputs.push_back(train_jsonl);
        run.stage("ingest", c, inputs, outputs, [&](const ArtifactMeta&) {
            if (has_train) {
                ingest_impl(cfg.train_logs, cfg.format, LogLabel::training, cfg.reject_ratio, cfg.event_types,
                            train_jsonl);
            }
            ingest_impl(cfg.test_logs, cfg.format, LogLabel::testing, cfg.reject_ratio, cfg.event_types, test_jsonl);
        });
    }

    // train-mae
    std::string model_path = cfg.model_path;
    if (!model_path.empty()) {
        run.note("train-mae", StageStatus::supplied);
    } else {
        model_path = run.path("train-mae/mae.bin");
        const auto history = run.path("train-mae/training.json");
        run.stage("train-mae", {{"mae", mae_json(cfg.mae)}, {"seed", cfg.hyper.seed}}, {train_jsonl},
                  {model_path, history}, [&](const ArtifactMeta& meta) {
                      train_impl(train_jsonl, cfg.mae, cfg.hyper.seed, model_path, &meta, history);
                  });
    }

    // detect
    const auto selection_json = run.path("detect/selection.json");
    {
        DetectOutputs out{run.path("detect/detector.json"), run.path("detect/scores.json"), selection_json};
        const bool fit = cfg.detector_path.empty();
        std::vector<std::string> inputs{model_path, test_jsonl, fit ? train_jsonl : cfg.detector_path};
        const nlohmann::ordered_json c{{"w_l", cfg.hyper.w_l}, {"stride", cfg.hyper.stride}, {"k_pct", cfg.hyper.k_pct},
                                       {"c", cfg.hyper.c},     {"m", cfg.hyper.m},           {"seed", cfg.hyper.seed},
                                       {"nu", cfg.ocsvm.nu},   {"gamma", cfg.ocsvm.gamma},
                                       {"max_fit_points", cfg.ocsvm.max_fit_points}, {"tolerance", cfg.ocsvm.tolerance}};
        std::vector<std::string> outputs{out.selection, out.scores};
        if (fit) outputs.push_back(out.detector);
        run.stage("detect", c, inputs, outputs, [&](const ArtifactMeta& meta) {
            if (!fit) {
                // Reuse the supplied state, stamped as a fresh artifact.
                write_json(out.detector, read_json(cfg.detector_path), nullptr);
            }
            detect_impl(model_path, fit ? train_jsonl : "", test_jsonl, cfg.hyper, cfg.ocsvm, out, &meta);
        });
    }

    // evidence
    const auto evidence_json = run.path("evidence/evidence.json");
    const auto neighborhood_json = run.path("evidence/neighborhood.json");
    run.stage("evidence",
              {{"provider", provider_identity(cfg.provider, injected)}, {"environment", cfg.environment},
               {"t_nbr", cfg.hyper.t_nbr}},
              {selection_json}, {evidence_json, neighborhood_json}, [&](const ArtifactMeta& meta) {
                  evidence_impl(selection_json, provider(), cfg.environment, cfg.hyper.t_nbr, evidence_json,
                                neighborhood_json, &meta);
              });

    // profile
    const auto benign_json_path = run.path("profile/benign.json");
    const auto sampled_json = run.path("profile/sampled.json");
    run.stage("profile", {{"r", cfg.hyper.r}, {"seed", cfg.hyper.seed}, {"supplied", !cfg.profile_path.empty()}},
              {cfg.profile_path.empty() ? train_jsonl : cfg.profile_path}, {benign_json_path, sampled_json},
              [&](const ArtifactMeta& meta) {
                  profile_impl(train_jsonl, cfg.profile_path, cfg.hyper.r, cfg.hyper.seed, benign_json_path,
                               sampled_json, &meta);
              });

    // investigate
    InvestigateOutputs iout{run.path("investigate/prompt.txt"), run.path("investigate/report.json"),
                            run.path("investigate/report.md"), run.path("investigate/labels.json"),
                            run.path("investigate/raw_response.txt")};
    run.stage("investigate", {{"provider", provider_identity(cfg.provider, injected)}, {"environment", cfg.environment}},
              {selection_json, evidence_json, neighborhood_json, sampled_json, test_jsonl},
              {iout.report, iout.labels, iout.prompt, iout.report_md}, [&](const ArtifactMeta& meta) {
                  investigate_impl(selection_json, evidence_json, neighborhood_json, sampled_json, test_jsonl,
                                   provider(), cfg.environment, iout, &meta);
              });

    PipelineResult result;
    result.report = investigate::InvestigationReport::from_json(read_json(iout.report));
    result.labels = investigate::DetectionLabels::from_json(read_json(iout.labels));

    // evaluate
    if (!cfg.ground_truth.empty()) {
        const auto metrics_json = run.path("evaluate/metrics.json");
        run.stage("evaluate",
                  {{"endpoint", cfg.provider.embedding_endpoint}, {"model", cfg.provider.embedding_model}},
                  {iout.labels, iout.report, cfg.ground_truth, test_jsonl}, {metrics_json},
                  [&](const ArtifactMeta& meta) {
                      evaluate_impl(iout.labels, iout.report, cfg.ground_truth, test_jsonl, cfg.provider,
                                    metrics_json, &meta);
                  });
        result.metrics = eval::MetricsReport::from_json(read_json(metrics_json));
    } else {
        run.note("evaluate", StageStatus::skipped);
    }
    result.stages = run.take_records();
    return result;
}

nlohmann::ordered_json scenario_config() {
    nlohmann::ordered_json j;
    j["paths"] = {{"train", "train.jsonl"}, {"test", "test.jsonl"}, {"ground_truth", "ground_truth.json"},
                  {"out_dir", "out"}};
    j["hyper"] = {{"w_l_minutes", 30}, {"k_pct", 0.10}, {"c", 3}, {"t_nbr", 500}, {"r", 0.5}, {"m", 5}, {"seed", 7}};
    j["mae"] = {{"dim", 32},        {"encoder_layers", 1}, {"heads", 2},           {"ffn_dim", 64},
                {"max_seq_len", 48}, {"epochs", 3},        {"batch_size", 32},     {"learning_rate", 0.003}};
    // The benign embeddings form a few tight clusters; the variance-scaled
    // default kernel is too wide to separate points lying between them.
    j["ocsvm"] = {{"nu", 0.05}, {"gamma", 1.0}};
    j["provider"] = {{"spec", "mock:mock"}, {"token_budget", 60000}};
    j["environment_file"] = "environment.txt";
    return j;
}

void write_scenario_bundle(const std::string& dir, std::uint64_t seed) {
    scenario::AttackOptions opt;
    opt.seed = seed;
    scenario::write_scenario(scenario::gtcache_scenario(opt), dir);
    auto cfg = scenario_config();
    cfg["hyper"]["seed"] = seed;
    text::write_file((fs::path(dir) / "pipeline.json").string(), cfg.dump(2) + "\n");
}

}  // namespace shield::pipeline
