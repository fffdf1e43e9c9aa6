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

#include "shield/detect.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace shield::detect {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kMaxSmoIterations = 10'000'000;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

bool by_time(const EventLog& log, std::size_t a, std::size_t b) {
    const auto ta = log[a].timestamp, tb = log[b].timestamp;
    return ta != tb ? ta < tb : a < b;
}

}  // namespace

OneClassSvm OneClassSvm::fit(const std::vector<std::vector<double>>& points, const OcsvmParams& params) {
    if (points.size() < 2) throw InsufficientData("one-class SVM needs at least two training points");
    if (!(params.nu > 0.0 && params.nu <= 1.0)) throw ConfigError("nu must be in (0, 1]");
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw InsufficientData("training points have inconsistent dimensions");
    }

    std::vector<const std::vector<double>*> x;
    if (points.size() > params.max_fit_points && params.max_fit_points >= 2) {
        Rng rng(mix_seed(params.seed, 0x6f637376ULL));
        auto pick = rng.sample_without_replacement(points.size(), params.max_fit_points);
        std::sort(pick.begin(), pick.end());
        for (auto i : pick) x.push_back(&points[i]);
    } else {
        for (const auto& p : points) x.push_back(&p);
    }
    const std::size_t l = x.size();

    OneClassSvm m;
    m.nu_ = params.nu;
    m.fit_size_ = l;
    if (params.gamma > 0.0) {
        m.gamma_ = params.gamma;
    } else {
        double sum = 0.0, sum2 = 0.0;
        for (const auto* p : x) {
            for (double v : *p) {
                sum += v;
                sum2 += v * v;
            }
        }
        const double n = static_cast<double>(l * dim);
        const double var = std::max(0.0, sum2 / n - (sum / n) * (sum / n));
        m.gamma_ = var > 0.0 ? 1.0 / (static_cast<double>(dim) * var) : 1.0 / static_cast<double>(std::max<std::size_t>(dim, 1));
    }

    // Kernel matrix; l is capped so this stays small.
    std::vector<double> q(l * l);
    for (std::size_t i = 0; i < l; ++i) {
        q[i * l + i] = 1.0;
        for (std::size_t j = i + 1; j < l; ++j) {
            const double k = std::exp(-m.gamma_ * sq_dist(*x[i], *x[j]));
            q[i * l + j] = k;
            q[j * l + i] = k;
        }
    }

    std::vector<double> alpha(l, 0.0);
    const double total = params.nu * static_cast<double>(l);
    const auto n_full = static_cast<std::size_t>(total);
    for (std::size_t i = 0; i < n_full && i < l; ++i) alpha[i] = 1.0;
    if (n_full < l) alpha[n_full] = total - static_cast<double>(n_full);

    std::vector<double> grad(l, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
        if (alpha[i] == 0.0) continue;
        for (std::size_t t = 0; t < l; ++t) grad[t] += alpha[i] * q[t * l + i];
    }

    std::size_t iter = 0;
    for (; iter < kMaxSmoIterations; ++iter) {
        // i: steepest feasible ascent among alpha < 1.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = l;
        for (std::size_t t = 0; t < l; ++t) {
            if (alpha[t] < 1.0 && -grad[t] >= gmax) {
                gmax = -grad[t];
                i = t;
            }
        }
        // j: second-order choice among alpha > 0.
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::size_t j = l;
        for (std::size_t t = 0; t < l; ++t) {
            if (alpha[t] <= 0.0) continue;
            gmax2 = std::max(gmax2, grad[t]);
            if (i == l) continue;
            const double b = gmax + grad[t];
            if (b > 0.0) {
                double a = q[i * l + i] + q[t * l + t] - 2.0 * q[i * l + t];
                if (a <= 0.0) a = kTau;
                const double obj = -(b * b) / a;
                if (obj <= best) {
                    best = obj;
                    j = t;
                }
            }
        }
        if (i == l || j == l || gmax + gmax2 < params.tolerance) break;

        double quad = q[i * l + i] + q[j * l + j] - 2.0 * q[i * l + j];
        if (quad <= 0.0) quad = kTau;
        const double delta = (grad[i] - grad[j]) / quad;
        const double sum = alpha[i] + alpha[j];
        const double old_i = alpha[i], old_j = alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if (sum > 1.0) {
            if (alpha[i] > 1.0) {
                alpha[i] = 1.0;
                alpha[j] = sum - 1.0;
            }
            if (alpha[j] > 1.0) {
                alpha[j] = 1.0;
                alpha[i] = sum - 1.0;
            }
        } else {
            if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < l; ++t) grad[t] += q[t * l + i] * di + q[t * l + j] * dj;
    }
    if (iter == kMaxSmoIterations) spdlog::warn("one-class SVM reached the iteration cap before converging");

    // rho from free multipliers, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < l; ++t) {
        if (alpha[t] >= 1.0) {
            lb = std::max(lb, grad[t]);
        } else if (alpha[t] <= 0.0) {
            ub = std::min(ub, grad[t]);
        } else {
            sum_free += grad[t];
            ++n_free;
        }
    }
    m.rho_ = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    for (std::size_t t = 0; t < l; ++t) {
        if (alpha[t] > 0.0) {
            m.sv_.push_back(*x[t]);
            m.coef_.push_back(alpha[t]);
        }
    }
    return m;
}

double OneClassSvm::kernel_sum(const std::vector<double>& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < sv_.size(); ++i) s += coef_[i] * std::exp(-gamma_ * sq_dist(sv_[i], x));
    return s;
}

double OneClassSvm::decision(const std::vector<double>& x) const { return kernel_sum(x) - rho_; }

double OneClassSvm::score(const std::vector<double>& x) const {
    return -decision(x) / (nu_ * static_cast<double>(std::max<std::size_t>(fit_size_, 1)));
}

nlohmann::json OneClassSvm::to_json() const {
    return {{"gamma", gamma_}, {"rho", rho_},  {"nu", nu_},
            {"fit_size", fit_size_}, {"coefficients", coef_}, {"support_vectors", sv_}};
}

OneClassSvm OneClassSvm::from_json(const nlohmann::json& j) {
    OneClassSvm m;
    try {
        m.gamma_ = j.at("gamma").get<double>();
        m.rho_ = j.at("rho").get<double>();
        m.nu_ = j.at("nu").get<double>();
        m.fit_size_ = j.at("fit_size").get<std::size_t>();
        m.coef_ = j.at("coefficients").get<std::vector<double>>();
        m.sv_ = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("bad detector boundary: ") + e.what());
    }
    if (m.coef_.size() != m.sv_.size()) throw ModelFormatError("detector boundary has mismatched support vectors");
    return m;
}

nlohmann::json DetectorState::to_json() const {
    nlohmann::json j{{"boundary", boundary.to_json()}, {"score_sign", score_sign}};
    j["t_ano"] = has_t_ano ? nlohmann::json(t_ano) : nlohmann::json(nullptr);
    return j;
}

DetectorState DetectorState::from_json(const nlohmann::json& j) {
    DetectorState s;
    s.boundary = OneClassSvm::from_json(j.at("boundary"));
    s.score_sign = j.value("score_sign", std::string(kScoreSign));
    if (s.score_sign != kScoreSign) throw ModelFormatError("unsupported score orientation " + s.score_sign);
    if (j.contains("t_ano") && !j["t_ano"].is_null()) {
        s.t_ano = j["t_ano"].get<double>();
        s.has_t_ano = true;
    }
    return s;
}

DetectorState fit_boundary(const std::vector<mae::EventEmbedding>& train_embeddings, const OcsvmParams& params) {
    std::vector<std::vector<double>> pts;
    pts.reserve(train_embeddings.size());
    for (const auto& e : train_embeddings) pts.push_back(e.vector);
    DetectorState s;
    s.boundary = OneClassSvm::fit(pts, params);
    return s;
}

std::vector<ScoredEvent> score_embeddings(const DetectorState& state, const std::vector<mae::EventEmbedding>& emb) {
    std::vector<ScoredEvent> out;
    out.reserve(emb.size());
    // Identical vectors are common (repeated sentences); score each once.
    std::map<std::vector<double>, double> memo;
    for (const auto& e : emb) {
        auto it = memo.find(e.vector);
        if (it == memo.end()) it = memo.emplace(e.vector, state.boundary.score(e.vector)).first;
        out.push_back({e.event_index, it->second});
    }
    return out;
}

std::vector<ScoredEvent> score_events(const DetectorState& state, const mae::MaeModel& model, const EventLog& log,
                                      std::size_t m, std::uint64_t seed) {
    return score_embeddings(state, mae::embed_log(model, log, m, seed));
}

void WindowParams::validate() const {
    if (w_l <= 0) throw ConfigError("window length must be positive");
    if (stride <= 0) throw ConfigError("window stride must be positive");
    if (!(k_pct > 0.0 && k_pct <= 1.0)) throw ConfigError("top-k fraction must be in (0, 1]");
}

std::size_t top_count(std::size_t n, double k_pct) {
    if (n == 0) return 0;
    const auto k = static_cast<std::size_t>(std::ceil(k_pct * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<TimeWindow> window_scores(const std::vector<ScoredEvent>& scored, const EventLog& log,
                                      const WindowParams& params) {
    params.validate();
    std::vector<TimeWindow> out;
    if (scored.empty()) return out;

    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return by_time(log, scored[a].event_index, scored[b].event_index);
    });
    auto ts_of = [&](std::size_t k) { return log[scored[order[k]].event_index].timestamp; };
    const Timestamp first = ts_of(0);
    const Timestamp last = ts_of(order.size() - 1);

    std::size_t lo = 0;
    for (Timestamp start = first; start <= last; start += params.stride) {
        const Timestamp end = start + params.w_l;
        while (lo < order.size() && ts_of(lo) < start) ++lo;
        std::size_t hi = lo;
        while (hi < order.size() && ts_of(hi) < end) ++hi;
        if (hi == lo) continue;
        TimeWindow w;
        w.start = start;
        w.end = end;
        std::vector<double> scores;
        for (std::size_t k = lo; k < hi; ++k) {
            w.event_indices.push_back(scored[order[k]].event_index);
            scores.push_back(scored[order[k]].score);
        }
        std::sort(scores.begin(), scores.end(), std::greater<>());
        const std::size_t top = top_count(scores.size(), params.k_pct);
        double sum = 0.0;
        for (std::size_t k = 0; k < top; ++k) sum += scores[k];
        w.score = sum / static_cast<double>(top);
        out.push_back(std::move(w));
    }
    return out;
}

double derive_t_ano(const std::vector<TimeWindow>& train_windows) {
    if (train_windows.empty()) throw EmptyTrainingSet("no training windows to derive the threshold from");
    double sum = 0.0;
    for (const auto& w : train_windows) sum += w.score;
    return sum / static_cast<double>(train_windows.size());
}

double derive_t_ano(const DetectorState& state, const mae::MaeModel& model, const EventLog& train_log,
                    const WindowParams& params, std::size_t m, std::uint64_t seed) {
    if (train_log.empty()) throw EmptyTrainingSet("training log has no events");
    return derive_t_ano(window_scores(score_events(state, model, train_log, m, seed), train_log, params));
}

WindowSelection select_windows(const std::vector<TimeWindow>& windows, double t_ano, std::size_t c,
                               const EventLog& log) {
    if (c == 0) throw ConfigError("at least one window must be selectable");
    WindowSelection sel;
    sel.windows = windows;
    sel.t_ano = t_ano;
    for (const auto& w : windows) {
        if (w.score > t_ano) sel.selected.push_back(w);
    }
    std::stable_sort(sel.selected.begin(), sel.selected.end(), [](const TimeWindow& a, const TimeWindow& b) {
        return a.score != b.score ? a.score > b.score : a.start < b.start;
    });
    if (sel.selected.size() > c) sel.selected.resize(c);
    for (const auto& w : sel.selected) {
        sel.truncated_events.insert(sel.truncated_events.end(), w.event_indices.begin(), w.event_indices.end());
    }
    std::sort(sel.truncated_events.begin(), sel.truncated_events.end(),
              [&](std::size_t a, std::size_t b) { return by_time(log, a, b); });
    sel.truncated_events.erase(std::unique(sel.truncated_events.begin(), sel.truncated_events.end()),
                               sel.truncated_events.end());
    return sel;
}

namespace {

nlohmann::ordered_json window_json(const TimeWindow& w, bool with_indices) {
    nlohmann::ordered_json j;
    j["start"] = format_timestamp(w.start);
    j["end"] = format_timestamp(w.end);
    j["start_us"] = w.start;
    j["end_us"] = w.end;
    j["score"] = w.score;
    j["event_count"] = w.event_indices.size();
    if (with_indices) j["event_indices"] = w.event_indices;
    return j;
}

TimeWindow window_from(const nlohmann::json& j) {
    TimeWindow w;
    w.start = j.at("start_us").get<Timestamp>();
    w.end = j.at("end_us").get<Timestamp>();
    w.score = j.at("score").get<double>();
    if (j.contains("event_indices")) w.event_indices = j["event_indices"].get<std::vector<std::size_t>>();
    return w;
}

}  // namespace

nlohmann::ordered_json selection_to_json(const WindowSelection& sel, const EventLog& log) {
    nlohmann::ordered_json j;
    j["t_ano"] = sel.t_ano;
    j["score_sign"] = kScoreSign;
    j["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : sel.windows) j["windows"].push_back(window_json(w, false));
    j["selected"] = nlohmann::ordered_json::array();
    for (const auto& w : sel.selected) j["selected"].push_back(window_json(w, true));
    j["truncated_event_indices"] = sel.truncated_events;
    auto& evs = j["truncated_events"] = nlohmann::ordered_json::array();
    for (auto i : sel.truncated_events) evs.push_back(event_to_json(log[i]));
    return j;
}

LoadedSelection selection_from_json(const nlohmann::json& j) {
    LoadedSelection out;
    try {
        out.selection.t_ano = j.at("t_ano").get<double>();
        for (const auto& w : j.at("windows")) out.selection.windows.push_back(window_from(w));
        for (const auto& w : j.at("selected")) out.selection.selected.push_back(window_from(w));
        out.selection.truncated_events = j.at("truncated_event_indices").get<std::vector<std::size_t>>();
        for (const auto& e : j.at("truncated_events")) out.truncated.push_back(event_from_json(e));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed selection: ") + e.what());
    }
    if (out.truncated.size() != out.selection.truncated_events.size()) {
        throw SchemaError("selection event list and index list differ in length");
    }
    return out;
}

}  // namespace shield::detect
