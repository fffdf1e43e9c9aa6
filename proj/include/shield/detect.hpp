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
#include "shield/mae.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace shield::detect {

struct OcsvmParams {
    double nu = 0.05;
    double gamma = 0.0;                // 0 selects 1 / (dim * variance of the fit data)
    std::size_t max_fit_points = 2000; // larger fit sets are subsampled
    double tolerance = 1e-3;           // KKT violation at which SMO stops
    std::uint64_t seed = 7;
};

// One-class SVM with an RBF kernel, solved by SMO with second-order working
// set selection. Dual: min 1/2 a'Qa  s.t. 0 <= a_i <= 1, sum a = nu * l.
class OneClassSvm {
public:
    OneClassSvm() = default;

    // Throws InsufficientData for fewer than two points.
    static OneClassSvm fit(const std::vector<std::vector<double>>& points, const OcsvmParams& params = {});

    // sum_i a_i K(sv_i, x) - rho; positive inside the boundary.
    double decision(const std::vector<double>& x) const;

    // Higher is more anomalous: -decision / (nu * l).
    double score(const std::vector<double>& x) const;

    double gamma() const { return gamma_; }
    double rho() const { return rho_; }
    double nu() const { return nu_; }
    std::size_t fit_size() const { return fit_size_; }
    const std::vector<std::vector<double>>& support_vectors() const { return sv_; }
    const std::vector<double>& coefficients() const { return coef_; }

    nlohmann::json to_json() const;
    static OneClassSvm from_json(const nlohmann::json& j);

private:
    double kernel_sum(const std::vector<double>& x) const;

    double gamma_ = 1.0;
    double rho_ = 0.0;
    double nu_ = 0.05;
    std::size_t fit_size_ = 0;
    std::vector<std::vector<double>> sv_;
    std::vector<double> coef_;
};

inline constexpr const char* kScoreSign = "higher_is_anomalous";

struct DetectorState {
    OneClassSvm boundary;
    double t_ano = 0.0;
    bool has_t_ano = false;
    std::string score_sign = kScoreSign;

    nlohmann::json to_json() const;
    static DetectorState from_json(const nlohmann::json& j);
};

// Throws InsufficientData.
DetectorState fit_boundary(const std::vector<mae::EventEmbedding>& train_embeddings, const OcsvmParams& params = {});

struct ScoredEvent {
    std::size_t event_index = 0;
    double score = 0.0;
};

std::vector<ScoredEvent> score_embeddings(const DetectorState& state, const std::vector<mae::EventEmbedding>& emb);

// Embeds with m masks and scores every event of the log.
std::vector<ScoredEvent> score_events(const DetectorState& state, const mae::MaeModel& model, const EventLog& log,
                                      std::size_t m, std::uint64_t seed);

struct WindowParams {
    Timestamp w_l = 30 * kMicrosPerMinute;
    Timestamp stride = 30 * kMicrosPerMinute;
    double k_pct = 0.10;

    void validate() const;  // throws ConfigError
};

struct TimeWindow {
    Timestamp start = 0;
    Timestamp end = 0;
    std::vector<std::size_t> event_indices;  // ordered by (timestamp, index)
    double score = 0.0;
};

// Number of top scores averaged for a window of n events.
std::size_t top_count(std::size_t n, double k_pct);

// Windows start at the earliest scored timestamp and advance by stride until
// they pass the latest one; each spans [start, start + w_l). Empty windows are
// dropped. Score = mean of the top_count highest event scores.
std::vector<TimeWindow> window_scores(const std::vector<ScoredEvent>& scored, const EventLog& log,
                                      const WindowParams& params);

// Mean score over the windows of the training log. Throws EmptyTrainingSet.
double derive_t_ano(const std::vector<TimeWindow>& train_windows);
double derive_t_ano(const DetectorState& state, const mae::MaeModel& model, const EventLog& train_log,
                    const WindowParams& params, std::size_t m, std::uint64_t seed);

struct WindowSelection {
    std::vector<TimeWindow> windows;
    std::vector<TimeWindow> selected;               // score > t_ano, (score desc, start asc), at most c
    std::vector<std::size_t> truncated_events;      // union of selected events, (timestamp, index) order
    double t_ano = 0.0;
};

WindowSelection select_windows(const std::vector<TimeWindow>& windows, double t_ano, std::size_t c,
                               const EventLog& log);

// selection.json: windows, selected windows, t_ano and the truncated events
// (index plus the full event) so later stages need not reread the log.
nlohmann::ordered_json selection_to_json(const WindowSelection& sel, const EventLog& log);

struct LoadedSelection {
    WindowSelection selection;
    std::vector<Event> truncated;  // parallel to selection.truncated_events
};
LoadedSelection selection_from_json(const nlohmann::json& j);

}  // namespace shield::detect
