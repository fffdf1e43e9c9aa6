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
#include "shield/scenario.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

using namespace shield;
using namespace shield::detect;
using shield::testing::make_event;

namespace {

std::vector<std::vector<double>> gaussian_cluster(std::size_t n, std::size_t dim, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts) {
        for (auto& v : p) v = rng.normal(0.0, sigma);
    }
    return pts;
}

// Log with scores attached by index; timestamps unsorted on purpose.
struct RandomScoredLog {
    EventLog log;
    std::vector<ScoredEvent> scored;
};

RandomScoredLog random_scored_log(Rng& rng, std::size_t n) {
    RandomScoredLog r;
    const Timestamp base = 1'600'000'000LL * kMicrosPerSecond;
    const Timestamp span = static_cast<Timestamp>(1 + rng.below(8)) * 60 * kMicrosPerMinute;
    for (std::size_t i = 0; i < n; ++i) {
        // Coarse timestamps so that ties and window-boundary hits occur.
        const auto ts = base + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(span / kMicrosPerMinute))) *
                                   kMicrosPerMinute;
        r.log.events.push_back(make_event("s", "o", "EVENT_READ", "", ts));
        r.scored.push_back({i, rng.uniform(-2.0, 5.0)});
    }
    return r;
}

// Brute-force window scoring with the top slice computed in integer
// arithmetic from a whole-percent k.
std::vector<TimeWindow> oracle_windows(const RandomScoredLog& r, Timestamp w_l, Timestamp stride, int k_percent) {
    Timestamp first = INT64_MAX, last = INT64_MIN;
    for (const auto& s : r.scored) {
        first = std::min(first, r.log[s.event_index].timestamp);
        last = std::max(last, r.log[s.event_index].timestamp);
    }
    std::vector<TimeWindow> out;
    if (r.scored.empty()) return out;
    for (Timestamp start = first; start <= last; start += stride) {
        std::vector<std::pair<Timestamp, std::size_t>> members;
        std::vector<double> scores;
        for (const auto& s : r.scored) {
            const auto ts = r.log[s.event_index].timestamp;
            if (ts >= start && ts < start + w_l) {
                members.emplace_back(ts, s.event_index);
                scores.push_back(s.score);
            }
        }
        if (members.empty()) continue;
        std::sort(members.begin(), members.end());
        std::sort(scores.rbegin(), scores.rend());
        const std::size_t n = scores.size();
        const std::size_t top = std::max<std::size_t>(1, (static_cast<std::size_t>(k_percent) * n + 99) / 100);
        double sum = 0.0;
        for (std::size_t k = 0; k < top; ++k) sum += scores[k];
        TimeWindow w;
        w.start = start;
        w.end = start + w_l;
        for (auto& m : members) w.event_indices.push_back(m.second);
        w.score = sum / static_cast<double>(top);
        out.push_back(w);
    }
    return out;
}

TimeWindow window_at(Timestamp start, double score, std::vector<std::size_t> idx = {}) {
    TimeWindow w;
    w.start = start;
    w.end = start + 10;
    w.score = score;
    w.event_indices = std::move(idx);
    return w;
}

}  // namespace

TEST_SUITE("ocsvm") {

TEST_CASE("held-in point scores below a far point") {
    const auto pts = gaussian_cluster(100, 4, 1.0, 3);
    const auto svm = OneClassSvm::fit(pts);
    CHECK(svm.score({0.1, -0.2, 0.0, 0.1}) < svm.score({10.0, 10.0, 10.0, 10.0}));
    CHECK(svm.score(pts[5]) < svm.score({10.0, 0.0, 0.0, 0.0}));
}

TEST_CASE("duplicate points fit and share one score") {
    std::vector<std::vector<double>> pts(50, std::vector<double>{1.0, 2.0, 3.0});
    const auto svm = OneClassSvm::fit(pts);
    const double s0 = svm.score(pts[0]);
    CHECK(std::isfinite(s0));
    for (const auto& p : pts) CHECK(svm.score(p) == s0);
}

TEST_CASE("fewer than two points is insufficient") {
    CHECK_THROWS_AS(OneClassSvm::fit({{1.0, 2.0}}), InsufficientData);
    CHECK_THROWS_AS(OneClassSvm::fit({}), InsufficientData);
    CHECK_THROWS_AS(fit_boundary({mae::EventEmbedding{{1.0}, 0}}), InsufficientData);
}

TEST_CASE("property: solution satisfies the dual constraints and KKT conditions") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 40 + rng.below(120);
        auto pts = gaussian_cluster(n, 3, 0.5 + rng.uniform(), rng.next());
        OcsvmParams p;
        p.nu = 0.05 + 0.3 * rng.uniform();
        p.tolerance = 1e-6;
        const auto svm = OneClassSvm::fit(pts, p);
        const double total = std::accumulate(svm.coefficients().begin(), svm.coefficients().end(), 0.0);
        CHECK(total == doctest::Approx(p.nu * static_cast<double>(n)).epsilon(1e-9));
        for (double a : svm.coefficients()) {
            CHECK(a > 0.0);
            CHECK(a <= 1.0 + 1e-12);
        }
        // Optimality: d(x) = sum a K - rho is >= 0 where a = 0, <= 0 where a = 1, ~0 where free.
        std::size_t outside = 0;
        for (const auto& x : pts) {
            const double d = svm.decision(x);
            const auto it = std::find(svm.support_vectors().begin(), svm.support_vectors().end(), x);
            if (it == svm.support_vectors().end()) {
                CHECK(d >= -1e-5);
            } else {
                const double a = svm.coefficients()[static_cast<std::size_t>(it - svm.support_vectors().begin())];
                if (a >= 1.0) CHECK(d <= 1e-5);
                if (a < 1.0) CHECK(std::abs(d) <= 1e-5);
            }
            outside += d < -1e-5;
        }
        // nu bounds the fraction of strict outliers.
        CHECK(static_cast<double>(outside) <= p.nu * static_cast<double>(n) + 1e-9);
    }
}

TEST_CASE("large fit sets are subsampled deterministically") {
    const auto pts = gaussian_cluster(300, 2, 1.0, 4);
    OcsvmParams p;
    p.max_fit_points = 100;
    const auto a = OneClassSvm::fit(pts, p);
    const auto b = OneClassSvm::fit(pts, p);
    CHECK(a.fit_size() == 100);
    CHECK(a.rho() == b.rho());
    CHECK(a.support_vectors() == b.support_vectors());
}

TEST_CASE("state round-trips through json") {
    DetectorState s;
    s.boundary = OneClassSvm::fit(gaussian_cluster(30, 3, 1.0, 5));
    s.t_ano = 0.25;
    s.has_t_ano = true;
    const auto back = DetectorState::from_json(nlohmann::json::parse(s.to_json().dump()));
    CHECK(back.t_ano == 0.25);
    CHECK(back.score_sign == std::string(kScoreSign));
    CHECK(back.boundary.score({0.3, 0.1, 9.0}) == s.boundary.score({0.3, 0.1, 9.0}));
    auto bad = s.to_json();
    bad["score_sign"] = "lower_is_anomalous";
    CHECK_THROWS_AS(DetectorState::from_json(bad), ModelFormatError);
}

}  // TEST_SUITE

TEST_SUITE("windows") {

TEST_CASE("top-10 percent of ten scores is the maximum") {
    EventLog log;
    std::vector<ScoredEvent> scored;
    for (int i = 0; i < 10; ++i) {
        log.events.push_back(make_event("s", "o", "EVENT_READ", "", i * kMicrosPerSecond));
        scored.push_back({static_cast<std::size_t>(i), static_cast<double>(i + 1)});
    }
    auto w = window_scores(scored, log, {});
    REQUIRE(w.size() == 1);
    CHECK(w[0].score == 10.0);
    CHECK(w[0].end - w[0].start == 30 * kMicrosPerMinute);
}

TEST_CASE("three events use the single highest score") {
    CHECK(top_count(3, 0.10) == 1);
    CHECK(top_count(10, 0.10) == 1);
    CHECK(top_count(11, 0.10) == 2);
    CHECK(top_count(20, 0.10) == 2);
    CHECK(top_count(0, 0.10) == 0);
    EventLog log;
    log.events = {make_event("a", "b", "X", "", 0), make_event("a", "b", "X", "", 1), make_event("a", "b", "X", "", 2)};
    auto w = window_scores({{0, 0.5}, {1, 2.5}, {2, -1.0}}, log, {});
    REQUIRE(w.size() == 1);
    CHECK(w[0].score == 2.5);
}

TEST_CASE("empty input yields no windows and bad parameters raise") {
    EventLog log;
    CHECK(window_scores({}, log, {}).empty());
    WindowParams p;
    p.k_pct = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.w_l = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("property: window scores equal the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        auto r = random_scored_log(rng, 1 + rng.below(1500));
        const int k_percent = 1 + static_cast<int>(rng.below(100));
        WindowParams p;
        p.w_l = static_cast<Timestamp>(5 + rng.below(40)) * kMicrosPerMinute;
        p.stride = trial % 3 == 0 ? p.w_l / 2 : p.w_l;
        p.k_pct = k_percent / 100.0;
        const auto got = window_scores(r.scored, r.log, p);
        const auto want = oracle_windows(r, p.w_l, p.stride, k_percent);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].start == want[i].start);
            CHECK(got[i].end == want[i].end);
            CHECK(got[i].event_indices == want[i].event_indices);
            CHECK(got[i].score == want[i].score);
        }
    }
}

TEST_CASE("property: raising one score never lowers its window score") {
    Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
        auto r = random_scored_log(rng, 50 + rng.below(300));
        const auto before = window_scores(r.scored, r.log, {});
        const auto victim = rng.below(r.scored.size());
        r.scored[victim].score += rng.uniform(0.0, 3.0);
        const auto after = window_scores(r.scored, r.log, {});
        REQUIRE(before.size() == after.size());
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i].score >= before[i].score);
    }
}

TEST_CASE("t_ano is the mean of the training window scores") {
    CHECK(derive_t_ano({window_at(0, 0.1), window_at(10, 0.3)}) == doctest::Approx(0.2));
    CHECK(derive_t_ano({window_at(0, 0.7)}) == 0.7);
    CHECK_THROWS_AS(derive_t_ano(std::vector<TimeWindow>{}), EmptyTrainingSet);
}

}  // TEST_SUITE

TEST_SUITE("select") {

TEST_CASE("keeps windows above the threshold up to c") {
    EventLog log;
    for (int i = 0; i < 4; ++i) log.events.push_back(make_event("s", "o", "X", "", i));
    auto sel = select_windows({window_at(0, 5, {0}), window_at(10, 4, {1}), window_at(20, 3, {2}), window_at(30, 2, {3})},
                              2.5, 3, log);
    REQUIRE(sel.selected.size() == 3);
    CHECK(sel.selected[0].score == 5);
    CHECK(sel.selected[1].score == 4);
    CHECK(sel.selected[2].score == 3);
    CHECK(sel.truncated_events == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("no window above the threshold is an empty selection") {
    EventLog log;
    log.events.push_back(make_event("s", "o", "X", "", 0));
    auto sel = select_windows({window_at(0, 1.0, {0})}, 2.0, 3, log);
    CHECK(sel.selected.empty());
    CHECK(sel.truncated_events.empty());
}

TEST_CASE("ties go to the earlier window") {
    EventLog log;
    for (int i = 0; i < 3; ++i) log.events.push_back(make_event("s", "o", "X", "", i));
    auto sel = select_windows({window_at(20, 5, {2}), window_at(10, 4, {1}), window_at(0, 5, {0})}, 0.0, 2, log);
    REQUIRE(sel.selected.size() == 2);
    CHECK(sel.selected[0].start == 0);
    CHECK(sel.selected[1].start == 20);
}

TEST_CASE("property: selection equals the full-sort oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        EventLog log;
        std::vector<TimeWindow> ws;
        const auto n = 1 + rng.below(30);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::vector<std::size_t> idx;
            for (int k = 0; k < 3; ++k) {
                idx.push_back(log.size());
                log.events.push_back(make_event("s", "o", "X", "", static_cast<Timestamp>(i * 100 + rng.below(50))));
            }
            // Overlap: also reuse an earlier event now and then.
            if (i > 0 && rng.below(2)) idx.push_back(rng.below(log.size() - 3));
            ws.push_back(window_at(static_cast<Timestamp>(i * 100), static_cast<double>(rng.below(6)), idx));
        }
        const double t = static_cast<double>(rng.below(5)) + 0.5 * static_cast<double>(rng.below(2));
        const std::size_t c = 1 + rng.below(5);
        auto sel = select_windows(ws, t, c, log);

        auto sorted = ws;
        std::sort(sorted.begin(), sorted.end(), [](const TimeWindow& a, const TimeWindow& b) {
            return std::make_pair(-a.score, a.start) < std::make_pair(-b.score, b.start);
        });
        std::vector<TimeWindow> want;
        for (const auto& w : sorted) {
            if (w.score > t && want.size() < c) want.push_back(w);
        }
        REQUIRE(sel.selected.size() == want.size());
        CHECK(sel.selected.size() <= c);
        std::set<std::pair<Timestamp, std::size_t>> expect_events;
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(sel.selected[i].start == want[i].start);
            CHECK(sel.selected[i].score > t);
            for (auto e : want[i].event_indices) expect_events.emplace(log[e].timestamp, e);
        }
        std::vector<std::size_t> expect;
        for (const auto& [ts, e] : expect_events) expect.push_back(e);
        CHECK(sel.truncated_events == expect);
    }
}

TEST_CASE("selection json round-trips") {
    auto log = scenario::generate_benign({20, 0, 60 * kMicrosPerMinute, 3, LogLabel::testing});
    std::vector<ScoredEvent> scored;
    for (std::size_t i = 0; i < log.size(); ++i) scored.push_back({i, static_cast<double>(i % 7)});
    WindowParams p;
    p.w_l = 10 * kMicrosPerMinute;
    p.stride = p.w_l;
    auto sel = select_windows(window_scores(scored, log, p), 1.0, 2, log);
    auto j = selection_to_json(sel, log);
    auto back = selection_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.selection.truncated_events == sel.truncated_events);
    CHECK(back.selection.selected.size() == sel.selected.size());
    CHECK(back.selection.windows.size() == sel.windows.size());
    REQUIRE(back.truncated.size() == sel.truncated_events.size());
    for (std::size_t i = 0; i < back.truncated.size(); ++i) CHECK(back.truncated[i] == log[sel.truncated_events[i]]);
}

}  // TEST_SUITE

TEST_SUITE("scoring") {

TEST_CASE("benign events score below random-string events and scoring is per-event") {
    auto train_log = scenario::generate_benign({300, 0, 60 * kMicrosPerMinute, 12, LogLabel::training});
    mae::MaeHyper h;
    h.shape.dim = 16;
    h.shape.encoder_layers = 1;
    h.shape.heads = 2;
    h.shape.ffn_dim = 32;
    h.shape.max_seq_len = 48;
    h.epochs = 3;
    h.batch_size = 16;
    h.learning_rate = 3e-3;
    const auto model = mae::train(train_log, h, 3).model;
    const auto state = fit_boundary(mae::embed_log(model, train_log, 2, 1));

    EventLog empty;
    CHECK(score_events(state, model, empty, 2, 1).empty());

    auto benign = score_events(state, model, train_log, 2, 1);
    EventLog rand_log;
    rand_log.events = scenario::random_string_events(200, 0, 60 * kMicrosPerMinute, 4);
    auto noisy = score_events(state, model, rand_log, 2, 1);
    auto mean = [](const std::vector<ScoredEvent>& v) {
        double s = 0.0;
        for (const auto& x : v) s += x.score;
        return s / static_cast<double>(v.size());
    };
    CHECK(mean(benign) <= mean(noisy));

    EventLog permuted = train_log;
    Rng rng(5);
    rng.shuffle(permuted.events);
    auto a = score_events(state, model, train_log, 2, 1);
    auto b = score_events(state, model, permuted, 2, 1);
    std::multiset<double> ma, mb;
    for (const auto& x : a) ma.insert(x.score);
    for (const auto& x : b) mb.insert(x.score);
    CHECK(ma == mb);
}

}  // TEST_SUITE
