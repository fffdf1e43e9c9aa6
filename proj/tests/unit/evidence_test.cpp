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
#include "shield/evidence.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <set>

using namespace shield;
using namespace shield::evidence;
using shield::testing::make_event;

namespace {

constexpr Timestamp kT0 = 1'700'000'000LL * kMicrosPerSecond;

Event entropy_read(Timestamp ts) {
    return make_event("proc-sh-1", "obj-entropy", "EVENT_READ", "sh /usr/libexec/save-entropy", ts, "/bin/sh", "",
                      "/var/db/entropy/saved-entropy.1");
}

// Scripted provider that counts calls and replays a fixed list of answers.
class ScriptedProvider : public llm::LlmProvider {
public:
    explicit ScriptedProvider(std::vector<std::string> answers) : answers_(std::move(answers)) {}
    llm::Completion complete(const std::string& prompt, std::string_view) override {
        last_prompt = prompt;
        llm::Completion c;
        c.text = answers_.at(std::min(calls, answers_.size() - 1));
        c.meta.model_id = "scripted";
        c.meta.prompt_digest = text::sha256_hex(prompt);
        ++calls;
        return c;
    }
    std::string model_id() const override { return "scripted"; }

    std::size_t calls = 0;
    std::string last_prompt;

private:
    std::vector<std::string> answers_;
};

// Unbudgeted BFS from the seeds, then whole-iteration truncation.
std::vector<std::size_t> expansion_oracle(const std::vector<Event>& events, const std::set<std::string>& seeds,
                                          std::size_t t_nbr) {
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& e : events) {
        adj[e.subject_id].insert(e.object_id);
        adj[e.object_id].insert(e.subject_id);
    }
    std::map<std::string, std::size_t> dist;
    std::queue<std::string> q;
    for (const auto& s : seeds) {
        dist[s] = 0;
        q.push(s);
    }
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (const auto& v : adj[u]) {
            if (!dist.count(v)) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    // Edge iteration: 0 when both ends are seeds, else one past the nearer end.
    std::map<std::size_t, std::vector<std::size_t>> by_iter;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        auto a = dist.find(e.subject_id), b = dist.find(e.object_id);
        if (a == dist.end() || b == dist.end()) continue;
        std::size_t it = (a->second == 0 && b->second == 0) ? 0 : std::min(a->second, b->second) + 1;
        by_iter[it].push_back(i);
    }
    std::vector<std::size_t> out;
    std::size_t max_iter = by_iter.empty() ? 0 : by_iter.rbegin()->first;
    for (std::size_t k = 0; k <= max_iter; ++k) {
        if (k > 0 && out.size() > t_nbr) break;
        auto f = by_iter.find(k);
        if (f != by_iter.end()) out.insert(out.end(), f->second.begin(), f->second.end());
    }
    std::sort(out.begin(), out.end(), [&](std::size_t x, std::size_t y) {
        return events[x].timestamp != events[y].timestamp ? events[x].timestamp < events[y].timestamp : x < y;
    });
    return out;
}

std::vector<Event> random_graph_events(Rng& rng, std::size_t nodes, std::size_t n_events) {
    std::vector<Event> evs;
    for (std::size_t i = 0; i < n_events; ++i) {
        auto s = "n" + std::to_string(rng.below(nodes));
        auto o = "n" + std::to_string(rng.below(nodes));
        bool marked = rng.uniform() < 0.03;
        evs.push_back(make_event(s, o, "EVENT_WRITE", marked ? "./payload --go" : "cmd" + std::to_string(rng.below(50)),
                                 kT0 + static_cast<Timestamp>(rng.below(100000))));
    }
    return evs;
}

}  // namespace

TEST_SUITE("evidence") {

TEST_CASE("identical save-entropy reads collapse into one summary") {
    std::vector<Event> evs{entropy_read(kT0 + 30), entropy_read(kT0 + 10), entropy_read(kT0 + 20)};
    auto g = group_events(evs);
    REQUIRE(g.size() == 1);
    CHECK(g[0].count == 3);
    CHECK(g[0].ts_min == kT0 + 10);
    CHECK(g[0].ts_max == kT0 + 30);
    CHECK(g[0].command_line == "sh /usr/libexec/save-entropy");
    // Forced grouping through summarize.
    CHECK(summarize(evs, 0) == g);
    // Below the bypass threshold each event stands alone, in time order.
    auto raw = summarize(evs);
    REQUIRE(raw.size() == 3);
    CHECK(raw[0].ts_min == kT0 + 10);
    CHECK(raw[2].ts_min == kT0 + 30);
    CHECK(std::all_of(raw.begin(), raw.end(), [](const EventSummary& s) { return s.count == 1; }));
}

TEST_CASE("summarizing nothing yields nothing") {
    CHECK(group_events({}).empty());
    CHECK(summarize({}).empty());
}

TEST_CASE("grouping matches a keyed-count oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Event> evs;
        const std::size_t n = 1 + rng.below(300);
        for (std::size_t i = 0; i < n; ++i) {
            evs.push_back(make_event("p" + std::to_string(rng.below(4)), "o" + std::to_string(rng.below(4)),
                                     rng.below(2) ? "EVENT_READ" : "EVENT_WRITE", "c" + std::to_string(rng.below(3)),
                                     kT0 + static_cast<Timestamp>(rng.below(1000))));
        }
        std::map<std::string, std::tuple<std::size_t, Timestamp, Timestamp>> oracle;
        for (const auto& e : evs) {
            auto key = e.subject_id + "|" + e.object_id + "|" + e.event_type + "|" + e.command_line;
            auto [it, fresh] = oracle.emplace(key, std::make_tuple(0, e.timestamp, e.timestamp));
            auto& [c, lo, hi] = it->second;
            ++c;
            lo = std::min(lo, e.timestamp);
            hi = std::max(hi, e.timestamp);
        }
        auto g = group_events(evs);
        REQUIRE(g.size() == oracle.size());
        std::size_t total = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto& s = g[i];
            total += s.count;
            auto [c, lo, hi] = oracle.at(s.subject_id + "|" + s.object_id + "|" + s.event_type + "|" + s.command_line);
            CHECK(s.count == c);
            CHECK(s.ts_min == lo);
            CHECK(s.ts_max == hi);
            if (i > 0) CHECK(g[i - 1].ts_min <= s.ts_min);
        }
        CHECK(total == evs.size());
    }
}

TEST_CASE("unique events each form their own group") {
    std::vector<Event> evs;
    for (int i = 0; i < 100; ++i) evs.push_back(make_event("p", "o", "EVENT_EXECUTE", "cmd " + std::to_string(i), kT0 + i));
    CHECK(group_events(evs).size() == 100);
}

TEST_CASE("flagged brute-force tool becomes the attack evidence") {
    std::vector<Event> evs{
        make_event("p1", "o1", "EVENT_EXECUTE", "explorer.exe", kT0),
        make_event("p2", "o2", "EVENT_EXECUTE", "WinBrute.exe administrator_pass.txt", kT0 + 1),
        make_event("p3", "o3", "EVENT_READ", "svchost.exe -k netsvcs", kT0 + 2),
    };
    testing::TempDir dir;
    dir.write("evidence.txt",
              "The following command is suspicious:\n- \"WinBrute.exe administrator_pass.txt\" (password brute forcing)\n");
    llm::MockProvider mock(dir.path().string());
    auto ev = identify_evidence(summarize(evs), "a Windows 10 workstation", mock);
    CHECK(ev.command_lines == std::vector<std::string>{"WinBrute.exe administrator_pass.txt"});
    CHECK(ev.provider_meta.model_id == "scripted-mock");
    CHECK(ev.provider_meta.prompt_digest.size() == 64);
}

TEST_CASE("prompt lists each distinct command line once and names the environment") {
    std::vector<Event> evs{entropy_read(kT0), entropy_read(kT0 + 1),
                           make_event("p", "o", "EVENT_EXECUTE", "./gtcache", kT0 + 2)};
    const auto p = evidence_prompt(summarize(evs), "a FreeBSD server");
    CHECK(p.find("Command Lines:") != std::string::npos);
    CHECK(p.find("collected on a FreeBSD server") != std::string::npos);
    auto first = p.find("- sh /usr/libexec/save-entropy");
    REQUIRE(first != std::string::npos);
    CHECK(p.find("- sh /usr/libexec/save-entropy", first + 1) == std::string::npos);
    CHECK(p.find("- ./gtcache") != std::string::npos);
}

TEST_CASE("responses are grounded in the observed command lines") {
    const std::vector<std::string> cmds{"./gtcache --connect 81.49.200.166", "sh /usr/libexec/save-entropy",
                                        "cp /tmp/libnet.so /usr/lib/"};
    const std::string resp =
        "<think>maybe \"sh /usr/libexec/save-entropy\" is odd</think>\n"
        "1. `./gtcache --connect 81.49.200.166`\n"
        "2. \"./GTCACHE --connect 81.49.200.166\"\n"
        "- rm -rf / --no-preserve-root\n"
        "* **cp /tmp/libnet.so /usr/lib/**\n"
        "- None\n";
    auto got = parse_evidence_response(resp, cmds);
    CHECK(got == std::vector<std::string>{"./gtcache --connect 81.49.200.166", "cp /tmp/libnet.so /usr/lib/"});
    CHECK(parse_evidence_response("None", cmds).empty());
}

TEST_CASE("an empty answer is retried once then rejected") {
    std::vector<Event> evs{make_event("p", "o", "EVENT_EXECUTE", "./gtcache", kT0)};
    ScriptedProvider empty({"   \n"});
    CHECK_THROWS_AS(identify_evidence(summarize(evs), "host", empty), EmptyResponse);
    CHECK(empty.calls == 2);

    ScriptedProvider second({"", "- ./gtcache"});
    auto ev = identify_evidence(summarize(evs), "host", second);
    CHECK(second.calls == 2);
    CHECK(ev.command_lines == std::vector<std::string>{"./gtcache"});
}

TEST_CASE("evidence json round-trip") {
    AttackEvidence e{{"a b c", "./x"}, {"m", "d"}};
    auto back = AttackEvidence::from_json(nlohmann::json::parse(e.to_json().dump()));
    CHECK(back.command_lines == e.command_lines);
    CHECK(back.provider_meta.model_id == "m");
    CHECK_THROWS_AS(AttackEvidence::from_json(nlohmann::json::object()), SchemaError);
}

TEST_CASE("graph nodes, kinds and edge multiplicity") {
    std::vector<Event> evs{
        make_event("p1", "f1", "EVENT_WRITE", "cp", kT0, "/bin/cp", "", "/tmp/a"),
        make_event("p1", "f1", "EVENT_WRITE", "cp", kT0 + 1, "/bin/cp", "", "/tmp/a"),
        make_event("p1", "ip1", "EVENT_CONNECT", "cp", kT0 + 2, "/bin/cp", "10.0.0.1", ""),
        make_event("p1", "p2", "EVENT_FORK", "cp", kT0 + 3),
    };
    auto g = build_graph(evs);
    CHECK(g.nodes.size() == 4);
    CHECK(g.nodes.at("f1") == EntityKind::file);
    CHECK(g.nodes.at("ip1") == EntityKind::ip);
    CHECK(g.nodes.at("p2") == EntityKind::process);
    CHECK(g.edges.size() == 3);
    CHECK(g.edges.at({"p1", "f1"}).weight() == 2);
    CHECK(g.incident.at("p1").size() == 3);
    CHECK(std::string(to_string(EntityKind::ip)) == "ip");
}

TEST_CASE("edge weights sum to the event count") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        auto evs = random_graph_events(rng, 1 + rng.below(30), rng.below(200));
        auto g = build_graph(evs);
        std::size_t sum = 0;
        for (const auto& [k, e] : g.edges) sum += e.weight();
        CHECK(sum == evs.size());
    }
}

TEST_CASE("two hops from the payload reach the network and file entities") {
    // payload -> c2 ip, payload -> dropped file, loader reads the dropped file,
    // loader -> second ip; an unrelated process is far away.
    std::vector<Event> evs{
        make_event("payload", "ip-c2", "EVENT_CONNECT", "payload.exe", kT0, "payload.exe", "81.49.200.166"),
        make_event("payload", "file-drop", "EVENT_WRITE", "payload.exe", kT0 + 1, "payload.exe", "", "C:/tmp/x.dll"),
        make_event("loader", "file-drop", "EVENT_READ", "rundll32 x.dll", kT0 + 2, "rundll32", "", "C:/tmp/x.dll"),
        make_event("loader", "ip-exfil", "EVENT_SENDTO", "rundll32 x.dll", kT0 + 3, "rundll32", "61.167.39.128"),
        make_event("loader", "ip-exfil", "EVENT_SENDTO", "rundll32 x.dll", kT0 + 4, "rundll32", "61.167.39.128"),
        make_event("other", "file-far", "EVENT_READ", "notepad.exe", kT0 + 5, "notepad", "", "C:/doc.txt"),
    };
    AttackEvidence ev{{"payload.exe"}, {}};
    auto g = build_graph(evs);
    auto n = expand(g, evs, ev, 2);
    CHECK(n.seed_nodes == std::vector<std::string>{"payload"});
    CHECK(n.iterations == 2);
    CHECK(n.positions == std::vector<std::size_t>{0, 1, 2});
    auto wide = expand(g, evs, ev, 500);
    CHECK(wide.iterations == 3);
    CHECK(wide.positions == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("budget of one keeps the whole completing batch") {
    std::vector<Event> evs{
        make_event("seed", "a", "EVENT_READ", "./evil", kT0 + 2),
        make_event("seed", "b", "EVENT_READ", "./evil", kT0 + 1),
        make_event("c", "seed", "EVENT_FORK", "bash", kT0 + 3),
        make_event("a", "z", "EVENT_READ", "cat", kT0 + 4),
    };
    auto n = expand(build_graph(evs), evs, AttackEvidence{{"EVIL"}, {}}, 1);
    CHECK(n.iterations == 1);
    CHECK(n.positions == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("unmatched evidence and a zero budget are errors") {
    std::vector<Event> evs{make_event("p", "o", "EVENT_READ", "ls", kT0)};
    auto g = build_graph(evs);
    CHECK_THROWS_AS(expand(g, evs, AttackEvidence{{"gtcache"}, {}}, 10), NoSeedMatch);
    CHECK_THROWS_AS(expand(g, evs, AttackEvidence{{"ls"}, {}}, 0), ConfigError);
    auto fb = fallback_neighborhood(evs, 10);
    CHECK(fb.fallback);
    CHECK(fb.positions == std::vector<std::size_t>{0});
}

TEST_CASE("expansion matches the unbudgeted BFS oracle on random graphs") {
    Rng rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t nodes = 2 + rng.below(199);
        auto evs = random_graph_events(rng, nodes, 1 + rng.below(600));
        std::set<std::string> seeds;
        for (const auto& e : evs) {
            if (e.command_line == "./payload --go") seeds.insert(e.subject_id);
        }
        if (seeds.empty()) {
            evs[0].command_line = "./payload --go";
            seeds.insert(evs[0].subject_id);
        }
        const std::size_t budget = 1 + rng.below(400);
        auto g = build_graph(evs);
        auto n = expand(g, evs, AttackEvidence{{"payload"}, {}}, budget);
        CHECK(n.positions == expansion_oracle(evs, seeds, budget));
        CHECK(std::set<std::string>(n.seed_nodes.begin(), n.seed_nodes.end()) == seeds);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("larger budgets never shrink the neighborhood") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        auto evs = random_graph_events(rng, 2 + rng.below(100), 50 + rng.below(300));
        evs[0].command_line = "./payload --go";
        auto g = build_graph(evs);
        AttackEvidence ev{{"payload"}, {}};
        std::vector<std::size_t> prev;
        for (std::size_t b : {1, 5, 20, 80, 300, 1000}) {
            auto cur = expand(g, evs, ev, b).positions;
            std::set<std::size_t> cs(cur.begin(), cur.end());
            for (auto p : prev) CHECK(cs.count(p) == 1);
            CHECK(expand(g, evs, ev, b).positions == cur);
            prev = cur;
        }
    }
}

TEST_CASE("neighborhood json round-trip keeps log indices") {
    std::vector<Event> evs{make_event("p", "o", "EVENT_READ", "./evil", kT0), make_event("p", "q", "EVENT_READ", "ls", kT0 + 1)};
    auto n = expand(build_graph(evs), evs, AttackEvidence{{"evil"}, {}}, 10);
    auto j = neighborhood_to_json(n, evs, {40, 41});
    auto back = neighborhood_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.log_indices == std::vector<std::size_t>{40, 41});
    CHECK(back.events.size() == 2);
    CHECK(back.seed_nodes == n.seed_nodes);
    CHECK(back.iterations == n.iterations);
    CHECK_THROWS_AS(neighborhood_from_json(nlohmann::json::object()), SchemaError);
}

}  // TEST_SUITE
