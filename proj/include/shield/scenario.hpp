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

#include "shield/eval.hpp"
#include "shield/event.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Synthetic audit logs for tests, benchmarks and the bundled demo scenario.
namespace shield::scenario {

struct BenignOptions {
    std::size_t count = 1000;
    Timestamp start = 1'700'000'000LL * kMicrosPerSecond;
    Timestamp span = 6LL * 60 * kMicrosPerMinute;
    std::uint64_t seed = 7;
    LogLabel label = LogLabel::training;
};

// Routine host activity drawn from a fixed set of process templates
// (cron, sshd, vmstat, firefox, nginx, ...). Sorted by timestamp.
EventLog generate_benign(const BenignOptions& opt);

// Events whose command lines and paths are random strings; never produced
// by the benign templates.
std::vector<Event> random_string_events(std::size_t n, Timestamp start, Timestamp span, std::uint64_t seed);

// A browser-extension dropper on a desktop host: a shell launches a
// downloaded binary that beacons to a remote address and installs a native
// messaging host. Twenty attack events inside one half hour of a six hour
// testing log, plus a separate benign training log.
struct AttackScenario {
    EventLog train;
    EventLog test;
    eval::GroundTruth truth;
    std::string environment;
    std::string evidence_response;       // scripted answers for the mock provider
    std::string investigation_response;
};

struct AttackOptions {
    std::size_t train_events = 2000;
    std::size_t test_events = 5000;  // including the attack events
    std::uint64_t seed = 7;
};

AttackScenario gtcache_scenario(const AttackOptions& opt = {});

// train.jsonl, test.jsonl, ground_truth.json, environment.txt and
// mock/{evidence,investigation}.txt under dir.
void write_scenario(const AttackScenario& s, const std::string& dir);

}  // namespace shield::scenario
