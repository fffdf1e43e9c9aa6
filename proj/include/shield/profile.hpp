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

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shield::profile {

// exec -> (remainder -> frequency)
using Store = std::map<std::string, std::map<std::string, std::uint64_t>>;

struct BenignProfile {
    Store store;
    std::string built_from;
    std::uint64_t total_events = 0;
};

struct SampledProfile {
    Store store;
    double ratio = 1.0;
    std::uint64_t seed = 0;
};

struct ProfileKey {
    std::string exec;
    std::string remainder;
};

// Basename of the first command-line token; an event without a command line
// but with a file falls back to the process image. nullopt when neither exists.
std::optional<ProfileKey> profile_key(const Event& e);

BenignProfile build_profile(const EventLog& train);

// Per exec, quota = round(r * pairs), at least 1. Pairs ranked by frequency
// are cut into three near-equal groups (earlier groups take the remainder)
// and the quota is apportioned over groups by largest remainder.
SampledProfile sample_profile(const BenignProfile& profile, double ratio, std::uint64_t seed);

// Group sizes and per-group quotas used by sample_profile; exposed for tests.
std::vector<std::size_t> tercile_sizes(std::size_t n);
std::vector<std::size_t> apportion(std::size_t quota, const std::vector<std::size_t>& sizes);
std::size_t sample_quota(std::size_t n, double ratio);

// Sampled pairs for every exec used by the given events, pretty JSON.
// Execs unknown to the profile are left out; no execs gives "{}".
std::string match_profile(const Store& sampled, const std::vector<Event>& events);

// Two-level object, pairs ordered by descending frequency then key.
nlohmann::ordered_json store_to_json(const Store& store);
Store store_from_json(const nlohmann::json& j);

}  // namespace shield::profile
