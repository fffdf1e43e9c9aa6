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

#include "shield/profile.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace shield::profile {

std::optional<ProfileKey> profile_key(const Event& e) {
    const auto tokens = text::split_ws(e.command_line);
    ProfileKey k;
    if (!tokens.empty()) {
        k.exec = text::basename(tokens.front());
    } else if (!e.file_path.empty() && !e.process_path.empty()) {
        k.exec = text::basename(e.process_path);
    }
    if (k.exec.empty()) return std::nullopt;
    if (!e.file_path.empty()) {
        k.remainder = e.file_path;
    } else if (tokens.size() > 1) {
        k.remainder = text::join(std::vector<std::string>(tokens.begin() + 1, tokens.end()), " ");
    }
    return k;
}

BenignProfile build_profile(const EventLog& train) {
    if (train.label != LogLabel::training) throw ConfigError("profiles are built from the training log only");
    BenignProfile p;
    p.built_from = train.source_tag;
    for (const auto& e : train.events) {
        auto k = profile_key(e);
        if (!k) continue;
        ++p.store[k->exec][k->remainder];
        ++p.total_events;
    }
    return p;
}

std::size_t sample_quota(std::size_t n, double ratio) {
    if (n == 0) return 0;
    const auto q = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    return std::clamp<std::size_t>(q, 1, n);
}

std::vector<std::size_t> tercile_sizes(std::size_t n) {
    std::vector<std::size_t> s(3, n / 3);
    for (std::size_t i = 0; i < n % 3; ++i) ++s[i];
    return s;
}

std::vector<std::size_t> apportion(std::size_t quota, const std::vector<std::size_t>& sizes) {
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    std::vector<std::size_t> out(sizes.size(), 0);
    if (total == 0) return out;
    std::vector<std::pair<std::size_t, std::size_t>> rem;  // (remainder numerator, group)
    std::size_t given = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        const std::size_t num = quota * sizes[g];
        out[g] = num / total;
        given += out[g];
        rem.emplace_back(num % total, g);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; given < quota && i < rem.size(); ++i, ++given) ++out[rem[i].second];
    return out;
}

SampledProfile sample_profile(const BenignProfile& profile, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sampling ratio must be in (0, 1]");
    SampledProfile out;
    out.ratio = ratio;
    out.seed = seed;
    for (const auto& [exec, pairs] : profile.store) {
        std::vector<std::pair<std::string, std::uint64_t>> ranked(pairs.begin(), pairs.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        const auto sizes = tercile_sizes(ranked.size());
        const auto quotas = apportion(sample_quota(ranked.size(), ratio), sizes);
        Rng rng(mix_seed(seed, text::fnv1a64(exec)));
        auto& dst = out.store[exec];
        std::size_t offset = 0;
        for (std::size_t g = 0; g < sizes.size(); ++g) {
            for (auto i : rng.sample_without_replacement(sizes[g], quotas[g])) {
                const auto& [rest, freq] = ranked[offset + i];
                dst.emplace(rest, freq);
            }
            offset += sizes[g];
        }
    }
    return out;
}

nlohmann::ordered_json store_to_json(const Store& store) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [exec, pairs] : store) {
        std::vector<std::pair<std::string, std::uint64_t>> ranked(pairs.begin(), pairs.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        nlohmann::ordered_json inner = nlohmann::ordered_json::object();
        for (const auto& [rest, freq] : ranked) inner[rest] = freq;
        j[exec] = std::move(inner);
    }
    return j;
}

Store store_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("profile must be a JSON object of objects");
    Store s;
    for (const auto& [exec, inner] : j.items()) {
        if (exec.empty() || !inner.is_object()) throw SchemaError("profile entry '" + exec + "' is not an object");
        for (const auto& [rest, freq] : inner.items()) {
            if (!freq.is_number_unsigned() || freq.get<std::uint64_t>() == 0) {
                throw SchemaError("profile frequency for '" + exec + "' / '" + rest + "' must be a positive integer");
            }
            s[exec][rest] = freq.get<std::uint64_t>();
        }
    }
    return s;
}

std::string match_profile(const Store& sampled, const std::vector<Event>& events) {
    std::set<std::string> used;
    for (const auto& e : events) {
        if (auto k = profile_key(e)) used.insert(k->exec);
    }
    Store picked;
    for (const auto& exec : used) {
        auto it = sampled.find(exec);
        if (it != sampled.end()) picked.emplace(exec, it->second);
    }
    if (picked.empty()) return "{}";
    return store_to_json(picked).dump(2);
}

}  // namespace shield::profile
