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

#include "shield/scenario.hpp"

#include "shield/error.hpp"
#include "shield/ingest.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace shield::scenario {

namespace {

struct Action {
    const char* type;
    const char* file;  // empty when the object is a socket
    const char* ip;
};

struct ProcessTemplate {
    const char* name;
    const char* command_line;
    const char* process_path;
    unsigned weight;
    unsigned instances;
    std::vector<Action> actions;
};

const std::vector<ProcessTemplate>& templates() {
    static const std::vector<ProcessTemplate> t = {
        {"cron", "/usr/sbin/cron -f", "/usr/sbin/cron", 6, 1,
         {{"EVENT_READ", "/etc/crontab", ""},
          {"EVENT_READ", "/var/spool/cron/crontabs/root", ""},
          {"EVENT_OPEN", "/etc/cron.d/sysstat", ""}}},
        {"save-entropy", "sh /usr/libexec/save-entropy", "/bin/sh", 8, 2,
         {{"EVENT_READ", "/dev/random", ""},
          {"EVENT_WRITE", "/var/db/entropy/saved-entropy.1", ""},
          {"EVENT_READ", "/etc/rc.conf", ""}}},
        {"vmstat", "vmstat 1", "/usr/bin/vmstat", 12, 1,
         {{"EVENT_READ", "/dev/hpet0", ""}, {"EVENT_READ", "/proc/meminfo", ""}, {"EVENT_READ", "/proc/stat", ""}}},
        {"sleep", "sleep 60", "/bin/sleep", 10, 3, {{"EVENT_READ", "/dev/hpet0", ""}, {"EVENT_MMAP", "/lib/libc.so.6", ""}}},
        {"sshd", "/usr/sbin/sshd -D", "/usr/sbin/sshd", 6, 1,
         {{"EVENT_ACCEPT", "", "10.0.0.5:22"},
          {"EVENT_READ", "/etc/ssh/sshd_config", ""},
          {"EVENT_READ", "/etc/passwd", ""}}},
        {"firefox", "/usr/lib/firefox/firefox", "/usr/lib/firefox/firefox", 14, 2,
         {{"EVENT_CONNECT", "", "93.184.216.34:443"},
          {"EVENT_CONNECT", "", "142.250.72.14:443"},
          {"EVENT_READ", "/home/admin/.mozilla/firefox/default/places.sqlite", ""},
          {"EVENT_WRITE", "/home/admin/.cache/mozilla/firefox/default/cache2/index", ""},
          {"EVENT_MMAP", "/usr/lib/firefox/libxul.so", ""}}},
        {"journald", "/lib/systemd/systemd-journald", "/lib/systemd/systemd-journald", 9, 1,
         {{"EVENT_WRITE", "/var/log/journal/system.journal", ""}, {"EVENT_READ", "/run/systemd/journal/socket", ""}}},
        {"apt", "apt-get update", "/usr/bin/apt-get", 3, 1,
         {{"EVENT_CONNECT", "", "91.189.91.38:80"},
          {"EVENT_WRITE", "/var/lib/apt/lists/archive.ubuntu.com_dists_jammy_InRelease", ""},
          {"EVENT_READ", "/etc/apt/sources.list", ""}}},
        {"agent", "/usr/bin/python3 /opt/monitor/agent.py", "/usr/bin/python3", 7, 1,
         {{"EVENT_READ", "/proc/loadavg", ""},
          {"EVENT_CONNECT", "", "10.0.0.12:9100"},
          {"EVENT_READ", "/opt/monitor/agent.yaml", ""}}},
        {"nginx", "nginx: worker process", "/usr/sbin/nginx", 10, 2,
         {{"EVENT_READ", "/var/www/html/index.html", ""},
          {"EVENT_WRITE", "/var/log/nginx/access.log", ""},
          {"EVENT_ACCEPT", "", "10.0.0.40:80"}}},
        {"ls", "ls -la /home/admin", "/bin/ls", 2, 1,
         {{"EVENT_READ", "/home/admin", ""}, {"EVENT_MMAP", "/lib/libc.so.6", ""}}},
        {"bash", "/bin/bash", "/bin/bash", 3, 1,
         {{"EVENT_READ", "/home/admin/.bashrc", ""}, {"EVENT_WRITE", "/home/admin/.bash_history", ""}}},
    };
    return t;
}

std::string object_id_for(const std::string& key) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "obj-%012llx",
                  static_cast<unsigned long long>(text::fnv1a64(key) & 0xffffffffffffULL));
    return buf;
}

std::string random_word(Rng& rng, std::size_t min_len, std::size_t max_len) {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
    return s;
}

}  // namespace

EventLog generate_benign(const BenignOptions& opt) {
    Rng rng(mix_seed(opt.seed, 0x62656e69ULL));
    const auto& ts = templates();
    unsigned total_weight = 0;
    for (const auto& t : ts) total_weight += t.weight;

    EventLog log;
    log.label = opt.label;
    log.source_tag = "synthetic-benign";
    log.events.reserve(opt.count);
    for (std::size_t i = 0; i < opt.count; ++i) {
        auto pick = rng.below(total_weight);
        const ProcessTemplate* t = &ts.front();
        for (const auto& cand : ts) {
            if (pick < cand.weight) {
                t = &cand;
                break;
            }
            pick -= cand.weight;
        }
        const Action& a = t->actions[rng.below(t->actions.size())];
        Event e;
        e.subject_id = std::string("proc-") + t->name + "-" + std::to_string(rng.below(t->instances));
        e.event_type = a.type;
        e.command_line = t->command_line;
        e.process_path = t->process_path;
        e.file_path = a.file;
        e.ip_address = a.ip;
        e.object_id = object_id_for(e.file_path.empty() ? e.ip_address : e.file_path);
        e.timestamp = opt.start + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(std::max<Timestamp>(opt.span, 1))));
        log.events.push_back(std::move(e));
    }
    std::stable_sort(log.events.begin(), log.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    return log;
}

std::vector<Event> random_string_events(std::size_t n, Timestamp start, Timestamp span, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x72616e64ULL));
    static const char* const types[] = {"EVENT_EXECUTE", "EVENT_WRITE", "EVENT_CONNECT"};
    std::vector<Event> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Event e;
        const std::string exe = random_word(rng, 6, 12);
        e.subject_id = "proc-rand-" + std::to_string(i);
        e.event_type = types[rng.below(3)];
        e.command_line = "./" + exe + " -" + random_word(rng, 1, 3) + " " + random_word(rng, 8, 16);
        e.process_path = "/tmp/" + random_word(rng, 4, 8) + "/" + exe;
        if (e.event_type == "EVENT_CONNECT") {
            e.ip_address = std::to_string(11 + rng.below(200)) + "." + std::to_string(rng.below(256)) + "." +
                           std::to_string(rng.below(256)) + "." + std::to_string(1 + rng.below(254)) + ":" +
                           std::to_string(1024 + rng.below(60000));
        } else {
            e.file_path = "/var/tmp/." + random_word(rng, 5, 10) + "/" + random_word(rng, 5, 10);
        }
        e.object_id = object_id_for(e.file_path.empty() ? e.ip_address : e.file_path);
        e.timestamp = start + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(std::max<Timestamp>(span, 1))));
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

constexpr const char* kShell = "/bin/sh -c ./gtcache &>/dev/null &";
constexpr const char* kImplant = "./gtcache";
constexpr const char* kImplantPath = "/home/admin/Downloads/firefox/gtcache";
constexpr const char* kArchive = "/home/admin/Downloads/firefox/update.test";
constexpr const char* kNativeHost = "/etc/firefox/native-messaging-hosts/gtcache";
constexpr const char* kC2 = "146.153.68.151:443";

const char* const kEvidenceResponse = R"(Two command lines stand out from the routine services on this host.

1. `/bin/sh -c ./gtcache &>/dev/null &` starts a program from the current directory in the background and throws away all of its output.
2. `./gtcache` runs from the browser's download folder, which no service on this host does.

Everything else (cron, vmstat, sshd, nginx workers, the monitoring agent) matches the usual cadence.
)";

const char* const kInvestigationResponse = R"(**Attack Narrative:** Half an hour into the afternoon a shell ran "./gtcache" out of the Firefox download
folder, detached and silenced. The binary read the downloaded "update.test" archive, opened a connection to
146.153.68.151 and kept exchanging data with it. It then dropped a file named gtcache into the system-wide
Firefox native messaging directory so the browser would start it again.

**Key Steps:**
1) Execution: "/bin/sh -c ./gtcache &>/dev/null &" launched the downloaded binary with output suppressed.
2) Command and Control: repeated CONNECT, SENDTO and RECVFROM with 146.153.68.151.
3) Persistence: "/etc/firefox/native-messaging-hosts/gtcache" was written and reopened.
4) Exfiltration: outbound SENDTO traffic to the same address after the persistence step.

**IOCs:**
- **IPs**: 146.153.68.151 (remote peer)
- **Processes**: "/bin/sh -c ./gtcache &>/dev/null &", "./gtcache"
- **Files**: "/home/admin/Downloads/firefox/update.test", "/etc/firefox/native-messaging-hosts/gtcache"
)";

struct AttackStep {
    Timestamp offset;  // from the start of the attack
    bool shell;        // subject is the launching shell, else the implant
    const char* type;
    const char* file;
    const char* ip;
    bool executes_implant;
};

const std::vector<AttackStep>& attack_steps() {
    constexpr Timestamp s = kMicrosPerSecond;
    static const std::vector<AttackStep> steps = {
        {0, true, "EVENT_READ", kArchive, "", false},
        {4 * s, true, "EVENT_EXECUTE", kImplantPath, "", true},
        {9 * s, false, "EVENT_MMAP", kArchive, "", false},
        {15 * s, false, "EVENT_READ", kArchive, "", false},
        {40 * s, false, "EVENT_CONNECT", "", kC2, false},
        {42 * s, false, "EVENT_SENDTO", "", kC2, false},
        {43 * s, false, "EVENT_RECVFROM", "", kC2, false},
        {95 * s, false, "EVENT_READ", kArchive, "", false},
        {180 * s, false, "EVENT_OPEN", kNativeHost, "", false},
        {181 * s, false, "EVENT_WRITE", kNativeHost, "", false},
        {183 * s, false, "EVENT_WRITE", kNativeHost, "", false},
        {240 * s, false, "EVENT_SENDTO", "", kC2, false},
        {241 * s, false, "EVENT_RECVFROM", "", kC2, false},
        {420 * s, false, "EVENT_READ", kNativeHost, "", false},
        {425 * s, false, "EVENT_WRITE", kNativeHost, "", false},
        {600 * s, false, "EVENT_CONNECT", "", kC2, false},
        {601 * s, false, "EVENT_SENDTO", "", kC2, false},
        {602 * s, false, "EVENT_SENDTO", "", kC2, false},
        {604 * s, false, "EVENT_RECVFROM", "", kC2, false},
        {900 * s, false, "EVENT_SENDTO", "", kC2, false},
    };
    return steps;
}

}  // namespace

AttackScenario gtcache_scenario(const AttackOptions& opt) {
    const auto& steps = attack_steps();
    if (opt.test_events < steps.size()) throw ConfigError("testing log too small for the attack");
    const Timestamp start = 1'700'000'000LL * kMicrosPerSecond;
    const Timestamp span = 6LL * 60 * kMicrosPerMinute;

    AttackScenario sc;
    sc.train = generate_benign({opt.train_events, start - 24LL * 60 * kMicrosPerMinute, span, opt.seed, LogLabel::training});
    sc.train.source_tag = "gtcache-train";

    auto benign = generate_benign({opt.test_events - steps.size(), start, span, mix_seed(opt.seed, 1), LogLabel::testing});
    const std::string shell_id = "proc-gtcache-launcher", implant_id = "proc-gtcache";
    const Timestamp attack_start = start + (3LL * 60 + 5) * kMicrosPerMinute;

    std::vector<std::pair<Event, bool>> merged;
    merged.reserve(opt.test_events);
    for (auto& e : benign.events) merged.emplace_back(std::move(e), false);
    for (const auto& st : steps) {
        Event e;
        e.subject_id = st.shell ? shell_id : implant_id;
        e.command_line = st.shell ? kShell : kImplant;
        e.process_path = st.shell ? "/bin/sh" : kImplantPath;
        e.event_type = st.type;
        e.file_path = st.file;
        e.ip_address = st.ip;
        e.object_id = st.executes_implant ? implant_id : object_id_for(e.file_path.empty() ? e.ip_address : e.file_path);
        e.timestamp = attack_start + st.offset;
        merged.emplace_back(std::move(e), true);
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const auto& a, const auto& b) { return a.first.timestamp < b.first.timestamp; });

    sc.test.label = LogLabel::testing;
    sc.test.source_tag = "gtcache-test";
    for (std::size_t i = 0; i < merged.size(); ++i) {
        if (merged[i].second) sc.truth.attack_event_indices.insert(i);
        sc.test.events.push_back(std::move(merged[i].first));
    }

    sc.truth.attack_entities = {kShell, kImplant, kArchive, kNativeHost, text::strip_port(kC2)};
    sc.truth.tactic_steps = {
        {"Initial Access", "the user downloaded update.test, which carried the gtcache binary"},
        {"Execution", "a background shell started ./gtcache with its output discarded"},
        {"Command and Control", "gtcache connected to 146.153.68.151 and exchanged data repeatedly"},
        {"Persistence", "gtcache installed itself as a Firefox native messaging host under /etc/firefox"},
        {"Exfiltration", "data was sent to 146.153.68.151 after persistence was in place"},
    };
    sc.truth.narrative =
        "A downloaded archive delivered the gtcache binary, which a shell ran in the background. gtcache beaconed "
        "to 146.153.68.151, sent data to it and registered itself as a Firefox native messaging host to survive "
        "restarts.";
    sc.environment =
        "an Ubuntu 22.04 desktop used by one administrator; it runs nginx, sshd, cron, a Python monitoring agent "
        "and Firefox";
    sc.evidence_response = kEvidenceResponse;
    sc.investigation_response = kInvestigationResponse;
    return sc;
}

void write_scenario(const AttackScenario& s, const std::string& dir) {
    text::write_file(dir + "/train.jsonl", ingest::serialize_jsonl(s.train));
    text::write_file(dir + "/test.jsonl", ingest::serialize_jsonl(s.test));
    text::write_file(dir + "/ground_truth.json", s.truth.to_json().dump(2) + "\n");
    text::write_file(dir + "/environment.txt", s.environment + "\n");
    text::write_file(dir + "/mock/evidence.txt", s.evidence_response);
    text::write_file(dir + "/mock/investigation.txt", s.investigation_response);
}

}  // namespace shield::scenario
