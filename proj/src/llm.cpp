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

#include "shield/llm.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <regex>

namespace shield::llm {

namespace fs = std::filesystem;

namespace {

const char* const kSectionHeadings[] = {"attack narrative", "key steps", "iocs", "evidence", "answer",
                                        "suspicious commands"};

// Line text with list markers, emphasis and trailing colon removed, lowercased.
std::string heading_key(std::string_view line) {
    std::string s = text::to_lower(text::trim(line));
    std::size_t i = 0;
    while (i < s.size() && (s[i] == '-' || s[i] == '*' || s[i] == '#' || s[i] == ' ' || s[i] == '>')) ++i;
    s.erase(0, i);
    s.erase(std::remove(s.begin(), s.end(), '*'), s.end());
    return std::string(text::trim(s));
}

bool starts_section(std::string_view line) {
    const auto key = heading_key(line);
    for (const char* h : kSectionHeadings) {
        if (key.rfind(h, 0) == 0) return true;
    }
    return false;
}

}  // namespace

std::string strip_think(std::string_view response) {
    std::string s(response);
    static const std::regex closed(R"(<think>[\s\S]*?</think>)", std::regex::icase);
    s = std::regex_replace(s, closed, "");
    static const std::regex stray(R"(</?think>)", std::regex::icase);
    s = std::regex_replace(s, stray, "");

    auto lines = text::split_lines(s);
    std::size_t think = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (heading_key(lines[i]).rfind("think:", 0) == 0) {
            think = i;
            break;
        }
    }
    std::size_t resume = lines.size();
    if (think < lines.size()) {
        // The block runs to the next section heading, or failing that to the first blank line.
        for (std::size_t i = think + 1; i < lines.size() && resume == lines.size(); ++i) {
            if (starts_section(lines[i])) resume = i;
        }
        if (resume == lines.size()) {
            for (std::size_t i = think + 1; i < lines.size(); ++i) {
                if (text::trim(lines[i]).empty()) {
                    resume = i + 1;
                    break;
                }
            }
        }
    }
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i >= think && i < resume) continue;
        out += lines[i];
        out += '\n';
    }
    return out;
}

MockProvider::MockProvider(std::string directory, std::size_t token_budget)
    : dir_(std::move(directory)), budget_(token_budget) {
    if (!fs::is_directory(dir_)) throw ProviderError("mock response directory not found: " + dir_);
}

Completion MockProvider::complete(const std::string& prompt, std::string_view purpose) {
    ++calls_;
    Completion c;
    c.meta.model_id = model_id();
    c.meta.prompt_digest = text::sha256_hex(prompt);
    if (record_) text::write_file((fs::path(dir_) / (c.meta.prompt_digest + ".prompt.txt")).string(), prompt);
    const fs::path exact = fs::path(dir_) / (c.meta.prompt_digest + ".txt");
    const fs::path fallback = fs::path(dir_) / (std::string(purpose) + ".txt");
    if (fs::exists(exact)) {
        c.text = text::read_file(exact.string());
    } else if (!purpose.empty() && fs::exists(fallback)) {
        spdlog::debug("mock: no response for digest {}, using {}", c.meta.prompt_digest, fallback.string());
        c.text = text::read_file(fallback.string());
    } else {
        throw ProviderError("mock: no scripted response for prompt " + c.meta.prompt_digest + " in " + dir_);
    }
    return c;
}

HttpChatProvider::HttpChatProvider(HttpConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url)) throw ConfigError("invalid provider endpoint: " + config_.endpoint);
    scheme_host_port_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
    if (config_.model.empty()) throw ConfigError("http provider needs a model name");
    const int cap = std::clamp(config_.max_in_flight, 1, 64);
    in_flight_ = std::make_unique<std::counting_semaphore<64>>(cap);
}

Completion HttpChatProvider::complete(const std::string& prompt, std::string_view purpose) {
    Completion c;
    c.meta.model_id = config_.model;
    c.meta.prompt_digest = text::sha256_hex(prompt);

    const char* key = std::getenv(config_.api_key_env.c_str());
    nlohmann::json body{{"model", config_.model},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                        {"temperature", 0}};
    httplib::Headers headers;
    if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);

    in_flight_->acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{*in_flight_};

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        httplib::Client cli(scheme_host_port_);
        cli.set_connection_timeout(config_.timeout_seconds, 0);
        cli.set_read_timeout(config_.timeout_seconds, 0);
        cli.set_write_timeout(config_.timeout_seconds, 0);
        auto res = cli.Post(path_, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
        } else if (res->status == 429 || res->status >= 500) {
            last_error = "server returned status " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw ProviderError("provider returned status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        } else {
            try {
                const auto j = nlohmann::json::parse(res->body);
                const auto& content = j.at("choices").at(0).at("message").at("content");
                c.text = content.is_null() ? std::string() : content.get<std::string>();
                return c;
            } catch (const nlohmann::json::exception& e) {
                throw ProviderError(std::string("malformed provider response: ") + e.what());
            }
        }
        spdlog::warn("{} request attempt {} failed: {}", purpose, attempt + 1, last_error);
    }
    throw ProviderError(last_error);
}

std::unique_ptr<LlmProvider> make_provider(const std::string& spec, const HttpConfig& http) {
    if (spec.rfind("mock:", 0) == 0) return std::make_unique<MockProvider>(spec.substr(5), http.token_budget);
    if (spec.rfind("http:", 0) == 0 && spec.rfind("http://", 0) != 0) {
        HttpConfig cfg = http;
        cfg.endpoint = spec.substr(5);
        return std::make_unique<HttpChatProvider>(cfg);
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        HttpConfig cfg = http;
        cfg.endpoint = spec;
        return std::make_unique<HttpChatProvider>(cfg);
    }
    if (spec == "http") return std::make_unique<HttpChatProvider>(http);
    throw ConfigError("unknown provider spec '" + spec + "' (expected mock:<dir> or http:<url>)");
}

}  // namespace shield::llm
