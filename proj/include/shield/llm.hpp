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

#include <atomic>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

namespace shield::llm {

struct ProviderMeta {
    std::string model_id;
    std::string prompt_digest;  // sha256 of the prompt text
};

struct Completion {
    std::string text;
    ProviderMeta meta;
};

// A chat model answering a single-turn prompt. `purpose` names the calling
// stage ("evidence", "investigation") for logging and scripted lookup.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual Completion complete(const std::string& prompt, std::string_view purpose) = 0;
    virtual std::string model_id() const = 0;
    // Rough token budget for one prompt; 0 means unlimited.
    virtual std::size_t token_budget() const { return 0; }
};

// Replays responses from a directory. Lookup order: <sha256>.txt, then
// <purpose>.txt. Throws ProviderError when neither exists.
class MockProvider : public LlmProvider {
public:
    explicit MockProvider(std::string directory, std::size_t token_budget = 0);

    Completion complete(const std::string& prompt, std::string_view purpose) override;
    std::string model_id() const override { return "scripted-mock"; }
    std::size_t token_budget() const override { return budget_; }

    // Writes every prompt it sees to <dir>/<sha256>.prompt.txt.
    void set_record_prompts(bool on) { record_ = on; }
    std::size_t calls() const { return calls_; }

private:
    std::string dir_;
    std::size_t budget_;
    bool record_ = false;
    std::size_t calls_ = 0;
};

struct HttpConfig {
    std::string endpoint;  // full URL of a chat-completions route
    std::string model;
    std::string api_key_env = "SHIELD_LLM_API_KEY";
    int timeout_seconds = 300;
    int max_in_flight = 4;
    std::size_t token_budget = 60000;
};

// JSON chat-completions client: {model, messages, temperature: 0}. Network
// failures, 429 and 5xx are retried once; other statuses fail immediately.
class HttpChatProvider : public LlmProvider {
public:
    explicit HttpChatProvider(HttpConfig config);

    Completion complete(const std::string& prompt, std::string_view purpose) override;
    std::string model_id() const override { return config_.model; }
    std::size_t token_budget() const override { return config_.token_budget; }

private:
    HttpConfig config_;
    std::string scheme_host_port_;
    std::string path_;
    std::unique_ptr<std::counting_semaphore<64>> in_flight_;
};

// "mock:<dir>" or "http:<url>" (model and key taken from the config fields).
std::unique_ptr<LlmProvider> make_provider(const std::string& spec, const HttpConfig& http = {});

// Removes <think>...</think> blocks and a leading "Think:" section that runs
// up to the first "Attack Narrative" heading.
std::string strip_think(std::string_view response);

}  // namespace shield::llm
