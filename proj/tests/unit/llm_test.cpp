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
#include "shield/llm.hpp"
#include "shield/text.hpp"
#include "test_support.hpp"

#include <httplib.h>
#include <doctest.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace shield;
using namespace shield::llm;

namespace {

// Local chat-completions stub running on a background thread.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string reply(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST_SUITE("llm") {

TEST_CASE("think blocks are removed") {
    CHECK(strip_think("<think>maybe \"fluxbox\"</think>\nAnswer") == "\nAnswer\n");
    const std::string r =
        "**Think:** Okay, the \"fluxbox\" process looks normal.\nMore musing.\n\n"
        "**Attack Narrative:** bad things\n**IOCs:**\n- IPs: 1.2.3.4\n";
    const auto s = strip_think(r);
    CHECK(s.find("fluxbox") == std::string::npos);
    CHECK(s.find("Attack Narrative") != std::string::npos);
    CHECK(s.find("1.2.3.4") != std::string::npos);
    CHECK(strip_think("Think: hmm\nstill thinking\n\n- \"evil\"") == "- \"evil\"\n");
    CHECK(strip_think("plain answer") == "plain answer\n");
}

TEST_CASE("mock provider prefers the digest file, then the purpose file") {
    testing::TempDir dir;
    MockProvider mock(dir.path().string());
    CHECK_THROWS_AS(mock.complete("hello", "evidence"), ProviderError);
    dir.write("evidence.txt", "generic");
    CHECK(mock.complete("hello", "evidence").text == "generic");
    dir.write(text::sha256_hex("hello") + ".txt", "exact");
    const auto c = mock.complete("hello", "evidence");
    CHECK(c.text == "exact");
    CHECK(c.meta.prompt_digest == text::sha256_hex("hello"));
    CHECK(c.meta.model_id == "scripted-mock");
    CHECK(mock.calls() == 3);
    CHECK_THROWS_AS(MockProvider("/nonexistent/dir"), ProviderError);
}

TEST_CASE("http provider sends model, messages, temperature 0 and the bearer key") {
    nlohmann::json seen;
    std::string auth;
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(reply("- \"./gtcache\""), "application/json");
    });
    ::setenv("SHIELD_TEST_KEY", "sk-test", 1);
    HttpConfig cfg;
    cfg.endpoint = server.url();
    cfg.model = "test-model";
    cfg.api_key_env = "SHIELD_TEST_KEY";
    cfg.timeout_seconds = 5;
    HttpChatProvider p(cfg);
    const auto c = p.complete("the prompt", "evidence");
    CHECK(c.text == "- \"./gtcache\"");
    CHECK(c.meta.model_id == "test-model");
    CHECK(seen["model"] == "test-model");
    CHECK(seen["temperature"] == 0);
    REQUIRE(seen["messages"].size() == 1);
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(seen["messages"][0]["content"] == "the prompt");
    CHECK(auth == "Bearer sk-test");
    CHECK(server.hits == 1);
}

TEST_CASE("http provider retries a server error exactly once") {
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("busy", "text/plain");
    });
    HttpConfig cfg;
    cfg.endpoint = server.url();
    cfg.model = "m";
    cfg.timeout_seconds = 5;
    HttpChatProvider p(cfg);
    CHECK_THROWS_AS(p.complete("x", "evidence"), ProviderError);
    CHECK(server.hits == 2);
}

TEST_CASE("http provider recovers when the retry succeeds") {
    StubServer* self = nullptr;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        if (self->hits == 1) {
            res.status = 500;
        } else {
            res.set_content(reply("ok"), "application/json");
        }
    });
    self = &server;
    HttpConfig cfg;
    cfg.endpoint = server.url();
    cfg.model = "m";
    cfg.timeout_seconds = 5;
    HttpChatProvider p(cfg);
    CHECK(p.complete("x", "investigation").text == "ok");
    CHECK(server.hits == 2);
}

TEST_CASE("http provider does not retry an auth failure") {
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("{\"error\":\"bad key\"}", "application/json");
    });
    HttpConfig cfg;
    cfg.endpoint = server.url();
    cfg.model = "m";
    cfg.timeout_seconds = 5;
    HttpChatProvider p(cfg);
    CHECK_THROWS_AS(p.complete("x", "evidence"), ProviderError);
    CHECK(server.hits == 1);
}

TEST_CASE("provider specs") {
    testing::TempDir dir;
    CHECK(make_provider("mock:" + dir.path().string())->model_id() == "scripted-mock");
    HttpConfig cfg;
    cfg.model = "gpt";
    CHECK(make_provider("http://localhost:1/v1/chat/completions", cfg)->model_id() == "gpt");
    CHECK_THROWS_AS(make_provider("carrier-pigeon"), ConfigError);
    CHECK_THROWS_AS(make_provider("http://localhost:1/x"), ConfigError);  // no model
}

}  // TEST_SUITE
