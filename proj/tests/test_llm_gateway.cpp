#include <doctest.h>

#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/llm_gateway.hpp"
#include "test_support.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT  // same configuration as the library
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <deque>
#include <thread>

using namespace sevagent;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

ChatRequest user_request(const std::string& text, BackendKind backend = BackendKind::Mock) {
    ChatRequest r;
    r.backend = backend;
    r.model = "mock";
    r.messages = {{Role::System, "You score incidents."}, {Role::User, text}};
    return r;
}

std::string completion_body(const std::string& content) {
    nlohmann::json doc;
    doc["choices"] = nlohmann::json::array(
        {{{"index", 0}, {"finish_reason", "stop"}, {"message", {{"role", "assistant"}, {"content", content}}}}});
    doc["usage"] = {{"prompt_tokens", 10}, {"completion_tokens", 3}, {"total_tokens", 13}};
    return doc.dump();
}

// Replays canned HTTP responses and records what was sent.
class ScriptedTransport : public HttpTransport {
public:
    explicit ScriptedTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}

    HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override {
        ++posts;
        last_url = url;
        last_headers = headers;
        last_body = body;
        if (script_.empty()) return {0, "", {}, "script exhausted"};
        auto r = script_.front();
        script_.pop_front();
        return r;
    }

    int posts = 0;
    std::string last_url, last_body;
    std::vector<std::pair<std::string, std::string>> last_headers;

private:
    std::deque<HttpResponse> script_;
};

HttpResponse rate_limited(const std::string& retry_after = "") {
    HttpResponse r{429, "slow down", {}, ""};
    if (!retry_after.empty()) r.headers["retry-after"] = retry_after;
    return r;
}

}  // namespace

TEST_CASE("mock fixtures are looked up by prompt digest") {
    const auto req = user_request("Incident 7. Reply with SCORE.");
    MockRules rules;
    rules.strict = true;
    rules.fixtures[prompt_digest(req.messages)] = "SCORE: 3";
    testing::MockHarness mock(rules);
    CHECK(mock.gateway.complete(req).content == "SCORE: 3");
}

TEST_CASE("a repeated request is served from the cache") {
    testing::MockHarness mock(R"({"rules": [{"contains": ["Incident"], "reply": "SCORE: 1"}]})");
    const auto req = user_request("Incident 8");
    mock.gateway.complete(req);
    const auto calls = mock.backend->calls();
    CHECK(mock.gateway.complete(req).content == "SCORE: 1");
    CHECK(mock.backend->calls() == calls);
    CHECK(mock.gateway.stats().cache_hits == 1);
    CHECK(mock.gateway.stats().requests == 2);
}

TEST_CASE("mock rule engine") {
    const char* rules = R"({"rules": [
        {"contains": ["Primary Body Part: head"], "excludes": ["helmet"], "reply": "SCORE: 3"},
        {"contains": ["Primary Body Part: head"], "reply": "SCORE: 2"}]})";
    const auto parsed = MockRules::from_json_text(rules);
    CHECK(MockBackend::evaluate(parsed, user_request("- Primary Body Part: head\n")).content == "SCORE: 3");
    CHECK(MockBackend::evaluate(parsed, user_request("- Primary Body Part: head\nhelmet worn")).content == "SCORE: 2");

    SUBCASE("strict mode refuses unknown prompts") {
        auto strict = parsed;
        strict.strict = true;
        CHECK(code_of([&] { MockBackend::evaluate(strict, user_request("something else")); }) == ErrorCode::NoFixture);
    }
    SUBCASE("lenient mode answers neutrally in the requested format") {
        CHECK(MockBackend::evaluate(parsed, user_request("end with \"SCORE: <integer 1..4>\"")).content == "SCORE: 2");
        CHECK(MockBackend::evaluate(parsed, user_request("end with \"SEVERITY: <integer 1..4>\"")).content ==
              "SEVERITY: 2");
        CHECK(MockBackend::evaluate(parsed, user_request("a line \"relevant: <yes|no>\"")).content == "relevant: yes");
    }
}

TEST_CASE("cache keys depend only on the ordered content") {
    auto a = user_request("same text");
    auto b = user_request("same");
    b.messages[1].content += " text";
    CHECK(cache_key(a) == cache_key(b));
    auto c = a;
    std::swap(c.messages[0], c.messages[1]);
    CHECK(cache_key(a) != cache_key(c));
    auto d = a;
    d.temperature = 0.5;
    CHECK(cache_key(a) != cache_key(d));
    auto e = a;
    e.backend = BackendKind::Remote;
    CHECK(cache_key(a) != cache_key(e));
}

TEST_CASE("retry policy") {
    RetryPolicy p;
    std::chrono::milliseconds prev{0};
    for (int attempt = 1; attempt <= 10; ++attempt) {
        const auto next = p.delay_after(attempt, prev, 0.0);
        CHECK(next >= prev);
        CHECK(next <= p.max_delay);
        prev = next;
    }
    CHECK(p.delay_after(1, std::chrono::milliseconds{0}, 3.0) >= std::chrono::milliseconds{3000});
    CHECK(p.delay_after(2, std::chrono::milliseconds{5000}, 0.0) >= std::chrono::milliseconds{5000});
}

TEST_CASE("remote backend retries rate limits with nondecreasing backoff") {
    auto transport = std::make_unique<ScriptedTransport>(std::deque<HttpResponse>{
        rate_limited(), rate_limited("2"), {200, completion_body("SCORE: 4"), {}, ""}});
    auto* script = transport.get();
    auto backend = std::make_shared<RemoteBackend>("https://example.invalid/v1/", "secret", std::move(transport));
    Gateway gateway(backend, std::make_shared<ResponseCache>());
    std::vector<std::chrono::milliseconds> delays;
    gateway.set_sleeper([&](std::chrono::milliseconds d) { delays.push_back(d); });

    const auto response = gateway.complete(gateway.make_request({{Role::User, "hello"}}));
    CHECK(response.content == "SCORE: 4");
    REQUIRE(response.usage.has_value());
    CHECK(response.usage->total_tokens == 13);
    CHECK(script->posts == 3);
    CHECK(gateway.stats().backend_calls == 3);
    CHECK(gateway.stats().retries == 2);
    REQUIRE(delays.size() == 2);
    CHECK(delays[1] >= delays[0]);
    CHECK(delays[1] >= std::chrono::milliseconds{2000});

    CHECK(script->last_url == "https://example.invalid/v1/chat/completions");
    bool auth = false;
    for (const auto& [k, v] : script->last_headers) auth |= k == "Authorization" && v == "Bearer secret";
    CHECK(auth);
    const auto body = nlohmann::json::parse(script->last_body);
    CHECK(body["messages"][0]["content"] == "hello");
    CHECK(body["temperature"] == 0.0);
}

TEST_CASE("the attempt budget is never exceeded") {
    auto transport = std::make_unique<ScriptedTransport>(
        std::deque<HttpResponse>{rate_limited(), rate_limited(), rate_limited(), rate_limited(), rate_limited()});
    auto* script = transport.get();
    GatewayConfig cfg;
    cfg.retry.max_attempts = 3;
    Gateway gateway(std::make_shared<RemoteBackend>("http://x", "k", std::move(transport)),
                    std::make_shared<ResponseCache>(), cfg);
    gateway.set_sleeper([](std::chrono::milliseconds) {});
    CHECK(code_of([&] { gateway.complete(gateway.make_request({{Role::User, "q"}})); }) == ErrorCode::RateLimited);
    CHECK(script->posts == 3);
}

TEST_CASE("remote error classification") {
    auto run = [](std::deque<HttpResponse> script, const std::string& key = "k") {
        Gateway gateway(std::make_shared<RemoteBackend>("http://x", key, std::make_unique<ScriptedTransport>(script)),
                        std::make_shared<ResponseCache>());
        gateway.set_sleeper([](std::chrono::milliseconds) {});
        return code_of([&] { gateway.complete(gateway.make_request({{Role::User, "q"}})); });
    };
    CHECK(run({{400, "bad request", {}, ""}}) == ErrorCode::Transport);
    CHECK(run({{200, "not json", {}, ""}}) == ErrorCode::Malformed);
    CHECK(run({{200, R"({"choices": []})", {}, ""}}) == ErrorCode::Malformed);
    CHECK(run({}, "") == ErrorCode::CredentialMissing);
}

TEST_CASE("persisted cache survives a restart and skips corrupt lines") {
    testing::TempDir dir("cache");
    const auto path = dir / "cache.jsonl";
    {
        ResponseCache cache(path);
        cache.insert("k1", ChatResponse{"SCORE: 1", "stop", {}});
        cache.insert("k2", ChatResponse{"SCORE: 2", "stop", {}});
    }
    write_text_file(path, read_text_file(path) + "{not json\n");
    testing::LogCapture log;
    ResponseCache reloaded(path);
    CHECK(reloaded.size() == 2);
    CHECK(reloaded.skipped_lines() == 1);
    CHECK(reloaded.lookup("k2")->content == "SCORE: 2");
    CHECK(log.warned_about("corrupt"));
}

TEST_CASE("gateway rejects malformed requests and mismatched backends") {
    testing::MockHarness mock(R"({"rules": []})");
    ChatRequest empty;
    CHECK(code_of([&] { mock.gateway.complete(empty); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { mock.gateway.complete(user_request("x", BackendKind::Remote)); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("concurrent requests respect the in-flight bound") {
    class SlowBackend : public ChatBackend {
    public:
        ChatResponse send(const ChatRequest& r) override {
            const int now = ++active;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {}
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --active;
            return {r.messages.back().content, "stop", {}};
        }
        BackendKind kind() const override { return BackendKind::Mock; }
        std::string identity() const override { return "slow"; }
        std::atomic<int> active{0}, peak{0};
    };
    auto backend = std::make_shared<SlowBackend>();
    GatewayConfig cfg;
    cfg.max_in_flight = 2;
    Gateway gateway(backend, std::make_shared<ResponseCache>(), cfg);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&, i] { gateway.complete(user_request("r" + std::to_string(i))); });
    for (auto& t : threads) t.join();
    CHECK(backend->peak.load() <= 2);
    CHECK(gateway.stats().backend_calls == 8);
}

TEST_CASE("the HTTP client talks to a local OpenAI-compatible server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(completion_body("echo: " + body["messages"][0]["content"].get<std::string>()),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = std::make_shared<RemoteBackend>("http://127.0.0.1:" + std::to_string(port) + "/v1", "local-key",
                                                   make_http_transport(std::chrono::seconds(5)));
    Gateway gateway(backend, std::make_shared<ResponseCache>());
    gateway.set_sleeper([](std::chrono::milliseconds) {});
    const auto response = gateway.complete(gateway.make_request({{Role::User, "ping"}}));
    server.stop();
    worker.join();

    CHECK(response.content == "echo: ping");
    CHECK(hits.load() == 2);
    CHECK(seen_auth == "Bearer local-key");
}
