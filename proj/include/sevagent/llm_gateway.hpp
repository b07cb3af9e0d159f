#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sevagent {

enum class Role { System, User, Assistant };
enum class BackendKind { Remote, Mock };

std::string_view to_string(Role role) noexcept;
std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view text);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    BackendKind backend = BackendKind::Mock;
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;

    /// Throws Error(InvalidArgument) unless messages are non-empty, the first
    /// is system or user, temperature >= 0 and max_tokens > 0.
    void validate() const;
    /// All message contents joined with blank lines; what rule matching sees.
    std::string joined_text() const;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t total_tokens = 0;
};

struct ChatResponse {
    std::string content;
    std::string finish_reason = "stop";
    std::optional<TokenUsage> usage;
};

/// Content-addressed key over (backend, model, ordered messages, temperature).
/// Computed from a canonical serialization, so only the ordered content matters.
std::string cache_key(const ChatRequest& request);

/// Digest of the ordered messages alone; keys the mock fixture table.
std::string prompt_digest(const std::vector<ChatMessage>& messages);

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_delay{500};
    double backoff_factor = 2.0;
    std::chrono::milliseconds max_delay{30000};

    /// Delay before attempt `attempt + 1`, given the failed attempt number
    /// (1-based) and any server hint. Never smaller than `previous`.
    std::chrono::milliseconds delay_after(int attempt, std::chrono::milliseconds previous,
                                          double retry_after_s) const;
};

/// One round trip to a model; implementations throw GatewayError.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual BackendKind kind() const = 0;
    /// Stable description recorded in run manifests.
    virtual std::string identity() const = 0;
};

struct MockRule {
    std::vector<std::string> contains;  // all must occur in the joined prompt
    std::vector<std::string> excludes;  // none may occur
    std::string reply;
};

struct MockRules {
    bool strict = false;
    std::map<std::string, std::string> fixtures;  // prompt_digest -> reply
    std::vector<MockRule> rules;                  // first match wins

    static MockRules from_json_text(std::string_view text);
    static MockRules load(const std::filesystem::path& path);
};

/// Deterministic offline backend: fixture lookup by prompt digest, then the
/// ordered rule list, then (lenient mode) a neutral reply in whatever answer
/// format the prompt asks for. Strict mode throws Error(NoFixture) instead.
class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(MockRules rules) : rules_(std::move(rules)) {}

    ChatResponse send(const ChatRequest& request) override;
    BackendKind kind() const override { return BackendKind::Mock; }
    std::string identity() const override;

    std::uint64_t calls() const { return calls_.load(); }

    static ChatResponse evaluate(const MockRules& rules, const ChatRequest& request);

private:
    MockRules rules_;
    std::atomic<std::uint64_t> calls_{0};
};

struct HttpResponse {
    int status = 0;  // 0 when no response was received
    std::string body;
    std::map<std::string, std::string> headers;  // lowercase names
    std::string error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body) = 0;
};

/// cpp-httplib transport; https is supported through OpenSSL.
std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(120));

/// OpenAI-compatible chat-completions client: POST <base_url>/chat/completions.
class RemoteBackend final : public ChatBackend {
public:
    RemoteBackend(std::string base_url, std::string api_key, std::unique_ptr<HttpTransport> transport);

    ChatResponse send(const ChatRequest& request) override;
    BackendKind kind() const override { return BackendKind::Remote; }
    std::string identity() const override { return "remote:" + base_url_; }

    static std::string request_body(const ChatRequest& request);
    static ChatResponse parse_response_body(const std::string& body);

private:
    std::string base_url_;
    std::string api_key_;
    std::unique_ptr<HttpTransport> transport_;
};

/// Name of the environment variable holding the bearer credential.
inline constexpr const char* kApiKeyEnv = "SEVERITY_AGENTS_API_KEY";

struct CacheEntry {
    std::string key;
    ChatResponse response;
    std::int64_t created_at = 0;  // unix seconds
};

/// Content-addressed response cache, optionally persisted as an append-only
/// JSON-lines file. Unparseable lines are skipped with a warning.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path path);

    std::optional<ChatResponse> lookup(const std::string& key) const;
    void insert(const std::string& key, const ChatResponse& response);
    std::size_t size() const;
    std::size_t skipped_lines() const { return skipped_; }

private:
    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::unordered_map<std::string, ChatResponse> entries_;
    std::size_t skipped_ = 0;
};

struct GatewayConfig {
    std::string model = "mock";
    double temperature = 0.0;
    int max_tokens = 512;
    RetryPolicy retry;
    std::size_t max_in_flight = 4;
};

struct GatewayStats {
    std::uint64_t requests = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t backend_calls = 0;  // attempts that reached the backend
    std::uint64_t retries = 0;
};

/// Thread-safe front door for every agent call: cache, retry with backoff and
/// a bound on concurrent backend calls.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using Observer = std::function<void(const ChatRequest&)>;

    Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache, GatewayConfig config = {});

    /// Request pre-filled with this gateway's backend, model and decoding settings.
    ChatRequest make_request(std::vector<ChatMessage> messages) const;

    ChatResponse complete(const ChatRequest& request);

    GatewayStats stats() const;
    const GatewayConfig& config() const { return config_; }
    const ChatBackend& backend() const { return *backend_; }

    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
    /// Called for every request before the cache lookup.
    void set_observer(Observer observer);

private:
    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<ResponseCache> cache_;
    GatewayConfig config_;
    Sleeper sleeper_;
    std::mutex observer_mutex_;
    Observer observer_;
    std::counting_semaphore<1024> in_flight_;
    std::atomic<std::uint64_t> requests_{0}, cache_hits_{0}, backend_calls_{0}, retries_{0};
};

}  // namespace sevagent
