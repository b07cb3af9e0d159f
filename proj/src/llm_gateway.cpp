#include "sevagent/llm_gateway.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace sevagent {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(BackendKind kind) noexcept { return kind == BackendKind::Mock ? "mock" : "remote"; }

BackendKind parse_backend_kind(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "mock") return BackendKind::Mock;
    if (t == "remote") return BackendKind::Remote;
    throw Error(ErrorCode::InvalidArgument, "unknown backend '" + std::string(text) + "'");
}

void ChatRequest::validate() const {
    if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat request without messages");
    if (messages.front().role == Role::Assistant)
        throw Error(ErrorCode::InvalidArgument, "first message must be system or user");
    if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
    if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
}

std::string ChatRequest::joined_text() const {
    std::string out;
    for (const auto& m : messages) {
        if (!out.empty()) out += "\n\n";
        out += m.content;
    }
    return out;
}

namespace {

ordered_json messages_json(const std::vector<ChatMessage>& messages) {
    auto arr = ordered_json::array();
    for (const auto& m : messages) arr.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return arr;
}

}  // namespace

std::string cache_key(const ChatRequest& request) {
    ordered_json doc;
    doc["backend"] = std::string(to_string(request.backend));
    doc["model"] = request.model;
    doc["messages"] = messages_json(request.messages);
    doc["temperature"] = format_double(request.temperature);
    return sha256_hex(doc.dump());
}

std::string prompt_digest(const std::vector<ChatMessage>& messages) { return sha256_hex(messages_json(messages).dump()); }

std::chrono::milliseconds RetryPolicy::delay_after(int attempt, std::chrono::milliseconds previous,
                                                   double retry_after_s) const {
    const double base = static_cast<double>(initial_delay.count()) * std::pow(backoff_factor, attempt - 1);
    auto delay = std::chrono::milliseconds(static_cast<std::int64_t>(std::min(base, static_cast<double>(max_delay.count()))));
    if (retry_after_s > 0.0)
        delay = std::max(delay, std::chrono::milliseconds(static_cast<std::int64_t>(std::ceil(retry_after_s * 1000.0))));
    return std::max(delay, previous);
}

// ---------------------------------------------------------------------------
// Mock backend

MockRules MockRules::from_json_text(std::string_view text) {
    MockRules rules;
    try {
        const auto doc = json::parse(text);
        rules.strict = doc.value("strict", false);
        if (doc.contains("fixtures"))
            for (const auto& [digest, reply] : doc.at("fixtures").items()) rules.fixtures.emplace(digest, reply.get<std::string>());
        if (doc.contains("rules")) {
            for (const auto& item : doc.at("rules")) {
                MockRule rule;
                const auto& c = item.at("contains");
                if (c.is_string()) rule.contains.push_back(c.get<std::string>());
                else rule.contains = c.get<std::vector<std::string>>();
                if (item.contains("excludes")) {
                    const auto& e = item.at("excludes");
                    if (e.is_string()) rule.excludes.push_back(e.get<std::string>());
                    else rule.excludes = e.get<std::vector<std::string>>();
                }
                rule.reply = item.at("reply").get<std::string>();
                rules.rules.push_back(std::move(rule));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("mock rules: ") + e.what());
    }
    return rules;
}

MockRules MockRules::load(const std::filesystem::path& path) { return from_json_text(read_text_file(path)); }

namespace {

// Neutral reply in the answer format the last user turn asks for.
std::string neutral_reply(const ChatRequest& request) {
    std::string_view prompt;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it)
        if (it->role == Role::User) {
            prompt = it->content;
            break;
        }

    struct Format {
        std::string_view marker;
        std::string_view reply;
    };
    static constexpr Format kFormats[] = {
        {"SCORE: <", "SCORE: 2"},
        {"SEVERITY: <", "SEVERITY: 2"},
        {"relevant: <", "relevant: yes"},
        {"category: <", ""},
    };
    const Format* chosen = nullptr;
    std::size_t chosen_pos = 0;
    for (const auto& f : kFormats) {
        const auto pos = prompt.rfind(f.marker);
        if (pos != std::string_view::npos && (!chosen || pos > chosen_pos)) {
            chosen = &f;
            chosen_pos = pos;
        }
    }
    if (!chosen) return "SCORE: 2";
    if (!chosen->reply.empty()) return std::string(chosen->reply);

    static constexpr std::string_view kCandidates = "Candidate categories:";
    const auto pos = prompt.find(kCandidates);
    if (pos == std::string_view::npos) return "category: none";
    auto line = prompt.substr(pos + kCandidates.size());
    line = line.substr(0, line.find('\n'));
    return "category: " + trim(line.substr(0, line.find(';')));
}

}  // namespace

ChatResponse MockBackend::evaluate(const MockRules& rules, const ChatRequest& request) {
    ChatResponse response;
    if (auto it = rules.fixtures.find(prompt_digest(request.messages)); it != rules.fixtures.end()) {
        response.content = it->second;
        return response;
    }
    const auto text = request.joined_text();
    for (const auto& rule : rules.rules) {
        const bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                                     [&](const std::string& s) { return text.find(s) != std::string::npos; });
        const bool none = std::none_of(rule.excludes.begin(), rule.excludes.end(),
                                       [&](const std::string& s) { return text.find(s) != std::string::npos; });
        if (all && none) {
            response.content = rule.reply;
            return response;
        }
    }
    if (rules.strict) throw GatewayError(ErrorCode::NoFixture, prompt_digest(request.messages));
    response.content = neutral_reply(request);
    return response;
}

ChatResponse MockBackend::send(const ChatRequest& request) {
    calls_.fetch_add(1);
    return evaluate(rules_, request);
}

std::string MockBackend::identity() const {
    ordered_json doc;
    doc["strict"] = rules_.strict;
    doc["fixtures"] = rules_.fixtures;
    auto arr = ordered_json::array();
    for (const auto& r : rules_.rules) arr.push_back({{"contains", r.contains}, {"excludes", r.excludes}, {"reply", r.reply}});
    doc["rules"] = std::move(arr);
    return "mock:" + sha256_hex(doc.dump()).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Remote backend

RemoteBackend::RemoteBackend(std::string base_url, std::string api_key, std::unique_ptr<HttpTransport> transport)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), transport_(std::move(transport)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string RemoteBackend::request_body(const ChatRequest& request) {
    ordered_json body;
    body["model"] = request.model;
    body["messages"] = messages_json(request.messages);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    return body.dump();
}

ChatResponse RemoteBackend::parse_response_body(const std::string& body) {
    ChatResponse response;
    try {
        const auto doc = json::parse(body);
        const auto& choice = doc.at("choices").at(0);
        const auto& message = choice.at("message");
        if (message.contains("content") && message.at("content").is_string())
            response.content = message.at("content").get<std::string>();
        response.finish_reason =
            choice.contains("finish_reason") && choice.at("finish_reason").is_string() ? choice.at("finish_reason").get<std::string>() : "stop";
        if (doc.contains("usage") && doc.at("usage").is_object()) {
            const auto& u = doc.at("usage");
            TokenUsage usage;
            usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
            usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
            usage.total_tokens = u.value("total_tokens", usage.prompt_tokens + usage.completion_tokens);
            response.usage = usage;
        }
    } catch (const json::exception& e) {
        throw GatewayError(ErrorCode::Malformed, e.what());
    }
    if (response.finish_reason == "stop" && response.content.empty())
        throw GatewayError(ErrorCode::Malformed, "stop without content");
    return response;
}

ChatResponse RemoteBackend::send(const ChatRequest& request) {
    if (api_key_.empty()) throw GatewayError(ErrorCode::CredentialMissing, std::string(kApiKeyEnv) + " is not set");
    const auto reply = transport_->post(base_url_ + "/chat/completions",
                                        {{"Authorization", "Bearer " + api_key_}, {"Content-Type", "application/json"}},
                                        request_body(request));
    if (reply.status == 0) throw GatewayError(ErrorCode::Transport, "no response: " + reply.error, 0);
    if (reply.status == 429) {
        double retry_after = 0.0;
        if (auto it = reply.headers.find("retry-after"); it != reply.headers.end()) {
            try {
                retry_after = std::stod(it->second);
            } catch (const std::exception&) {
                retry_after = 0.0;
            }
        }
        throw GatewayError(ErrorCode::RateLimited, "HTTP 429", 429, retry_after);
    }
    if (reply.status < 200 || reply.status >= 300)
        throw GatewayError(ErrorCode::Transport, "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200),
                           reply.status);
    return parse_response_body(reply.body);
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto doc = json::parse(line);
            ChatResponse response;
            response.content = doc.at("content").get<std::string>();
            response.finish_reason = doc.value("finish_reason", std::string("stop"));
            if (doc.contains("usage")) {
                const auto& u = doc.at("usage");
                response.usage = TokenUsage{u.value("prompt_tokens", std::int64_t{0}), u.value("completion_tokens", std::int64_t{0}),
                                            u.value("total_tokens", std::int64_t{0})};
            }
            entries_.insert_or_assign(doc.at("key").get<std::string>(), std::move(response));
        } catch (const json::exception&) {
            ++skipped_;
            log_warn("cache " + path_->string() + ": skipping corrupt line " + std::to_string(line_no));
        }
    }
}

std::optional<ChatResponse> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

void ResponseCache::insert(const std::string& key, const ChatResponse& response) {
    std::lock_guard lock(mutex_);
    if (!entries_.insert_or_assign(key, response).second) return;
    if (!path_) return;

    ordered_json line;
    line["key"] = key;
    line["content"] = response.content;
    line["finish_reason"] = response.finish_reason;
    if (response.usage)
        line["usage"] = {{"prompt_tokens", response.usage->prompt_tokens},
                         {"completion_tokens", response.usage->completion_tokens},
                         {"total_tokens", response.usage->total_tokens}};
    line["created_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch()).count();

    std::error_code ec;
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path(), ec);
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) {
        log_warn("cache " + path_->string() + " is not writable; entry kept in memory only");
        return;
    }
    out << line.dump() << '\n';
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache, GatewayConfig config)
    : backend_(std::move(backend)),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      config_(std::move(config)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_in_flight, 1, 1024))) {
    if (!backend_) throw Error(ErrorCode::InvalidArgument, "gateway without backend");
    if (config_.retry.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "retry budget must be >= 1");
    config_.max_in_flight = std::clamp<std::size_t>(config_.max_in_flight, 1, 1024);
}

ChatRequest Gateway::make_request(std::vector<ChatMessage> messages) const {
    ChatRequest request;
    request.backend = backend_->kind();
    request.model = config_.model;
    request.messages = std::move(messages);
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    return request;
}

void Gateway::set_observer(Observer observer) {
    std::lock_guard lock(observer_mutex_);
    observer_ = std::move(observer);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    request.validate();
    if (request.backend != backend_->kind())
        throw Error(ErrorCode::InvalidArgument, "request targets the " + std::string(to_string(request.backend)) +
                                                    " backend but gateway serves " + std::string(to_string(backend_->kind())));
    requests_.fetch_add(1);
    {
        std::lock_guard lock(observer_mutex_);
        if (observer_) observer_(request);
    }

    const auto key = cache_key(request);
    if (auto hit = cache_->lookup(key)) {
        cache_hits_.fetch_add(1);
        return *hit;
    }

    std::chrono::milliseconds previous_delay{0};
    for (int attempt = 1;; ++attempt) {
        try {
            in_flight_.acquire();
            backend_calls_.fetch_add(1);
            ChatResponse response;
            try {
                response = backend_->send(request);
            } catch (...) {
                in_flight_.release();
                throw;
            }
            in_flight_.release();
            cache_->insert(key, response);
            return response;
        } catch (const GatewayError& e) {
            if (!e.retryable() || attempt >= config_.retry.max_attempts) throw;
            previous_delay = config_.retry.delay_after(attempt, previous_delay, e.retry_after_seconds());
            retries_.fetch_add(1);
            log_info("retrying after " + std::to_string(previous_delay.count()) + " ms: " + e.what());
            sleeper_(previous_delay);
        }
    }
}

GatewayStats Gateway::stats() const {
    return {requests_.load(), cache_hits_.load(), backend_calls_.load(), retries_.load()};
}

}  // namespace sevagent
