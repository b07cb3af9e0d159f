#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/llm_gateway.hpp"

namespace sevagent {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

    HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override {
        // Split "scheme://host[:port]" from the path.
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "base URL without scheme: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        const auto origin = url.substr(0, path_start);
        const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

        httplib::Client client(origin);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);

        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [name, value] : headers) {
            if (to_lower(name) == "content-type") content_type = value;
            else h.emplace(name, value);
        }

        HttpResponse out;
        auto result = client.Post(path, h, body, content_type);
        if (!result) {
            out.error = httplib::to_string(result.error());
            return out;
        }
        out.status = result->status;
        out.body = result->body;
        for (const auto& [name, value] : result->headers) out.headers.emplace(to_lower(name), value);
        return out;
    }

private:
    std::chrono::seconds timeout_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout) {
    return std::make_unique<HttplibTransport>(timeout);
}

}  // namespace sevagent
