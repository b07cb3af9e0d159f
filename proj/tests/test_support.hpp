#pragma once

#include "sevagent/io.hpp"
#include "sevagent/llm_gateway.hpp"
#include "sevagent/log.hpp"
#include "sevagent/random.hpp"
#include "sevagent/schema.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <unistd.h>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path fixture_dir() { return SEVAGENT_FIXTURES; }
inline std::filesystem::path golden_dir() { return fixture_dir() / "golden"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sevagent_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Collects log lines while alive.
class LogCapture {
public:
    LogCapture() {
        previous_ = sevagent::set_log_sink([this](sevagent::LogLevel level, const std::string& msg) {
            std::lock_guard lock(mutex_);
            (level == sevagent::LogLevel::Warn ? warnings : infos).push_back(msg);
        });
    }
    ~LogCapture() { sevagent::set_log_sink(previous_); }

    bool warned_about(const std::string& needle) const {
        for (const auto& w : warnings)
            if (w.find(needle) != std::string::npos) return true;
        return false;
    }

    std::vector<std::string> warnings;
    std::vector<std::string> infos;

private:
    std::mutex mutex_;
    sevagent::LogSink previous_;
};

inline sevagent::VariableSpec coded(std::string name, sevagent::VariableKind kind, std::vector<std::string> values,
                                    std::string annotation = "") {
    sevagent::VariableSpec v;
    v.name = std::move(name);
    v.kind = kind;
    v.annotation = std::move(annotation);
    for (auto& value : values) v.allowed_values.push_back({value, ""});
    return v;
}

/// Small schema with one variable of every kind, used across module tests.
inline sevagent::DatasetSchema small_schema(sevagent::Dataset dataset = sevagent::Dataset::NEISS) {
    using sevagent::VariableKind;
    sevagent::DatasetSchema s;
    s.dataset = dataset;
    s.id_column = "Case ID";
    s.severity_column = "Severity";
    s.variables.push_back(coded("Age", VariableKind::Ordinal, {"1", "2", "3", "4"}, "Age group of the victim"));
    s.variables.push_back(coded("Gender", VariableKind::Nominal, {"1", "2"}, "Gender of the victim"));
    s.variables.push_back(coded("Primary Body Part", VariableKind::Nominal, {"head", "arm", "leg", "torso"},
                                "Body part with the primary injury"));
    sevagent::VariableSpec report{"Report ID", "Internal report identifier", VariableKind::Numeric, {}};
    s.variables.push_back(report);
    sevagent::VariableSpec narrative{"Narrative", "Free-text incident description", VariableKind::Narrative, {}};
    s.variables.push_back(narrative);
    return s;
}

inline sevagent::IncidentRecord record(std::string id, int severity, std::string age = "1", std::string gender = "1",
                                       std::string body = "arm", std::string narrative = "",
                                       sevagent::Dataset dataset = sevagent::Dataset::NEISS) {
    sevagent::IncidentRecord r;
    r.id = std::move(id);
    r.dataset = dataset;
    r.severity = severity;
    r.fields = {{"Age", age}, {"Gender", gender}, {"Primary Body Part", body}, {"Report ID", "100"}};
    r.narrative = std::move(narrative);
    return r;
}

/// Records with the given count per severity level (index 0 = level 1) and
/// random feature values.
inline std::vector<sevagent::IncidentRecord> records_with_levels(const std::vector<int>& per_level,
                                                                 std::uint64_t seed) {
    sevagent::Rng rng(seed);
    const char* bodies[] = {"head", "arm", "leg", "torso"};
    std::vector<sevagent::IncidentRecord> out;
    int n = 0;
    for (std::size_t level = 0; level < per_level.size(); ++level)
        for (int i = 0; i < per_level[level]; ++i) {
            out.push_back(record("R" + std::to_string(n++), static_cast<int>(level) + 1,
                                 std::to_string(1 + rng.uniform_index(4)), std::to_string(1 + rng.uniform_index(2)),
                                 bodies[rng.uniform_index(4)]));
        }
    rng.shuffle(out);
    return out;
}

/// Mock backend and gateway over an in-memory cache.
struct MockHarness {
    explicit MockHarness(sevagent::MockRules rules, sevagent::GatewayConfig config = {})
        : backend(std::make_shared<sevagent::MockBackend>(std::move(rules))),
          cache(std::make_shared<sevagent::ResponseCache>()),
          gateway(backend, cache, config) {}

    explicit MockHarness(std::string_view rules_json, sevagent::GatewayConfig config = {})
        : MockHarness(sevagent::MockRules::from_json_text(rules_json), config) {}

    std::shared_ptr<sevagent::MockBackend> backend;
    std::shared_ptr<sevagent::ResponseCache> cache;
    sevagent::Gateway gateway;
};

}  // namespace testing
