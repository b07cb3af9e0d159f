#include <doctest.h>

#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/schema.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <map>
#include <set>

using namespace sevagent;
using testing::record;
using testing::small_schema;

namespace {

std::string header() { return "Case ID,Age,Gender,Primary Body Part,Report ID,Narrative,Severity\n"; }

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

// Builds `total` records whose marginals follow the given per-value counts;
// positions past a variable's counted values are unknown.
std::vector<IncidentRecord> marginal_fixture(Dataset dataset, const std::vector<int>& severity,
                                             const std::vector<int>& age, const std::vector<int>& gender) {
    auto expand = [](const std::vector<int>& counts) {
        std::vector<std::string> values;
        for (std::size_t i = 0; i < counts.size(); ++i) values.insert(values.end(), counts[i], std::to_string(i + 1));
        return values;
    };
    const auto ages = expand(age);
    const auto genders = expand(gender);
    std::vector<IncidentRecord> out;
    int n = 0;
    for (std::size_t level = 0; level < severity.size(); ++level)
        for (int i = 0; i < severity[level]; ++i, ++n) {
            const auto k = static_cast<std::size_t>(n);
            auto r = record("M" + std::to_string(n), static_cast<int>(level) + 1,
                            k < ages.size() ? ages[k] : std::string(kUnknown),
                            k < genders.size() ? genders[k] : std::string(kUnknown), "arm", "", dataset);
            out.push_back(std::move(r));
        }
    return out;
}

std::size_t count_of(const VariableCounts& v, const std::string& value) {
    for (const auto& [name, c] : v.counts)
        if (name == value) return c;
    return 0;
}

}  // namespace

TEST_CASE("severity scales carry the dataset labels") {
    const auto cps = severity_scale(Dataset::CPSRMS);
    REQUIRE(cps.size() == 4);
    CHECK(cps[0].label == "Incident, No Injury");
    CHECK(cps[3].label == "Death");
    const auto neiss = severity_scale(Dataset::NEISS);
    CHECK(neiss[0].label == "Mild");
    CHECK(neiss[3].label == "Fatal");
    CHECK(parse_severity(Dataset::NEISS, "mild") == 1);
    CHECK(parse_severity(Dataset::CPSRMS, "3") == 3);
    CHECK(code_of([] { parse_severity(Dataset::NEISS, "5"); }) == ErrorCode::ValueOutOfDomain);
}

TEST_CASE("ingest maps a textual severity label to its code") {
    const auto recs =
        parse_dataset_csv(header() + "N1,3,2,head,17,Fell from a scooter,Mild\n", small_schema(Dataset::NEISS));
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].severity == 1);
    CHECK(recs[0].fields.at("Primary Body Part") == "head");
    CHECK(recs[0].narrative == "Fell from a scooter");
    CHECK(recs[0].fields.count("Severity") == 0);
}

TEST_CASE("a header-only file gives no records") {
    CHECK(parse_dataset_csv(header(), small_schema()).empty());
}

TEST_CASE("values outside the allowed domain are rejected") {
    CHECK(code_of([] { parse_dataset_csv(header() + "N1,3,3,head,17,x,1\n", small_schema()); }) ==
          ErrorCode::ValueOutOfDomain);
}

TEST_CASE("ingest errors") {
    const auto schema = small_schema();
    SUBCASE("missing severity") {
        CHECK(code_of([&] { parse_dataset_csv(header() + "N1,3,1,head,17,x,\n", schema); }) ==
              ErrorCode::MissingSeverity);
    }
    SUBCASE("missing column") {
        CHECK(code_of([&] { parse_dataset_csv("Case ID,Age,Severity\nN1,1,1\n", schema); }) ==
              ErrorCode::SchemaMismatch);
    }
    SUBCASE("unreadable file") {
        CHECK(code_of([&] { load_dataset("/nonexistent/data.csv", schema); }) == ErrorCode::FileUnreadable);
    }
    SUBCASE("column order does not matter") {
        const auto recs = parse_dataset_csv(
            "Severity,Narrative,Report ID,Primary Body Part,Gender,Age,Case ID\n2,x,5,leg,1,4,N9\n", schema);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].fields.at("Age") == "4");
        CHECK(recs[0].severity == 2);
    }
}

TEST_CASE("missing feature values become the unknown marker") {
    const auto recs = parse_dataset_csv(header() + "N1,,1,head,,x,2\n", small_schema());
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].fields.at("Age") == kUnknown);
    CHECK(recs[0].fields.at("Report ID") == kUnknown);
}

TEST_CASE("CPSRMS-shaped marginals are counted exactly") {
    const auto recs =
        marginal_fixture(Dataset::CPSRMS, {300, 180, 280, 795}, {45, 110, 699, 152}, {186, 961});
    const auto table = summarize(recs, small_schema(Dataset::CPSRMS));
    CHECK(table.total == 1555);
    CHECK(table.severity == std::array<std::size_t, 4>{300, 180, 280, 795});
    const auto* age = table.find("Age");
    REQUIRE(age);
    CHECK(count_of(*age, "1") == 45);
    CHECK(count_of(*age, "2") == 110);
    CHECK(count_of(*age, "3") == 699);
    CHECK(count_of(*age, "4") == 152);
    CHECK(age->unknown == 1555 - 1006);
    const auto* gender = table.find("Gender");
    REQUIRE(gender);
    CHECK(count_of(*gender, "1") == 186);
    CHECK(count_of(*gender, "2") == 961);
}

TEST_CASE("NEISS-shaped marginals are counted exactly") {
    const auto recs = marginal_fixture(Dataset::NEISS, {500, 36, 500, 23}, {60, 230, 685, 84}, {206, 852});
    const auto table = summarize(recs, small_schema(Dataset::NEISS));
    CHECK(table.total == 1059);
    CHECK(table.severity == std::array<std::size_t, 4>{500, 36, 500, 23});
    const auto* age = table.find("Age");
    REQUIRE(age);
    std::size_t sum = 0;
    for (const auto& [value, c] : age->counts) sum += c;
    CHECK(sum == 1059);  // fully observed
    CHECK(age->unknown == 0);
    CHECK(table.find("Gender")->unknown == 1);
}

TEST_CASE("a single record counts once per variable") {
    const auto table = summarize({record("A", 2, "3", "2", "leg")}, small_schema());
    CHECK(table.total == 1);
    for (const auto& v : table.variables) {
        std::size_t sum = v.unknown;
        for (const auto& [value, c] : v.counts) sum += c;
        CHECK(sum == 1);
    }
    CHECK(table.find("Report ID") == nullptr);  // numeric variables are not tabulated
}

TEST_CASE("stratified split") {
    SUBCASE("24 per level splits exactly 18/6") {
        const auto recs = testing::records_with_levels({24, 24, 24, 24}, 1);
        for (std::uint64_t seed : {0u, 1u, 99u}) {
            const auto s = stratified_split(recs, {3, 1}, seed);
            CHECK(s.train.size() == 72);
            CHECK(s.test.size() == 24);
            std::map<std::string, int> level;
            for (const auto& r : recs) level[r.id] = r.severity;
            std::array<int, 4> test_per_level{};
            for (const auto& id : s.test) ++test_per_level[level[id] - 1];
            CHECK(test_per_level == std::array<int, 4>{6, 6, 6, 6});
        }
    }
    SUBCASE("25 per level stays within one record of the ideal") {
        const auto recs = testing::records_with_levels({25, 25, 25, 25}, 2);
        const auto s = stratified_split(recs, {3, 1}, 5);
        std::map<std::string, int> level;
        for (const auto& r : recs) level[r.id] = r.severity;
        std::array<int, 4> test_per_level{};
        for (const auto& id : s.test) ++test_per_level[level[id] - 1];
        for (int t : test_per_level) CHECK(std::abs(t - 6.25) <= 1.0);
    }
    SUBCASE("a level with one record cannot be split") {
        const auto recs = testing::records_with_levels({1, 1, 1, 1}, 3);
        CHECK(code_of([&] { stratified_split(recs, {3, 1}, 0); }) == ErrorCode::Unsplittable);
    }
    SUBCASE("same seed gives the same split; train and test partition the ids") {
        const auto recs = testing::records_with_levels({10, 7, 12, 5}, 4);
        const auto a = stratified_split(recs, {3, 1}, 11);
        const auto b = stratified_split(recs, {3, 1}, 11);
        CHECK(a == b);
        std::set<std::string> all(a.train.begin(), a.train.end());
        for (const auto& id : a.test) CHECK(all.insert(id).second);
        CHECK(all.size() == recs.size());
    }
    SUBCASE("ids keep input order") {
        const auto recs = testing::records_with_levels({8, 8, 8, 8}, 5);
        const auto s = stratified_split(recs, {4, 1}, 3);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < recs.size(); ++i) pos[recs[i].id] = i;
        CHECK(std::is_sorted(s.train.begin(), s.train.end(),
                             [&](const auto& x, const auto& y) { return pos[x] < pos[y]; }));
        CHECK(std::is_sorted(s.test.begin(), s.test.end(),
                             [&](const auto& x, const auto& y) { return pos[x] < pos[y]; }));
    }
}

TEST_CASE("balance_subset") {
    const auto recs = testing::records_with_levels({500, 36, 500, 23}, 6);
    SUBCASE("cap 100 on NEISS-shaped counts keeps the rare levels whole") {
        const auto kept = balance_subset(recs, 100, 1);
        std::array<int, 4> per{};
        for (const auto& r : kept) ++per[r.severity - 1];
        CHECK(per == std::array<int, 4>{100, 36, 100, 23});
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < recs.size(); ++i) pos[recs[i].id] = i;
        CHECK(std::is_sorted(kept.begin(), kept.end(),
                             [&](const auto& x, const auto& y) { return pos[x.id] < pos[y.id]; }));
        CHECK(kept == balance_subset(recs, 100, 1));
    }
    SUBCASE("a cap above every level is the identity") { CHECK(balance_subset(recs, 1000, 1) == recs); }
    SUBCASE("cap 1 keeps one record per level") {
        const auto kept = balance_subset(recs, 1, 9);
        REQUIRE(kept.size() == 4);
        std::set<int> levels;
        for (const auto& r : kept) levels.insert(r.severity);
        CHECK(levels.size() == 4);
    }
}

TEST_CASE("load, serialize and reload give identical records") {
    const auto schema = DatasetSchema::load(testing::golden_dir() / "schema.json");
    const auto recs = load_dataset(testing::golden_dir() / "data.csv", schema);
    CHECK(recs.size() == 40);
    CHECK(parse_dataset_csv(to_dataset_csv(recs, schema), schema) == recs);
    CHECK(parse_snapshot(serialize_snapshot(recs, schema), schema) == recs);
    CHECK(DatasetSchema::from_json_text(schema.to_json_text()).to_json_text() == schema.to_json_text());
}

TEST_CASE("quoted narratives with commas and line breaks survive the round trip") {
    const auto schema = small_schema();
    auto r = record("Q1", 4, "2", "1", "head", "Said \"ouch\", then\nfell, hard");
    const auto text = to_dataset_csv({r}, schema);
    CHECK(parse_dataset_csv(text, schema) == std::vector<IncidentRecord>{r});
}

TEST_CASE("the severity column never enters the feature map") {
    const auto schema = small_schema();
    auto r = record("L1", 2);
    CHECK_NOTHROW(validate_record(schema, r));
    r.fields["Severity"] = "2";
    CHECK(code_of([&] { validate_record(schema, r); }) == ErrorCode::LeakageGuard);
    for (const auto& rec : parse_dataset_csv(header() + "N1,3,2,head,17,x,Fatal\n", schema))
        CHECK(rec.fields.count(schema.severity_column) == 0);
}

TEST_CASE("schema validation") {
    auto s = small_schema();
    CHECK_NOTHROW(s.validate());
    SUBCASE("duplicate names") {
        s.variables.push_back(s.variables[0]);
        CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSchema);
    }
    SUBCASE("a categorical variable needs allowed values") {
        s.variables[1].allowed_values.clear();
        CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSchema);
    }
    SUBCASE("the severity column cannot be a feature") {
        s.variables.push_back(testing::coded("Severity", VariableKind::Ordinal, {"1", "2"}));
        CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSchema);
    }
}
