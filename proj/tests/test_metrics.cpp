#include <doctest.h>

#include "sevagent/error.hpp"
#include "sevagent/metrics.hpp"
#include "sevagent/random.hpp"
#include "test_support.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace sevagent;

namespace {

// Independent references, written from the textbook definitions.

long double oracle_rank(const std::vector<double>& v, std::size_t i) {
    long double below = 0, equal = 0;
    for (double x : v) {
        if (x < v[i]) ++below;
        if (x == v[i]) ++equal;
    }
    return below + (equal + 1) / 2;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = x.size();
    std::vector<long double> rx(n), ry(n);
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        rx[i] = oracle_rank(x, i);
        ry[i] = oracle_rank(y, i);
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Corrected V of a 2x2 table, straight from the formula.
double oracle_cramers_2x2(long double a, long double b, long double c, long double d) {
    const long double n = a + b + c + d;
    const long double r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
    long double chi2 = 0;
    const long double obs[2][2] = {{a, b}, {c, d}};
    const long double rows[2] = {r1, r2}, cols[2] = {c1, c2};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const long double e = rows[i] * cols[j] / n;
            chi2 += (obs[i][j] - e) * (obs[i][j] - e) / e;
        }
    const long double phi2 = chi2 / n;
    const long double phi2c = std::max<long double>(0, phi2 - 1.0L / (n - 1));
    const long double rc = 2 - 1.0L / (n - 1);
    return static_cast<double>(std::sqrt(phi2c / (rc - 1)));
}

std::pair<std::vector<std::string>, std::vector<std::string>> expand_table(const std::vector<std::vector<int>>& t) {
    std::vector<std::string> x, y;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t[i].size(); ++j)
            for (int k = 0; k < t[i][j]; ++k) {
                x.push_back("r" + std::to_string(i));
                y.push_back("c" + std::to_string(j));
            }
    return {x, y};
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("macro-F1") {
    SUBCASE("perfect predictions") {
        const std::vector<int> y{1, 2, 3, 4, 1, 2};
        CHECK(macro_f1(y, y, 4) == 1.0);
    }
    SUBCASE("all wrong") {
        const std::vector<int> p{2, 2, 2}, y{1, 1, 1};
        CHECK(macro_f1(p, y, 4) == 0.0);
    }
    SUBCASE("hand example") {
        const std::vector<int> p{1, 2, 2, 2}, y{1, 1, 2, 2};
        // Brute force from the confusion counts: class 1 TP=1 FP=0 FN=1, class 2 TP=2 FP=1 FN=0.
        const double f1_1 = 2.0 * 1 / (2.0 * 1 + 0 + 1);
        const double f1_2 = 2.0 * 2 / (2.0 * 2 + 1 + 0);
        CHECK(std::abs(macro_f1(p, y, 4) - (f1_1 + f1_2) / 2) < 1e-12);
        CHECK(std::abs(macro_f1(p, y, 4) - 11.0 / 15.0) < 1e-12);
    }
    SUBCASE("errors") {
        const std::vector<int> a{1, 2}, b{1};
        CHECK(code_of([&] { macro_f1(a, b, 4); }) == ErrorCode::LengthMismatch);
        CHECK(code_of([&] { macro_f1(std::vector<int>{}, std::vector<int>{}, 4); }) == ErrorCode::EmptyInput);
    }
}

TEST_CASE("severity distribution") {
    CHECK(severity_distribution(std::vector<int>{1, 1, 3, 4}, 4) == std::vector<std::size_t>{2, 0, 1, 1});
    CHECK(severity_distribution(std::vector<int>{}, 4) == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK(code_of([] { severity_distribution(std::vector<int>{5}, 4); }) == ErrorCode::OutOfRange);
}

TEST_CASE("a mid-level-biased baseline has a predicted mode that differs from the true mode") {
    const std::vector<int> truth{4, 4, 4, 4, 4, 1, 1, 2, 3, 3};
    const std::vector<int> biased{3, 3, 3, 3, 3, 3, 3, 3, 4, 1};
    const auto t = severity_distribution(truth, 4);
    const auto p = severity_distribution(biased, 4);
    const auto mode = [](const std::vector<std::size_t>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    CHECK(mode(p) == 2);
    CHECK(mode(p) != mode(t));
}

TEST_CASE("Spearman") {
    const std::vector<double> up{1, 2, 3, 4, 5};
    const std::vector<double> down{5, 4, 3, 2, 1};
    CHECK(spearman_rho(up, up) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(spearman_rho(up, down) == doctest::Approx(-1.0).epsilon(1e-15));

    const std::vector<double> x{1, 2, 2, 3}, y{1, 2, 3, 3};
    CHECK(std::abs(spearman_rho(x, y) - oracle_spearman(x, y)) < 1e-12);
    CHECK(std::abs(spearman_rho(x, y) - 5.0 / 6.0) < 1e-12);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(12), b(12);
        for (auto& v : a) v = static_cast<double>(rng.uniform_index(4));
        for (auto& v : b) v = static_cast<double>(rng.uniform_index(5));
        if (std::set<double>(a.begin(), a.end()).size() < 2 || std::set<double>(b.begin(), b.end()).size() < 2) continue;
        CHECK(std::abs(spearman_rho(a, b) - oracle_spearman(a, b)) < 1e-12);
        // Strictly monotone transforms leave it unchanged.
        std::vector<double> a3(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) a3[i] = a[i] * a[i] * a[i] + 7;
        CHECK(std::abs(spearman_rho(a3, b) - spearman_rho(a, b)) < 1e-12);
    }

    CHECK(code_of([] { spearman_rho(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) ==
          ErrorCode::ZeroVariance);
    CHECK(code_of([] { spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("corrected Cramér's V") {
    SUBCASE("independent table") {
        const auto [x, y] = expand_table({{25, 25}, {25, 25}});
        CHECK(cramers_v_corrected(x, y) == 0.0);
    }
    SUBCASE("perfect 2x2 association against the scalar formula") {
        const auto [x, y] = expand_table({{50, 0}, {0, 50}});
        const double expected = oracle_cramers_2x2(50, 0, 0, 50);
        CHECK(std::abs(cramers_v_corrected(x, y) - expected) < 1e-12);
        CHECK(std::abs(cramers_v_corrected(std::vector<std::vector<double>>{{50, 0}, {0, 50}}) - expected) < 1e-12);
    }
    SUBCASE("other 2x2 tables against the scalar formula") {
        for (const auto& t : std::vector<std::array<int, 4>>{{30, 10, 12, 28}, {5, 9, 14, 3}, {40, 2, 1, 9}}) {
            const auto [x, y] = expand_table({{t[0], t[1]}, {t[2], t[3]}});
            CHECK(std::abs(cramers_v_corrected(x, y) - oracle_cramers_2x2(t[0], t[1], t[2], t[3])) < 1e-12);
        }
    }
    SUBCASE("a variable against itself") {
        const std::vector<std::string> x{"a", "b", "c", "a", "b", "c", "a"};
        CHECK(cramers_v_corrected(x, x) == 1.0);
    }
    SUBCASE("symmetry and relabeling") {
        const auto [x, y] = expand_table({{7, 3, 1}, {2, 9, 4}});
        auto relabeled = x;
        for (auto& v : relabeled) v = v == "r0" ? "zz" : "aa";
        CHECK(cramers_v_corrected(x, y) == doctest::Approx(cramers_v_corrected(y, x)).epsilon(1e-14));
        CHECK(cramers_v_corrected(relabeled, y) == doctest::Approx(cramers_v_corrected(x, y)).epsilon(1e-14));
    }
    SUBCASE("a single level is degenerate") {
        const std::vector<std::string> x{"a", "a", "a"}, y{"b", "c", "b"};
        CHECK(code_of([&] { cramers_v_corrected(x, y); }) == ErrorCode::DegenerateTable);
    }
}

TEST_CASE("association matrix") {
    using testing::coded;
    SUBCASE("kind dispatch") {
        DatasetSchema s;
        s.dataset = Dataset::NEISS;
        s.id_column = "id";
        s.severity_column = "sev";
        s.variables = {coded("Age", VariableKind::Ordinal, {"1", "2", "3"}),
                       coded("Color", VariableKind::Nominal, {"red", "blue"})};
        std::vector<IncidentRecord> recs;
        const char* colors[] = {"red", "blue"};
        for (int i = 0; i < 12; ++i) {
            IncidentRecord r;
            r.id = std::to_string(i);
            r.dataset = Dataset::NEISS;
            r.severity = 1 + i % 4;
            r.fields = {{"Age", std::to_string(1 + i % 3)}, {"Color", colors[(i / 2) % 2]}};
            recs.push_back(r);
        }
        const auto m = association_matrix(recs, s, false);
        REQUIRE(m.variables.size() == 2);
        CHECK(m.at("Age", "Age").kind == AssociationKind::Spearman);
        CHECK(m.at("Age", "Color").kind == AssociationKind::CramersV);
        CHECK(m.at("Color", "Age").kind == AssociationKind::CramersV);
        CHECK(m.at("Age", "Age").value == 1.0);

        const auto with_sev = association_matrix(recs, s, true);
        CHECK(with_sev.at("Age", kSeverityVariable).kind == AssociationKind::Spearman);
        CHECK(with_sev.at("Color", kSeverityVariable).kind == AssociationKind::CramersV);
    }

    SUBCASE("body part is the strongest association with severity") {
        // Severity follows the injured body part most of the time; the other
        // variables are noise.
        Rng rng(21);
        const char* bodies[] = {"head", "arm", "leg", "torso"};
        const int severity_of[] = {4, 1, 2, 3};
        std::vector<IncidentRecord> recs;
        for (int i = 0; i < 400; ++i) {
            const auto b = rng.uniform_index(4);
            const int sev = rng.uniform01() < 0.6 ? severity_of[b] : static_cast<int>(1 + rng.uniform_index(4));
            recs.push_back(testing::record("B" + std::to_string(i), sev, std::to_string(1 + rng.uniform_index(4)),
                                           std::to_string(1 + rng.uniform_index(2)), bodies[b]));
        }
        const auto m = association_matrix(recs, testing::small_schema(), true);
        double best = -1;
        std::pair<std::string, std::string> best_pair;
        for (std::size_t i = 0; i < m.variables.size(); ++i)
            for (std::size_t j = i + 1; j < m.variables.size(); ++j)
                if (m.entries[i][j].value && *m.entries[i][j].value > best) {
                    best = *m.entries[i][j].value;
                    best_pair = {m.variables[i], m.variables[j]};
                }
        CHECK(best_pair.first == "Primary Body Part");
        CHECK(best_pair.second == std::string(kSeverityVariable));

        // Record order does not matter.
        auto shuffled = recs;
        rng.shuffle(shuffled);
        CHECK(association_matrix(shuffled, testing::small_schema(), true).to_csv() == m.to_csv());
    }

    SUBCASE("unknown values drop pairwise and undefined cells stay empty") {
        std::vector<IncidentRecord> recs;
        for (int i = 0; i < 6; ++i)
            recs.push_back(testing::record(std::to_string(i), 1 + i % 2, i < 3 ? "unknown" : std::to_string(1 + i % 4),
                                           "1", i % 2 ? "head" : "arm"));
        const auto m = association_matrix(recs, testing::small_schema(), false);
        CHECK(m.at("Age", "Primary Body Part").n == 3);
        // Gender is constant, so its statistics are undefined rather than invented.
        CHECK_FALSE(m.at("Gender", "Primary Body Part").value.has_value());
        CHECK_FALSE(m.at("Gender", "Primary Body Part").error.empty());
    }
}

TEST_CASE("eval reports stay internally consistent") {
    const std::vector<int> p{1, 2, 3, 3, 4, 2}, y{1, 2, 3, 4, 4, 1};
    const auto r = EvalReport::from_predictions("m", Dataset::NEISS, p, y, 4);
    CHECK_NOTHROW(r.validate());
    std::size_t trace = 0, total = 0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            total += r.confusion[i][j];
            if (i == j) trace += r.confusion[i][j];
        }
    CHECK(r.accuracy == static_cast<double>(trace) / static_cast<double>(total));
    CHECK(EvalReport::from_json_text(r.to_json_text()) == r);
    const auto na = EvalReport::unavailable("autogen", Dataset::NEISS, "not available");
    CHECK_FALSE(na.available);
    CHECK(EvalReport::from_json_text(na.to_json_text()) == na);
}
