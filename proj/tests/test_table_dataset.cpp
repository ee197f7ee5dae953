#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncm/dataset.hpp"
#include "ncm/rng.hpp"
#include "ncm/table.hpp"

using namespace ncm;

namespace {

DistributionTable hand_table() {
    // Index bit 0 = A, bit 1 = B: P(00)=.1 P(10)=.2 P(01)=.3 P(11)=.4
    return DistributionTable({"A", "B"}, {0.1, 0.2, 0.3, 0.4});
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "ncm_table_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("table: constructor validation") {
    CHECK_THROWS_AS(DistributionTable({"A"}, {0.5, 0.25, 0.25}), std::invalid_argument);
    CHECK_THROWS_AS(DistributionTable({"A"}, {1.2, -0.2}), std::invalid_argument);
    CHECK_THROWS_AS(DistributionTable({"A"}, {0.6, 0.6}), std::invalid_argument);
    // Sum tolerance is 1e-12: barely inside passes, clearly outside throws.
    CHECK_NOTHROW(DistributionTable({"A"}, {0.5, 0.5 + 1e-13}));
    CHECK_THROWS_AS(DistributionTable({"A"}, {0.5, 0.5 + 1e-11}), std::invalid_argument);
}

TEST_CASE("table: marginals, conditionals, and encoding") {
    const DistributionTable t = hand_table();
    CHECK(t.arity() == 2);
    CHECK(t.index_of("B") == 1);
    CHECK_THROWS_AS(t.index_of("C"), std::invalid_argument);

    CHECK(t.prob(3) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(t.marginal({{"A", 1}}) == doctest::Approx(0.6));
    CHECK(t.marginal({{"B", 1}}) == doctest::Approx(0.7));
    CHECK(t.marginal({{"A", 1}, {"B", 0}}) == doctest::Approx(0.2));
    CHECK(t.marginal({}) == doctest::Approx(1.0));
    CHECK(t.marginal_bits(0b01, 0b01) == doctest::Approx(0.6));
    CHECK(t.marginal_bits(0b11, 0b10) == doctest::Approx(0.3));

    CHECK(t.conditional({{"B", 1}}, {{"A", 1}}) == doctest::Approx(0.4 / 0.6));
    CHECK(t.conditional({{"B", 1}}, {}) == doctest::Approx(0.7));

    const auto [mask, bits] = t.encode({{"B", 1}, {"A", 0}});
    CHECK(mask == 0b11);
    CHECK(bits == 0b10);
    CHECK_THROWS_AS(t.encode({{"C", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(t.encode({{"A", 2}}), std::invalid_argument);
}

TEST_CASE("table: zero-probability conditioning names the event") {
    const DistributionTable t({"A", "B"}, {0.5, 0.5, 0.0, 0.0});
    try {
        t.conditional({{"A", 1}}, {{"B", 1}});
        FAIL("expected std::domain_error");
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("B") != std::string::npos);
    }
}

TEST_CASE("table: marginalize reorders and sums out") {
    const DistributionTable t = hand_table();
    const DistributionTable b_only = t.marginalize({"B"});
    CHECK(b_only.variables() == std::vector<std::string>{"B"});
    CHECK(b_only.prob(0) == doctest::Approx(0.3));
    CHECK(b_only.prob(1) == doctest::Approx(0.7));

    const DistributionTable swapped = t.marginalize({"B", "A"});
    CHECK(swapped.variables() == std::vector<std::string>{"B", "A"});
    CHECK(swapped.prob(0) == doctest::Approx(0.1));  // B=0,A=0
    CHECK(swapped.prob(1) == doctest::Approx(0.3));  // B=1,A=0
    CHECK(swapped.prob(2) == doctest::Approx(0.2));  // B=0,A=1
    CHECK(swapped.prob(3) == doctest::Approx(0.4));

    CHECK_THROWS_AS(t.marginalize({"A", "C"}), std::invalid_argument);
}

TEST_CASE("table: tv_of_table") {
    CHECK(tv_of_table(hand_table(), "A", "B") == doctest::Approx(0.4 / 0.6 - 0.3 / 0.4));
    const DistributionTable degenerate({"A", "B"}, {0.3, 0.0, 0.7, 0.0});  // P(A=1) = 0
    CHECK_THROWS_AS(tv_of_table(degenerate, "A", "B"), std::domain_error);
}

TEST_CASE("dataset: indexing and counts") {
    Dataset data;
    data.vars = {"A", "B"};
    data.rows = {0, 1, 1, 0, 1, 1, 1, 1};  // rows (A,B): 01, 10, 11, 11
    CHECK(data.n() == 4);
    CHECK(data.arity() == 2);
    CHECK(data.at(0, 1) == 1);
    CHECK(data.row_index(0) == 0b10);
    CHECK(data.row_index(1) == 0b01);
    CHECK(data.counts() == std::vector<std::uint64_t>{0, 1, 1, 2});
}

TEST_CASE("dataset: csv round trip with and without sidecar") {
    const auto dir = temp_dir();
    const std::string csv = (dir / "roundtrip.csv").string();

    Dataset data;
    data.vars = {"A", "B"};
    data.rows = {0, 1, 1, 0, 1, 1};
    data.meta.seed = 7;
    data.meta.model_hash = 0xabcdef0123456789ULL;
    data.meta.intervention = {{"A"}, 1};
    data.meta.exact_ate = 0.25;
    data.meta.exact_tv = -0.5;
    data.meta.widened = true;
    data.meta.exact_table = hand_table();

    write_csv(data, csv);
    SUBCASE("no sidecar: rows load, meta defaults") {
        std::filesystem::remove(sidecar_path(csv));
        const Dataset back = read_csv(csv);
        CHECK(back.vars == data.vars);
        CHECK(back.rows == data.rows);
        CHECK(back.meta.seed == 0);
        CHECK_FALSE(back.meta.intervention.has_value());
        CHECK_FALSE(back.meta.exact_table.has_value());
        CHECK_FALSE(back.meta.widened);
    }
    SUBCASE("sidecar restores every metadata field") {
        write_sidecar(data, csv);
        CHECK(sidecar_path(csv) == (dir / "roundtrip.meta.json").string());
        const Dataset back = read_csv(csv);
        CHECK(back.vars == data.vars);
        CHECK(back.rows == data.rows);
        CHECK(back.meta.seed == 7);
        CHECK(back.meta.model_hash == data.meta.model_hash);
        REQUIRE(back.meta.intervention.has_value());
        CHECK(back.meta.intervention->first == "A");
        CHECK(back.meta.intervention->second == 1);
        CHECK(back.meta.exact_ate == doctest::Approx(0.25));
        CHECK(back.meta.exact_tv == doctest::Approx(-0.5));
        CHECK(back.meta.widened);
        REQUIRE(back.meta.exact_table.has_value());
        CHECK(back.meta.exact_table->variables() == hand_table().variables());
        CHECK(back.meta.exact_table->probabilities() == hand_table().probabilities());
    }
}

TEST_CASE("dataset: csv reader rejects malformed input") {
    const auto dir = temp_dir();
    auto write_text = [&](const std::string& name, const std::string& text) {
        const std::string path = (dir / name).string();
        std::ofstream out(path);
        out << text;
        return path;
    };
    CHECK_THROWS_AS(read_csv((dir / "missing.csv").string()), std::runtime_error);
    CHECK_THROWS_AS(read_csv(write_text("empty.csv", "")), std::runtime_error);
    CHECK_THROWS_AS(read_csv(write_text("short_row.csv", "A,B\n0\n")), std::runtime_error);
    CHECK_THROWS_AS(read_csv(write_text("bad_value.csv", "A,B\n0,2\n")), std::runtime_error);
    // Error messages carry the 1-based line number.
    try {
        read_csv(write_text("line_number.csv", "A,B\n0,1\n0,x\n"));
        FAIL("expected std::runtime_error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    // Windows line endings are tolerated.
    const Dataset crlf = read_csv(write_text("crlf.csv", "A,B\r\n1,0\r\n"));
    CHECK(crlf.n() == 1);
    CHECK(crlf.at(0, 0) == 1);
}

TEST_CASE("dataset: empirical frequencies converge to the sampled table") {
    // Sanity link between counts() and the table encoding on synthetic rows.
    Rng rng(404);
    const DistributionTable t = hand_table();
    Dataset data;
    data.vars = t.variables();
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = rng.categorical(t.probabilities());
        data.rows.push_back(static_cast<std::uint8_t>(idx & 1));
        data.rows.push_back(static_cast<std::uint8_t>((idx >> 1) & 1));
    }
    const auto counts = data.counts();
    for (std::size_t idx = 0; idx < counts.size(); ++idx) {
        const double freq = static_cast<double>(counts[idx]) / static_cast<double>(n);
        CHECK(std::abs(freq - t.prob(static_cast<std::uint32_t>(idx))) < 0.02);
    }
}
