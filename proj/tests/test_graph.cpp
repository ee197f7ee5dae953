#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncm/graph.hpp"
#include "ncm/rng.hpp"

using namespace ncm;

namespace {

// Random diagram on n <= 6 variables: forward directed edges keep it acyclic.
CausalDiagram random_diagram(Rng& rng, int n, double dir_p, double bi_p) {
    std::vector<std::string> vars;
    for (int i = 0; i < n; ++i) vars.push_back("V" + std::to_string(i));
    std::vector<std::pair<int, int>> directed, bidirected;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (rng.uniform() < dir_p) directed.push_back({i, j});
            if (rng.uniform() < bi_p) bidirected.push_back({i, j});
        }
    return CausalDiagram::make(vars, directed, bidirected);
}

std::vector<int> positions(const std::vector<int>& order, int n) {
    std::vector<int> pos(n, -1);
    for (int i = 0; i < n; ++i) pos[order[i]] = i;
    return pos;
}

}  // namespace

TEST_CASE("parse: implicit declaration order and explicit node lines") {
    const CausalDiagram g = parse_diagram(
        "# a comment\n"
        "node A\n"
        "\n"
        "B -> C   # trailing comment\n"
        "A <-> C\n");
    CHECK(g.size() == 3);
    CHECK(g.variables() == std::vector<std::string>{"A", "B", "C"});
    CHECK(g.has_directed(g.index_of("B"), g.index_of("C")));
    CHECK(g.has_bidirected(g.index_of("A"), g.index_of("C")));
    CHECK(g.has_bidirected(g.index_of("C"), g.index_of("A")));
    CHECK_FALSE(g.has_directed(g.index_of("C"), g.index_of("B")));
}

TEST_CASE("parse: errors name the offending line") {
    auto message_of = [](const std::string& text) {
        try {
            parse_diagram(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message_of("A -> B\nA -> B\n").find("2") != std::string::npos);
    CHECK(message_of("A -> A\n").find("1") != std::string::npos);
    CHECK(message_of("node A\nwhat is this\n").find("2") != std::string::npos);
    CHECK(message_of("node A\nnode A\n").find("2") != std::string::npos);
    // Cycle errors name the variables involved.
    const std::string cyc = message_of("A -> B\nB -> C\nC -> A\n");
    CHECK(cyc.find("cycle") != std::string::npos);
    CHECK_THROWS_AS(parse_diagram("A <-> A\n"), std::invalid_argument);
}

TEST_CASE("serialize round trip reproduces every fixture exactly") {
    for (const auto& f : benchmark_fixtures()) {
        const std::string text = serialize_diagram(f.graph);
        const CausalDiagram back = parse_diagram(text);
        CHECK(back.variables() == f.graph.variables());
        CHECK(back.directed_edges() == f.graph.directed_edges());
        CHECK(back.bidirected_edges() == f.graph.bidirected_edges());
        CHECK(serialize_diagram(back) == text);
        CHECK(diagram_hash(back) == diagram_hash(f.graph));
    }
}

TEST_CASE("diagram_hash separates the benchmark fixtures") {
    std::set<std::uint64_t> hashes;
    for (const auto& f : benchmark_fixtures()) hashes.insert(diagram_hash(f.graph));
    CHECK(hashes.size() == benchmark_fixtures().size());
}

TEST_CASE("make: validation") {
    CHECK_THROWS_AS(CausalDiagram::make({"A", "B"}, {{0, 2}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(CausalDiagram::make({"A", "B"}, {{0, 0}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(CausalDiagram::make({"A", "B"}, {{0, 1}, {0, 1}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(CausalDiagram::make({"A", "B"}, {{0, 1}, {1, 0}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(CausalDiagram::make({"A", "B"}, {}, {{0, 1}, {1, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(CausalDiagram::make({"A", "A"}, {}, {}), std::invalid_argument);
    CHECK(parse_diagram("# only comments\n").size() == 0);
}

TEST_CASE("adjacency queries are sorted and symmetric where expected") {
    const CausalDiagram g = parse_diagram("C -> A\nB -> A\nA <-> C\nB <-> C\n");
    const int a = g.index_of("A"), b = g.index_of("B"), c = g.index_of("C");
    CHECK(g.parents(a) == std::vector<int>{std::min(b, c), std::max(b, c)});
    CHECK(g.children(c) == std::vector<int>{a});
    CHECK(g.bidirected_neighbors(c) == std::vector<int>{a, b});
    CHECK(g.bidirected_neighbors(a) == std::vector<int>{c});
    CHECK_THROWS_AS(g.index_of("missing"), std::invalid_argument);
    CHECK(g.contains("A"));
    CHECK_FALSE(g.contains("missing"));
}

TEST_CASE("topological_order: deterministic declaration tie-break") {
    // B and C are both ready after A; declaration order must break the tie.
    const CausalDiagram g = parse_diagram("node A\nnode C\nnode B\nA -> C\nA -> B\n");
    const auto order = topological_order(g);
    CHECK(order == std::vector<int>{g.index_of("A"), g.index_of("C"), g.index_of("B")});
}

TEST_CASE("topological_order: permutation respecting every edge (random graphs)") {
    Rng rng(7001);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(5));
        const CausalDiagram g = random_diagram(rng, n, 0.5, 0.3);
        const auto order = topological_order(g);
        REQUIRE(static_cast<int>(order.size()) == n);
        std::set<int> seen(order.begin(), order.end());
        CHECK(static_cast<int>(seen.size()) == n);
        const auto pos = positions(order, n);
        for (const auto& [from, to] : g.directed_edges()) CHECK(pos[from] < pos[to]);
    }
}

TEST_CASE("c2_components: known shapes") {
    const auto& bow = fixture("bow").graph;
    CHECK(c2_components(bow) ==
          std::vector<std::vector<int>>{{bow.index_of("X"), bow.index_of("Y")}});

    const CausalDiagram chain = parse_diagram("Z -> X\nX -> Y\n");
    CHECK(c2_components(chain) == std::vector<std::vector<int>>{{0}, {1}, {2}});

    const CausalDiagram triangle = parse_diagram("X <-> Y\nY <-> Z\nX <-> Z\n");
    CHECK(c2_components(triangle) == std::vector<std::vector<int>>{{0, 1, 2}});

    // Bidirected path: two overlapping maximal cliques, one connected component.
    const CausalDiagram path = parse_diagram("X <-> Y\nY <-> Z\n");
    CHECK(c2_components(path) == std::vector<std::vector<int>>{{0, 1}, {1, 2}});
    CHECK(c_components(path) == std::vector<std::vector<int>>{{0, 1, 2}});
}

TEST_CASE("c2_components: exactly the maximal cliques (brute force, random graphs)") {
    Rng rng(7002);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(6));
        const CausalDiagram g = random_diagram(rng, n, 0.2, 0.5);
        const auto comps = c2_components(g);

        auto adjacent = [&](int u, int v) { return g.has_bidirected(u, v); };
        auto is_clique = [&](const std::vector<int>& s) {
            for (std::size_t i = 0; i < s.size(); ++i)
                for (std::size_t j = i + 1; j < s.size(); ++j)
                    if (!adjacent(s[i], s[j])) return false;
            return true;
        };
        auto is_maximal = [&](const std::vector<int>& s) {
            for (int v = 0; v < n; ++v) {
                if (std::find(s.begin(), s.end(), v) != s.end()) continue;
                bool extends = true;
                for (int u : s) extends = extends && adjacent(u, v);
                if (extends) return false;
            }
            return true;
        };

        std::set<std::vector<int>> reported(comps.begin(), comps.end());
        CHECK(reported.size() == comps.size());
        for (const auto& comp : comps) {
            CHECK(is_clique(comp));
            CHECK(is_maximal(comp));
            CHECK(std::is_sorted(comp.begin(), comp.end()));
        }
        // Every maximal clique appears: enumerate all subsets.
        for (unsigned mask = 1; mask < (1u << n); ++mask) {
            std::vector<int> subset;
            for (int v = 0; v < n; ++v)
                if (mask & (1u << v)) subset.push_back(v);
            if (is_clique(subset) && is_maximal(subset)) CHECK(reported.count(subset) == 1);
        }
        CHECK(std::is_sorted(comps.begin(), comps.end()));
    }
}

TEST_CASE("c_components: disjoint partition refined by c2_components") {
    Rng rng(7003);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(6));
        const CausalDiagram g = random_diagram(rng, n, 0.3, 0.4);
        const auto parts = c_components(g);

        std::vector<int> owner(n, -1);
        for (std::size_t ci = 0; ci < parts.size(); ++ci)
            for (int v : parts[ci]) {
                CHECK(owner[v] == -1);  // disjoint
                owner[v] = static_cast<int>(ci);
            }
        for (int v = 0; v < n; ++v) CHECK(owner[v] != -1);  // exhaustive

        // Neighbors share a component; each confounded clique sits inside one.
        for (const auto& [a, b] : g.bidirected_edges()) CHECK(owner[a] == owner[b]);
        for (const auto& clique : c2_components(g)) {
            for (int v : clique) CHECK(owner[v] == owner[clique.front()]);
        }
    }
}

TEST_CASE("mutilate: removes edges into and incident to the intervened set") {
    const auto& bow = fixture("bow").graph;
    const CausalDiagram cut = mutilate(bow, {"X"});
    CHECK(cut.directed_edges() == bow.directed_edges());  // X -> Y survives
    CHECK(cut.bidirected_edges().empty());
    CHECK(cut.variables() == bow.variables());

    // Outgoing edges of the intervened variable survive; only Z -> X drops.
    const auto& backdoor = fixture("backdoor").graph;
    const CausalDiagram bd_cut = mutilate(backdoor, {"X"});
    const int bx = backdoor.index_of("X"), by = backdoor.index_of("Y"),
              bz = backdoor.index_of("Z");
    CHECK_FALSE(bd_cut.has_directed(bz, bx));
    CHECK(bd_cut.has_directed(bz, by));
    CHECK(bd_cut.has_directed(bx, by));
    CHECK(bd_cut.directed_edges().size() == 2);

    CHECK(serialize_diagram(mutilate(backdoor, {})) == serialize_diagram(backdoor));
    CHECK(serialize_diagram(mutilate(bd_cut, {"X"})) == serialize_diagram(bd_cut));
    CHECK_THROWS_AS(mutilate(bow, {"missing"}), std::invalid_argument);
}

TEST_CASE("induced_subgraph keeps relative order and inner edges") {
    const auto& napkin = fixture("napkin").graph;
    const std::vector<int> keep = {napkin.index_of("W"), napkin.index_of("X"),
                                   napkin.index_of("Y")};
    const CausalDiagram sub = induced_subgraph(napkin, keep);
    CHECK(sub.variables() == std::vector<std::string>{"W", "X", "Y"});
    CHECK(sub.has_directed(sub.index_of("X"), sub.index_of("Y")));
    CHECK_FALSE(sub.has_directed(sub.index_of("W"), sub.index_of("X")));  // went through R
    CHECK(sub.has_bidirected(sub.index_of("W"), sub.index_of("X")));
    CHECK(sub.has_bidirected(sub.index_of("W"), sub.index_of("Y")));
}

TEST_CASE("ancestors and descendants are inclusive and sorted") {
    const auto& backdoor = fixture("backdoor").graph;
    const int x = backdoor.index_of("X"), y = backdoor.index_of("Y"), z = backdoor.index_of("Z");
    CHECK(descendants(backdoor, std::vector<std::string>{"X"}) ==
          std::vector<int>{std::min(x, y), std::max(x, y)});
    CHECK(ancestors(backdoor, std::vector<std::string>{"Z"}) == std::vector<int>{z});

    const CausalDiagram chain = parse_diagram("Z -> X\nX -> Y\n");
    CHECK(ancestors(chain, std::vector<std::string>{"Y"}) == std::vector<int>{0, 1, 2});
    CHECK(descendants(chain, std::vector<std::string>{"Z"}) == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(ancestors(chain, std::vector<std::string>{"missing"}),
                    std::invalid_argument);

    // Index-based overload agrees with the name-based one.
    CHECK(ancestors(chain, std::vector<int>{2}) ==
          ancestors(chain, std::vector<std::string>{"Y"}));
}

TEST_CASE("benchmark fixtures: the eight expected diagrams in order") {
    const auto& all = benchmark_fixtures();
    REQUIRE(all.size() == 8);
    const std::vector<std::string> names = {"backdoor", "frontdoor", "m",  "napkin",
                                            "bow",      "extended_bow", "iv", "bad_m"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        CHECK(all[i].name == names[i]);
        CHECK(all[i].treatment == "X");
        CHECK(all[i].outcome == "Y");
        CHECK(all[i].identifiable == (i < 4));
        CHECK(&fixture(names[i]) == &all[i]);
    }
    CHECK_THROWS_AS(fixture("nope"), std::invalid_argument);

    // Spot-check two structures in full.
    const auto& backdoor = all[0].graph;
    CHECK(backdoor.variables() == std::vector<std::string>{"Z", "X", "Y"});
    CHECK(backdoor.directed_edges().size() == 3);
    CHECK(backdoor.bidirected_edges().empty());
    const auto& napkin = fixture("napkin").graph;
    CHECK(napkin.variables() == std::vector<std::string>{"W", "R", "X", "Y"});
    CHECK(napkin.bidirected_edges().size() == 2);
}
