#include <doctest.h>

#include <random>
#include <string>

#include "cmebal/network.hpp"

using namespace cmebal;

namespace {

const char* kReversible = R"(# isomerization
species: S1 S2
reaction: S1 -> S2 @ 150
reaction: S2 -> S1 @ 1
init: S1=300 S2=0
)";

const char* kEnzyme = R"(species: S E C P
reaction: S + E -> C @ 1
reaction: C -> S + E @ 1
reaction: C -> P + E @ 1
init: S=10 E=10
)";

Reaction mass_action(std::vector<StoichTerm> r, std::vector<StoichTerm> p, double k) {
    return Reaction{std::move(r), std::move(p), MassAction{k}};
}

}  // namespace

TEST_CASE("reversible reaction parses") {
    const auto net = parse_network(kReversible);
    CHECK(net.species_count() == 2);
    CHECK(net.reaction_count() == 2);
    CHECK(net.initial_state() == Population{300, 0});
    CHECK(net.species()[1].name == "S2");
    CHECK(net.species()[1].index == 1);
    const auto& ma = std::get<MassAction>(net.reactions()[0].propensity);
    CHECK(ma.rate == 150.0);
}

TEST_CASE("network without reactions is valid") {
    const auto net = parse_network("species: A\ninit: A=0\n");
    CHECK(net.reaction_count() == 0);
    CHECK(stoichiometry(net).rows() == 1);
    CHECK(stoichiometry(net).cols() == 0);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_network("species: S1 S2\nreaction: S1 -> S2 @ -1\ninit: S1=1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("reaction: S1 -> S2 @ -1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A\nreaction: A -> B @ 1\ninit: A=1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A A\ninit: A=1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A\nreaction: A -> 0 @ 1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A\nreaction: 3 A -> 0 @ 1\ninit: A=1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A\nreaction: A -> 0 @ 0\ninit: A=1\n"), ParseError);
    CHECK_THROWS_AS(parse_network("species: A B\nreaction: A + B -> 0 @ mm(1, 2)\ninit: A=1\n"), ParseError);

    try {
        parse_network("species: A\nreaction: A -> Q @ 1\ninit: A=1\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() == 16);
    }
}

TEST_CASE("unspecified init entries default to zero") {
    const auto net = parse_network("species: A B C\ninit: B=4\n");
    CHECK(net.initial_state() == Population{0, 4, 0});
}

TEST_CASE("stoichiometry") {
    SUBCASE("reversible") {
        const auto n = stoichiometry(parse_network(kReversible));
        CHECK(n(0, 0) == -1);
        CHECK(n(1, 0) == 1);
        CHECK(n(0, 1) == 1);
        CHECK(n(1, 1) == -1);
    }
    SUBCASE("enzyme") {
        const auto n = stoichiometry(parse_network(kEnzyme));
        Eigen::MatrixXi expected(4, 3);
        expected << -1, 1, 0,  //
            -1, 1, 1,          //
            1, -1, -1,         //
            0, 0, 1;
        CHECK(n == expected);
    }
}

TEST_CASE("propensity table") {
    const Reaction dimer = mass_action({{0, 2}}, {{1, 1}}, 4.0);
    const std::vector<int> s3{3, 0};
    CHECK(propensity(dimer, s3) == doctest::Approx(12.0));
    const std::vector<int> s1{1, 0};
    CHECK(propensity(dimer, s1) == 0.0);

    const Reaction mm{{{0, 1}}, {{1, 1}}, MichaelisMenten{2.0, 3.0}};
    const std::vector<int> s5{5, 0};
    CHECK(propensity(mm, s5) == doctest::Approx(1.25));

    const Reaction uni = mass_action({{0, 1}}, {{1, 1}}, 150.0);
    const std::vector<int> s0{0, 7};
    CHECK(propensity(uni, s0) == 0.0);

    const Reaction birth = mass_action({}, {{0, 1}}, 2.5);
    CHECK(propensity(birth, s0) == 2.5);

    const Reaction bi = mass_action({{0, 1}, {1, 1}}, {}, 0.5);
    const std::vector<int> s23{2, 3};
    CHECK(propensity(bi, s23) == doctest::Approx(3.0));
}

TEST_CASE("propensity is non-negative and vanishes without reactants") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> count(0, 6);
    const auto net = parse_network(R"(species: A B C
reaction: 0 -> A @ 3
reaction: A -> B @ 1.5
reaction: A + B -> C @ 0.25
reaction: 2 C -> A @ 0.75
reaction: B -> C @ mm(4, 2)
init: A=1
)");
    for (int trial = 0; trial < 500; ++trial) {
        const std::vector<int> s{count(rng), count(rng), count(rng)};
        for (const auto& r : net.reactions()) {
            const double a = propensity(r, s);
            CHECK(a >= 0.0);
            for (const auto& t : r.reactants)
                if (s[t.species] < t.count) CHECK(a == 0.0);
        }
    }
}

TEST_CASE("serialize and parse round trip") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> pick(0, 3), coin(0, 1), init(0, 20);
    std::uniform_real_distribution<double> rate(1e-3, 1e3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Reaction> reactions;
        for (int k = 0; k < 5; ++k) {
            const std::size_t a = static_cast<std::size_t>(pick(rng));
            std::size_t b = static_cast<std::size_t>(pick(rng));
            switch (pick(rng)) {
                case 0: reactions.push_back(mass_action({}, {{a, 1}}, rate(rng))); break;
                case 1: reactions.push_back(mass_action({{a, 2}}, {{b, 1}}, rate(rng))); break;
                case 2:
                    if (b == a) b = (a + 1) % 4;
                    reactions.push_back(mass_action({{a, 1}, {b, 1}}, {}, rate(rng)));
                    break;
                default: reactions.push_back(Reaction{{{a, 1}}, {{b, 1}}, MichaelisMenten{rate(rng), rate(rng)}});
            }
        }
        const ReactionNetwork net({"W", "X", "Y", "Z"}, reactions, {init(rng), init(rng), init(rng), init(rng)});
        const std::string text = serialize_network(net);
        const auto back = parse_network(text);
        CHECK(serialize_network(back) == text);
        CHECK(back.initial_state() == net.initial_state());
        for (std::size_t k = 0; k < net.reaction_count(); ++k) {
            const std::vector<int> s{3, 4, 5, 6};
            CHECK(propensity(back.reactions()[k], s) == propensity(net.reactions()[k], s));
        }
    }
}

TEST_CASE("constructor validation") {
    CHECK_THROWS_AS(ReactionNetwork({"A", "A"}, {}, {0, 0}), NetworkError);
    CHECK_THROWS_AS(ReactionNetwork({"A"}, {}, {-1}), NetworkError);
    CHECK_THROWS_AS(ReactionNetwork({"A"}, {}, {0, 1}), NetworkError);
    CHECK_THROWS_AS(ReactionNetwork({"A"}, {mass_action({{0, 1}}, {}, std::nan(""))}, {0}), NetworkError);
    CHECK_THROWS_AS(ReactionNetwork({"A", "B"}, {mass_action({{0, 2}, {1, 1}}, {}, 1.0)}, {0, 0}), NetworkError);
}
