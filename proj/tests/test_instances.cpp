// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "saqc/instances.hpp"

using namespace saqc;

namespace {

std::vector<std::uint8_t> bits(std::initializer_list<int> v)
{
    std::vector<std::uint8_t> out;
    for (int b : v)
        out.push_back(static_cast<std::uint8_t>(b));
    return out;
}

} // namespace

TEST(Generate, ClauseCountRoundsHalfUp)
{
    EXPECT_EQ(generate_instance(Family::X3SAT, 16, 0.62, 1).clauses.size(), 10u);
    auto sat = generate_instance(Family::SAT3, 32, 4.25, 7);
    EXPECT_EQ(sat.clauses.size(), 136u);
    for (const auto& c : sat.clauses)
        EXPECT_EQ(c.kind(), Clause::Kind::ForbiddenTriple);
    EXPECT_EQ(clause_count(0.5, 3), 2u); // 1.5 rounds up
}

TEST(Generate, Deterministic)
{
    auto a = generate_instance(Family::SAT3, 16, 4.25, 42);
    auto b = generate_instance(Family::SAT3, 16, 4.25, 42);
    EXPECT_EQ(a, b);
    EXPECT_EQ(serialize_instance(a), serialize_instance(b));
    EXPECT_NE(a, generate_instance(Family::SAT3, 16, 4.25, 43));
}

TEST(Generate, FollowsDocumentedConsumptionOrder)
{
    // Re-derive the clause list from the raw engine.
    const std::uint32_t n = 11;
    for (std::uint64_t seed : {0ull, 5ull, 123456789ull}) {
        auto inst = generate_instance(Family::SAT3, n, 2.0, seed);
        std::mt19937_64 rng(seed);
        auto draw = [&] {
            const std::uint64_t lim = (0 - std::uint64_t{n}) % n;
            for (;;) {
                auto x = rng();
                if (x >= lim)
                    return static_cast<std::uint32_t>(x % n);
            }
        };
        for (const auto& c : inst.clauses) {
            std::uint32_t i, j, k;
            do {
                i = draw();
                j = draw();
                k = draw();
            } while (i == j || i == k || j == k);
            auto w = rng();
            EXPECT_EQ(c, Clause::forbidding({i, j, k}, {bool(w & 1), bool(w & 2), bool(w & 4)}));
        }
        EXPECT_EQ(inst.prng, "mt19937_64");
    }
}

TEST(Generate, Errors)
{
    try {
        generate_instance(Family::X3SAT, 2, 1.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvalidSize);
    }
    try {
        generate_instance(Family::X3SAT, 10, 0.01, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyInstance);
    }
}

TEST(Generate, IndexFrequenciesMatchBinomial)
{
    // 10^5 clauses at N = 32; each index should appear 3M/N times within 5 sigma.
    const std::uint32_t n = 32;
    std::vector<std::uint64_t> count(n, 0);
    std::size_t clauses = 0;
    for (std::uint64_t seed = 0; clauses < 100000; ++seed) {
        auto inst = generate_instance(Family::X3SAT, n, 4.0, seed);
        for (const auto& c : inst.clauses) {
            for (auto v : c.vars())
                ++count[v];
            if (++clauses == 100000)
                break;
        }
    }
    const double p = 3.0 / n;
    const double mean = clauses * p;
    const double sigma = std::sqrt(clauses * p * (1 - p));
    for (auto c : count)
        EXPECT_LT(std::abs(c - mean), 5 * sigma);
}

TEST(Clause, CanonicalForm)
{
    auto c = Clause::forbidding({7, 2, 5}, {true, false, true});
    EXPECT_EQ(c.vars(), (std::array<VariableIndex, 3>{2, 5, 7}));
    EXPECT_EQ(c.forbidden(), (std::array<bool, 3>{false, true, true}));
    EXPECT_THROW(Clause::exactly_one(1, 1, 2), Error);
}

TEST(Clause, EvaluationIsInvariantUnderCanonicalization)
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<VariableIndex, 3> v{0, 1, 2};
        std::shuffle(v.begin(), v.end(), rng);
        std::array<bool, 3> val{bool(rng() & 1), bool(rng() & 1), bool(rng() & 1)};
        auto c = Clause::forbidding(v, val);
        for (unsigned s = 0; s < 8; ++s) {
            auto a = bits({int(s & 1), int((s >> 1) & 1), int((s >> 2) & 1)});
            const bool forbidden = a[v[0]] == val[0] && a[v[1]] == val[1] && a[v[2]] == val[2];
            EXPECT_EQ(evaluate_clause(c, a), !forbidden);
            EXPECT_EQ(c.satisfied_by_word(s), !forbidden);
        }
    }
}

TEST(Evaluate, ExactlyOne)
{
    auto c = Clause::exactly_one(0, 1, 2);
    EXPECT_TRUE(evaluate_clause(c, bits({1, 0, 0})));
    EXPECT_FALSE(evaluate_clause(c, bits({1, 1, 0})));
    EXPECT_FALSE(evaluate_clause(c, bits({0, 0, 0})));
}

TEST(Evaluate, ForbiddenTriple)
{
    auto c = Clause::forbidding({0, 1, 2}, {false, true, false});
    EXPECT_FALSE(evaluate_clause(c, bits({0, 1, 0})));
    EXPECT_TRUE(evaluate_clause(c, bits({0, 1, 1})));
}

TEST(Evaluate, Instance)
{
    auto inst = make_instance(Family::X3SAT, 3, {Clause::exactly_one(0, 1, 2)});
    // "001" read as s_1 s_2 s_3 = 0 0 1
    EXPECT_TRUE(evaluate_instance(inst, bits({0, 0, 1})));
    EXPECT_FALSE(evaluate_instance(inst, bits({0, 0, 0})));
    EXPECT_THROW(evaluate_instance(inst, bits({0, 1})), Error);
    EXPECT_THROW(evaluate_clause(Clause::exactly_one(0, 1, 5), bits({0, 1, 0})), Error);
}

TEST(Evaluate, ConjunctionOfClauses)
{
    auto inst = generate_instance(Family::SAT3, 8, 2.0, 3);
    for (std::uint64_t s = 0; s < 256; ++s) {
        std::vector<std::uint8_t> a(8);
        bool all = true;
        for (int i = 0; i < 8; ++i)
            a[i] = (s >> i) & 1;
        for (const auto& c : inst.clauses)
            all = all && evaluate_clause(c, a);
        EXPECT_EQ(evaluate_instance(inst, a), all);
    }
}

TEST(Format, SerializeMinimal)
{
    auto inst = make_instance(Family::X3SAT, 3, {Clause::exactly_one(0, 1, 2)});
    EXPECT_EQ(serialize_instance(inst), "p saqc x3sat 3 1\nx 1 2 3\n");
    EXPECT_EQ(parse_instance("p saqc x3sat 3 1\nx 1 2 3\n"), inst);
}

TEST(Format, SignedLiterals)
{
    auto inst = make_instance(Family::SAT3, 4, {Clause::forbidding({3, 0, 1}, {true, false, true})});
    EXPECT_EQ(serialize_instance(inst), "p saqc 3sat 4 1\nf -1 2 4\n");
}

TEST(Format, MetadataIsEmittedAndRead)
{
    auto inst = generate_instance(Family::SAT3, 16, 4.25, 42);
    const auto text = serialize_instance(inst);
    EXPECT_NE(text.find("c seed=42\n"), std::string::npos);
    EXPECT_NE(text.find("c alpha=4.25\n"), std::string::npos);
    EXPECT_NE(text.find("c prng=mt19937_64\n"), std::string::npos);
    EXPECT_EQ(parse_instance(text), inst);
}

TEST(Format, RoundTripProperty)
{
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const auto fam = (rng() & 1) ? Family::SAT3 : Family::X3SAT;
        const auto n = static_cast<std::uint32_t>(3 + rng() % 40);
        const double alpha = fam == Family::SAT3 ? 1.0 + (rng() % 400) / 100.0
                                                 : 0.3 + (rng() % 60) / 100.0;
        auto inst = generate_instance(fam, n, alpha, rng());
        ASSERT_EQ(parse_instance(serialize_instance(inst)), inst);
    }
}

TEST(Format, ParseErrorsCarryLineNumbers)
{
    auto expect_line = [](const std::string& text, std::size_t line) {
        try {
            parse_instance(text);
            ADD_FAILURE() << "no error for: " << text;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.code(), Errc::ParseError);
            EXPECT_EQ(e.line(), line) << e.what();
        }
    };
    expect_line("p saqc x3sat 3 2\nx 1 2 3\n", 2);       // missing clause
    expect_line("p saqc x3sat 3\nx 1 2 3\n", 1);         // malformed header
    expect_line("c hi\np saqc x3sat 3 1\nx 1 2 4\n", 3); // index out of range
    expect_line("p saqc x3sat 3 1\nx 1 2 3\nx 1 2 3\n", 3);
    expect_line("x 1 2 3\n", 1);
    expect_line("p saqc 3sat 3 1\nx 1 2 3\n", 2);
    expect_line("p saqc x3sat 3 1\nx 1 1 3\n", 2);
    expect_line("p dimacs cnf 3 1\n", 1);
}
