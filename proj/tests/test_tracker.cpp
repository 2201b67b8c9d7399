// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "gtest/gtest.h"
#include "saqc/tracker.hpp"

using namespace saqc;

namespace {

Instance n3(std::vector<Clause> clauses)
{
    return make_instance(Family::X3SAT, 3, std::move(clauses));
}

} // namespace

TEST(SortClauses, Lexicographic)
{
    auto inst = make_instance(Family::X3SAT, 10,
                              {Clause::exactly_one(2, 5, 7), Clause::exactly_one(1, 2, 3),
                               Clause::exactly_one(1, 4, 9)});
    auto sorted = sort_clauses(inst);
    EXPECT_EQ(sorted[0].vars(), (std::array<VariableIndex, 3>{1, 2, 3}));
    EXPECT_EQ(sorted[1].vars(), (std::array<VariableIndex, 3>{1, 4, 9}));
    EXPECT_EQ(sorted[2].vars(), (std::array<VariableIndex, 3>{2, 5, 7}));
}

TEST(SortClauses, IdentityAndStability)
{
    auto a = Clause::forbidding({0, 1, 2}, {true, true, true});
    auto b = Clause::forbidding({0, 1, 2}, {false, false, false});
    auto c = Clause::forbidding({1, 2, 3}, {false, true, false});
    auto inst = make_instance(Family::SAT3, 4, {a, b, c});
    EXPECT_EQ(clause_order(inst), (std::vector<std::size_t>{0, 1, 2}));
    auto swapped = make_instance(Family::SAT3, 4, {b, c, a});
    EXPECT_EQ(clause_order(swapped), (std::vector<std::size_t>{0, 2, 1}));
    EXPECT_EQ(clause_order(swapped, SortKey::Original), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ApplyClause, FirstExactCover)
{
    auto [state, rec] = apply_clause(ActiveSetState(3), Clause::exactly_one(0, 1, 2));
    EXPECT_EQ(state.cardinality(), 3u);
    EXPECT_EQ(state.n_active(), 3u);
    EXPECT_EQ(rec.d_before, 8u);
    EXPECT_EQ(rec.d_after, 3u);
    EXPECT_NEAR(rec.log2_ratio, std::log2(8.0 / 3.0), 1e-15);
}

TEST(ApplyClause, FirstForbiddenTriple)
{
    auto [state, rec] =
        apply_clause(ActiveSetState(3), Clause::forbidding({0, 1, 2}, {false, false, false}));
    EXPECT_EQ(state.cardinality(), 7u);
    EXPECT_EQ(rec.d_after, 7u);
    EXPECT_NEAR(rec.log2_ratio, std::log2(8.0 / 7.0), 1e-15);
}

TEST(ApplyClause, ExtendsOnlyNewBits)
{
    // A = {00} over {0, 1}: reach it with s0 = s1 = 0 forced on a wider instance.
    ActiveSetState st(4);
    st.apply(Clause::forbidding({0, 1, 3}, {true, false, false}), 0);
    st.apply(Clause::forbidding({0, 1, 3}, {false, true, false}), 1);
    st.apply(Clause::forbidding({0, 1, 3}, {true, true, false}), 2);
    st.apply(Clause::forbidding({0, 1, 3}, {true, false, true}), 3);
    st.apply(Clause::forbidding({0, 1, 3}, {false, true, true}), 4);
    st.apply(Clause::forbidding({0, 1, 3}, {true, true, true}), 5);
    st.apply(Clause::forbidding({0, 1, 3}, {false, false, true}), 6);
    ASSERT_EQ(st.cardinality(), 1u); // s0 = s1 = s3 = 0
    auto rec = st.apply(Clause::exactly_one(0, 1, 2), 7);
    EXPECT_EQ(rec.n_active_before, 3u);
    EXPECT_EQ(rec.n_active_after, 4u);
    EXPECT_EQ(st.cardinality(), 1u); // only s2 = 1 survives
    const auto p = st.patterns()[0];
    EXPECT_EQ((p >> st.slot(2)) & 1u, 1u);
    EXPECT_EQ((p >> st.slot(0)) & 1u, 0u);
}

TEST(ApplyClause, CapacityExceededLeavesStateIntact)
{
    ActiveSetState st(6);
    try {
        st.apply(Clause::forbidding({0, 1, 2}, {true, true, true}), 0, 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::CapacityExceeded);
    }
    EXPECT_EQ(st.n_active(), 0u);
    EXPECT_EQ(st.cardinality(), 1u);
}

TEST(RunTrace, SingleClause)
{
    auto res = run_trace(n3({Clause::exactly_one(0, 1, 2)}));
    EXPECT_EQ(res.trace.d_sequence(), (std::vector<std::uint64_t>{8, 3}));
    ASSERT_TRUE(res.record.beta);
    EXPECT_NEAR(*res.record.beta, std::log2(8.0 / 3.0), 1e-15);
    EXPECT_NEAR(*res.record.t_m_over_omega, 8.0 / 3.0, 1e-15);
}

TEST(RunTrace, TwoClausesMatchEnumeration)
{
    // Expected values from the oracle below: 010 and 100 survive.
    auto inst = n3({Clause::exactly_one(0, 1, 2), Clause::forbidding({0, 1, 2}, {false, false, true})});
    auto res = run_trace(inst);
    EXPECT_EQ(res.trace.d_sequence(), (std::vector<std::uint64_t>{8, 3, 2}));
    EXPECT_EQ(res.trace.d_sequence(), brute_force_trace(inst).d_sequence());
    EXPECT_NEAR(*res.record.beta, std::log2(8.0 / 3.0), 1e-15);
    EXPECT_NEAR(*res.record.t_m_over_omega, 8.0 / 3.0 + 1.5, 1e-14);
    EXPECT_EQ(unstructured_time(res.trace).value(), 4.0);
    EXPECT_EQ(unstructured_time(run_trace(n3({Clause::exactly_one(0, 1, 2)})).trace).value(),
              8.0 / 3.0);
}

TEST(RunTrace, UnsatStopsEarly)
{
    auto inst = n3({Clause::exactly_one(0, 1, 2), Clause::forbidding({0, 1, 2}, {true, false, false}),
                    Clause::forbidding({0, 1, 2}, {false, true, false}),
                    Clause::forbidding({0, 1, 2}, {false, false, true}),
                    Clause::forbidding({0, 1, 2}, {true, true, true})});
    auto res = run_trace(inst);
    EXPECT_FALSE(res.trace.satisfiable);
    EXPECT_EQ(res.trace.steps.size(), 4u);
    EXPECT_EQ(res.trace.final_d(), 0u);
    EXPECT_FALSE(res.record.beta);
    EXPECT_EQ(res.record.status, TraceStatus::Unsat);
    auto bf = brute_force_trace(inst);
    EXPECT_FALSE(bf.satisfiable);
    EXPECT_EQ(bf.d_sequence(), res.trace.d_sequence());
    EXPECT_THROW(unstructured_time(res.trace), Error);
}

TEST(BruteForce, SizeLimit)
{
    auto inst = generate_instance(Family::X3SAT, 25, 0.6, 1);
    try {
        brute_force_trace(inst);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::OracleTooLarge);
    }
}

TEST(TraceProperties, OracleEquivalenceAndInvariants)
{
    for (auto fam : {Family::X3SAT, Family::SAT3}) {
        const double alpha = fam == Family::X3SAT ? 0.62 : 4.25;
        for (std::uint32_t n : {5u, 9u, 14u}) {
            for (std::uint64_t seed = 0; seed < 60; ++seed) {
                auto inst = generate_instance(fam, n, alpha, seed * 7919 + n);
                auto res = run_trace(inst);
                auto bf = brute_force_trace(inst);
                ASSERT_EQ(res.trace.d_sequence(), bf.d_sequence());
                ASSERT_EQ(res.trace.satisfiable, bf.satisfiable);
                ASSERT_EQ(res.trace.steps, bf.steps);

                double sum = 0;
                std::uint32_t prev_active = 0;
                for (const auto& s : res.trace.steps) {
                    EXPECT_LE(s.d_after, s.d_before);
                    EXPECT_GE(s.log2_ratio, 0.0);
                    EXPECT_GE(s.n_active_after, prev_active);
                    EXPECT_LE(s.n_active_after - s.n_active_before, 3u);
                    EXPECT_LE(s.n_active_after, n);
                    prev_active = s.n_active_after;
                    sum += s.log2_ratio;
                }
                if (res.trace.satisfiable) {
                    // Telescoping sum.
                    EXPECT_NEAR(sum, n - std::log2(double(res.trace.final_d())), 1e-9);
                    EXPECT_LE(*res.record.beta, n);
                    EXPECT_GE(*res.record.t_m_over_omega, double(inst.clauses.size()) - 1e-9);
                    EXPECT_GE(unstructured_time(res.trace).log2(), *res.record.beta - 1e-12);
                }
            }
        }
    }
}

TEST(TraceProperties, TimeEqualsClauseCountIffNothingRemoved)
{
    auto inst = make_instance(Family::SAT3, 6,
                              {Clause::forbidding({0, 1, 2}, {true, true, true}),
                               Clause::forbidding({0, 1, 2}, {true, true, true})});
    auto res = run_trace(inst);
    EXPECT_GT(*res.record.t_m_over_omega, 2.0); // first clause removes 1/8
    auto second = res.trace.steps[1];
    EXPECT_EQ(second.d_before, second.d_after);
    EXPECT_EQ(second.log2_ratio, 0.0);
}

TEST(TraceProperties, DecompositionMatchesFullEnumeration)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = generate_instance(seed % 2 ? Family::SAT3 : Family::X3SAT, 10,
                                      seed % 2 ? 4.25 : 0.62, seed);
        const auto sorted = sort_clauses(inst);
        ActiveSetState st(inst.n_vars);
        for (std::size_t m = 0; m < sorted.size(); ++m) {
            st.apply(sorted[m], m);
            std::set<std::uint64_t> expanded;
            for (auto p : st.patterns()) {
                std::uint64_t base = 0;
                for (std::uint32_t k = 0; k < st.n_active(); ++k)
                    base |= ((p >> k) & 1u) << st.active_vars()[k];
                std::vector<VariableIndex> free;
                for (VariableIndex v = 0; v < inst.n_vars; ++v)
                    if (st.slot(v) < 0)
                        free.push_back(v);
                for (std::uint64_t e = 0; e < (1u << free.size()); ++e) {
                    std::uint64_t s = base;
                    for (std::size_t k = 0; k < free.size(); ++k)
                        s |= ((e >> k) & 1u) << free[k];
                    expanded.insert(s);
                }
            }
            std::set<std::uint64_t> direct;
            for (std::uint64_t s = 0; s < 1024; ++s) {
                bool ok = true;
                for (std::size_t k = 0; k <= m && ok; ++k)
                    ok = sorted[k].satisfied_by_word(s);
                if (ok)
                    direct.insert(s);
            }
            ASSERT_EQ(expanded, direct);
            ASSERT_EQ(expanded.size(), st.d());
            if (st.cardinality() == 0)
                break;
        }
    }
}

TEST(TraceProperties, WorkerCountIsUnobservable)
{
    auto inst = generate_instance(Family::SAT3, 24, 3.0, 11);
    const auto sorted = sort_clauses(inst);
    ActiveSetState serial(inst.n_vars);
    std::vector<ActiveSetState> parallel;
    for (int k = 0; k < 3; ++k)
        parallel.emplace_back(inst.n_vars);
    for (std::size_t m = 0; m < sorted.size(); ++m) {
        auto ref = serial.apply(sorted[m], m);
        unsigned w[] = {2, 3, 8};
        for (std::size_t k = 0; k < parallel.size(); ++k) {
            EXPECT_EQ(parallel[k].apply(sorted[m], m, kDefaultMemoryCap, w[k]), ref);
            EXPECT_EQ(parallel[k].patterns(), serial.patterns());
        }
        if (serial.cardinality() == 0)
            break;
    }
}
