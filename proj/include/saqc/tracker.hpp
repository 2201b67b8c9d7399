// SPDX-License-Identifier: Apache-2.0
#pragma once

// Clause-by-clause propagation of the solution set S_m = A_m x I_m, where
// A_m holds bit patterns over the active variables only. Every cardinality
// is an exact integer; floating point appears only in log2 ratios.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "saqc/error.hpp"
#include "saqc/instances.hpp"

namespace saqc {

/// d_m must fit in a 64-bit word.
inline constexpr std::uint32_t kMaxTrackerVars = 63;
inline constexpr std::uint32_t kMaxOracleVars = 24;
inline constexpr std::size_t kDefaultMemoryCap = std::size_t{1} << 28;

enum class SortKey : std::uint8_t { Lexicographic, MaxIndex, Original };

constexpr std::string_view sort_key_name(SortKey k) noexcept
{
    switch (k) {
    case SortKey::Lexicographic: return "lexicographic";
    case SortKey::MaxIndex: return "max-index";
    case SortKey::Original: return "original";
    }
    return "unknown";
}

inline std::optional<SortKey> parse_sort_key(std::string_view s) noexcept
{
    for (SortKey k : {SortKey::Lexicographic, SortKey::MaxIndex, SortKey::Original})
        if (s == sort_key_name(k))
            return k;
    return std::nullopt;
}

/// Original clause positions in processing order. Stable, so equal keys keep
/// their input order.
inline std::vector<std::size_t> clause_order(const Instance& inst,
                                             SortKey key = SortKey::Lexicographic)
{
    std::vector<std::size_t> order(inst.clauses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& cl = inst.clauses;
    switch (key) {
    case SortKey::Lexicographic:
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return cl[a].vars() < cl[b].vars();
        });
        break;
    case SortKey::MaxIndex:
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return cl[a].vars()[2] < cl[b].vars()[2];
        });
        break;
    case SortKey::Original:
        break;
    }
    return order;
}

inline std::vector<Clause> sort_clauses(const Instance& inst,
                                        SortKey key = SortKey::Lexicographic)
{
    std::vector<Clause> out;
    out.reserve(inst.clauses.size());
    for (std::size_t i : clause_order(inst, key))
        out.push_back(inst.clauses[i]);
    return out;
}

struct StepRecord {
    std::size_t clause_id = 0; ///< position in the instance's original clause list
    std::uint32_t n_active_before = 0;
    std::uint32_t n_active_after = 0;
    std::uint64_t card_before = 0; ///< |A_{m-1}|
    std::uint64_t card_after = 0;  ///< |A_m|
    std::uint64_t d_before = 0;
    std::uint64_t d_after = 0;
    /// log2(d_{m-1}/d_m); +inf when the step empties the solution set.
    double log2_ratio = 0.0;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

namespace detail {

inline double log2_ratio(std::uint64_t card_before, std::uint32_t added_bits,
                         std::uint64_t card_after)
{
    if (card_after == 0)
        return std::numeric_limits<double>::infinity();
    // A correctly rounded quotient of two exact values keeps log2 >= 0.
    if (card_before < (std::uint64_t{1} << (53 - added_bits)) && card_after < (std::uint64_t{1} << 53))
        return std::log2(static_cast<double>(card_before << added_bits) /
                         static_cast<double>(card_after));
    return std::log2(static_cast<double>(card_before)) + added_bits -
           std::log2(static_cast<double>(card_after));
}

} // namespace detail

/// The set A_m over the active variables. Variables are activated in the
/// order they first appear; slot k of a pattern is the k-th activated one.
class ActiveSetState {
public:
    explicit ActiveSetState(std::uint32_t n_vars)
        : n_vars_(n_vars)
        , slot_(n_vars, -1)
        , patterns_{0}
    {
        if (n_vars > kMaxTrackerVars)
            throw Error(Errc::InvalidSize, "tracker supports at most 63 variables");
    }

    std::uint32_t n_vars() const noexcept { return n_vars_; }
    std::uint32_t n_active() const noexcept { return static_cast<std::uint32_t>(active_.size()); }
    const std::vector<VariableIndex>& active_vars() const noexcept { return active_; }
    const std::vector<std::uint64_t>& patterns() const noexcept { return patterns_; }
    std::uint64_t cardinality() const noexcept { return patterns_.size(); }

    /// d_m = |A_m| * 2^(N - n_a).
    std::uint64_t d() const noexcept { return cardinality() << (n_vars_ - n_active()); }

    /// Slot of `v` in a pattern, or -1 when inactive.
    int slot(VariableIndex v) const { return slot_.at(v); }

    /// Extends every pattern over the clause's newly activated variables and
    /// keeps the extensions that satisfy it. `workers` > 1 splits A_{m-1}
    /// into contiguous chunks whose results are concatenated in chunk order,
    /// so the output is identical for every worker count.
    StepRecord apply(const Clause& clause, std::size_t clause_id,
                     std::size_t memory_cap = kDefaultMemoryCap, unsigned workers = 1)
    {
        if (clause.vars()[2] >= n_vars_)
            throw Error(Errc::IndexError, "clause variable out of range");
        StepRecord rec;
        rec.clause_id = clause_id;
        rec.n_active_before = n_active();
        rec.card_before = cardinality();
        rec.d_before = d();

        std::uint32_t added = 0;
        for (VariableIndex v : clause.vars()) {
            if (slot_[v] < 0) {
                slot_[v] = static_cast<int>(active_.size());
                active_.push_back(v);
                ++added;
            }
        }
        const std::array<unsigned, 3> slots{static_cast<unsigned>(slot_[clause.vars()[0]]),
                                            static_cast<unsigned>(slot_[clause.vars()[1]]),
                                            static_cast<unsigned>(slot_[clause.vars()[2]])};
        const unsigned base = rec.n_active_before;
        const std::uint64_t fanout = std::uint64_t{1} << added;

        // allowed[o] has bit e set when extension e of a pattern whose clause
        // bits read o (new bits still zero) satisfies the clause.
        std::array<std::uint8_t, 8> allowed{};
        for (unsigned o = 0; o < 8; ++o) {
            for (std::uint64_t e = 0; e < fanout; ++e) {
                unsigned local = 0;
                for (unsigned k = 0; k < 3; ++k) {
                    const unsigned bit = slots[k] < base ? (o >> k) & 1u
                                                         : static_cast<unsigned>(e >> (slots[k] - base)) & 1u;
                    local |= bit << k;
                }
                if (clause.satisfied_by(local))
                    allowed[o] |= static_cast<std::uint8_t>(1u << e);
            }
        }
        auto clause_bits = [&](std::uint64_t p) {
            return static_cast<unsigned>(((p >> slots[0]) & 1u) | (((p >> slots[1]) & 1u) << 1) |
                                         (((p >> slots[2]) & 1u) << 2));
        };

        if (added == 0) {
            // Pure filter: compact in place, order preserved.
            std::erase_if(patterns_, [&](std::uint64_t p) { return allowed[clause_bits(p)] == 0; });
        } else {
            try {
                patterns_ = extend_all(allowed, clause_bits, base, memory_cap, workers);
            } catch (...) {
                // Leave the state as it was before the call.
                for (std::uint32_t k = 0; k < added; ++k) {
                    slot_[active_.back()] = -1;
                    active_.pop_back();
                }
                throw;
            }
        }

        rec.n_active_after = n_active();
        rec.card_after = cardinality();
        rec.d_after = d();
        rec.log2_ratio = detail::log2_ratio(rec.card_before, added, rec.card_after);
        return rec;
    }

private:
    /// Counts survivors per chunk, checks the cap, then writes every chunk
    /// at its prefix offset; the result is independent of the chunking.
    template <typename Bits>
    std::vector<std::uint64_t> extend_all(const std::array<std::uint8_t, 8>& allowed, Bits& bits,
                                          unsigned base, std::size_t memory_cap,
                                          unsigned workers) const
    {
        const std::size_t n = patterns_.size();
        const unsigned chunks = workers > 1 && n >= 2 * std::size_t{workers} ? workers : 1u;
        auto run = [&](auto&& body) {
            if (chunks == 1) {
                body(0u);
                return;
            }
            std::vector<std::jthread> pool;
            pool.reserve(chunks);
            for (unsigned c = 0; c < chunks; ++c)
                pool.emplace_back([&, c] { body(c); });
        };
        auto range = [&](unsigned c) {
            return std::pair{n * c / chunks, n * (c + 1) / chunks};
        };

        std::vector<std::size_t> count(chunks, 0);
        run([&](unsigned c) {
            auto [b, e] = range(c);
            std::size_t k = 0;
            for (std::size_t i = b; i < e; ++i)
                k += static_cast<std::size_t>(std::popcount(allowed[bits(patterns_[i])]));
            count[c] = k;
        });
        std::vector<std::size_t> offset(chunks + 1, 0);
        for (unsigned c = 0; c < chunks; ++c)
            offset[c + 1] = offset[c] + count[c];
        if (offset[chunks] > memory_cap)
            throw Error(Errc::CapacityExceeded, "active set exceeds memory cap of " +
                                                    std::to_string(memory_cap) + " patterns");

        std::vector<std::uint64_t> next(offset[chunks]);
        run([&](unsigned c) {
            auto [b, e] = range(c);
            std::uint64_t* out = next.data() + offset[c];
            for (std::size_t i = b; i < e; ++i) {
                const std::uint64_t p = patterns_[i];
                for (unsigned m = allowed[bits(p)]; m != 0; m &= m - 1)
                    *out++ = p | (std::uint64_t(std::countr_zero(m)) << base);
            }
        });
        return next;
    }

    std::uint32_t n_vars_;
    std::vector<int> slot_;
    std::vector<VariableIndex> active_;
    std::vector<std::uint64_t> patterns_;
};

/// Value-returning form of ActiveSetState::apply.
inline std::pair<ActiveSetState, StepRecord>
apply_clause(ActiveSetState state, const Clause& clause, std::size_t clause_id = 0,
             std::size_t memory_cap = kDefaultMemoryCap, unsigned workers = 1)
{
    StepRecord rec = state.apply(clause, clause_id, memory_cap, workers);
    return {std::move(state), rec};
}

struct SolutionTrace {
    std::uint32_t n_vars = 0;
    std::size_t n_clauses = 0;
    SortKey sort_key = SortKey::Lexicographic;
    std::vector<StepRecord> steps;
    bool satisfiable = false;

    /// d_0 = 2^N, then d_m for every recorded step.
    std::vector<std::uint64_t> d_sequence() const
    {
        std::vector<std::uint64_t> d{std::uint64_t{1} << n_vars};
        for (const auto& s : steps)
            d.push_back(s.d_after);
        return d;
    }

    std::uint64_t final_d() const
    {
        return steps.empty() ? std::uint64_t{1} << n_vars : steps.back().d_after;
    }

    friend bool operator==(const SolutionTrace&, const SolutionTrace&) = default;
};

enum class TraceStatus : std::uint8_t { Sat, Unsat, Aborted };

constexpr std::string_view status_name(TraceStatus s) noexcept
{
    switch (s) {
    case TraceStatus::Sat: return "sat";
    case TraceStatus::Unsat: return "unsat";
    case TraceStatus::Aborted: return "aborted";
    }
    return "unknown";
}

inline std::optional<TraceStatus> parse_status(std::string_view s) noexcept
{
    for (TraceStatus t : {TraceStatus::Sat, TraceStatus::Unsat, TraceStatus::Aborted})
        if (s == status_name(t))
            return t;
    return std::nullopt;
}

/// One campaign row. beta and the time sums are present only for satisfiable
/// instances.
struct BetaRecord {
    std::uint64_t instance_seed = 0;
    Family family = Family::X3SAT;
    std::uint32_t n_vars = 0;
    std::size_t n_clauses = 0;
    TraceStatus status = TraceStatus::Unsat;
    std::optional<double> beta;
    std::optional<double> t_m_over_omega; ///< sum over steps of d_{m-1}/d_m
    std::uint64_t max_active_set = 0;

    bool satisfiable() const noexcept { return status == TraceStatus::Sat; }

    std::optional<double> log2_tm() const
    {
        if (!t_m_over_omega)
            return std::nullopt;
        return std::log2(*t_m_over_omega);
    }
};

struct TraceOptions {
    SortKey sort_key = SortKey::Lexicographic;
    std::size_t memory_cap = kDefaultMemoryCap;
    unsigned workers = 1;
};

struct TraceResult {
    SolutionTrace trace;
    BetaRecord record;
};

inline BetaRecord summarize(const Instance& inst, const SolutionTrace& trace,
                            std::uint64_t max_active_set)
{
    BetaRecord r;
    r.instance_seed = inst.seed.value_or(0);
    r.family = inst.family;
    r.n_vars = inst.n_vars;
    r.n_clauses = inst.clauses.size();
    r.max_active_set = max_active_set;
    r.status = trace.satisfiable ? TraceStatus::Sat : TraceStatus::Unsat;
    if (trace.satisfiable) {
        double beta = 0.0;
        double tm = 0.0;
        for (const auto& s : trace.steps) {
            beta = std::max(beta, s.log2_ratio);
            tm += static_cast<double>(s.d_before) / static_cast<double>(s.d_after);
        }
        r.beta = beta;
        r.t_m_over_omega = tm;
    }
    return r;
}

/// Record for an instance whose active set outgrew the memory cap.
inline BetaRecord aborted_record(const Instance& inst)
{
    BetaRecord r;
    r.instance_seed = inst.seed.value_or(0);
    r.family = inst.family;
    r.n_vars = inst.n_vars;
    r.n_clauses = inst.clauses.size();
    r.status = TraceStatus::Aborted;
    return r;
}

/// Sorts the clauses and propagates A_m through all of them, stopping at the
/// first step that leaves no assignment.
inline TraceResult run_trace(const Instance& inst, const TraceOptions& opts = {})
{
    validate(inst);
    ActiveSetState state(inst.n_vars);
    TraceResult out;
    out.trace.n_vars = inst.n_vars;
    out.trace.n_clauses = inst.clauses.size();
    out.trace.sort_key = opts.sort_key;
    out.trace.satisfiable = true;
    std::uint64_t max_active = state.cardinality();
    for (std::size_t id : clause_order(inst, opts.sort_key)) {
        out.trace.steps.push_back(
            state.apply(inst.clauses[id], id, opts.memory_cap, opts.workers));
        max_active = std::max(max_active, state.cardinality());
        if (state.cardinality() == 0) {
            out.trace.satisfiable = false;
            break;
        }
    }
    out.record = summarize(inst, out.trace, max_active);
    return out;
}

/// Independent oracle: every d_m by filtering all 2^N assignments.
inline SolutionTrace brute_force_trace(const Instance& inst,
                                       SortKey key = SortKey::Lexicographic)
{
    validate(inst);
    if (inst.n_vars > kMaxOracleVars)
        throw Error(Errc::OracleTooLarge, "brute force limited to 24 variables");
    const auto order = clause_order(inst, key);
    const std::size_t m = order.size();
    std::vector<Clause> sorted;
    for (auto i : order)
        sorted.push_back(inst.clauses[i]);

    // first_violated[f] = number of assignments whose first violated clause is f.
    std::vector<std::uint64_t> first_violated(m + 1, 0);
    const std::uint64_t total = std::uint64_t{1} << inst.n_vars;
    for (std::uint64_t s = 0; s < total; ++s) {
        std::size_t f = 0;
        while (f < m && sorted[f].satisfied_by_word(s))
            ++f;
        ++first_violated[f];
    }

    SolutionTrace tr;
    tr.n_vars = inst.n_vars;
    tr.n_clauses = m;
    tr.sort_key = key;
    tr.satisfiable = true;
    std::vector<bool> active(inst.n_vars, false);
    std::uint32_t n_active = 0;
    std::uint64_t d = total;
    for (std::size_t k = 0; k < m; ++k) {
        StepRecord rec;
        rec.clause_id = order[k];
        rec.n_active_before = n_active;
        rec.d_before = d;
        rec.card_before = d >> (inst.n_vars - n_active);
        std::uint32_t added = 0;
        for (auto v : sorted[k].vars())
            if (!active[v]) {
                active[v] = true;
                ++added;
            }
        n_active += added;
        d -= first_violated[k];
        rec.n_active_after = n_active;
        rec.d_after = d;
        rec.card_after = d >> (inst.n_vars - n_active);
        rec.log2_ratio = detail::log2_ratio(rec.card_before, added, rec.card_after);
        tr.steps.push_back(rec);
        if (d == 0) {
            tr.satisfiable = false;
            break;
        }
    }
    return tr;
}

/// Exact ratio num/den.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double log2() const { return std::log2(static_cast<double>(num)) - std::log2(static_cast<double>(den)); }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// d_0 / d_M: the cost of solving every clause in a single adiabatic interval.
inline Ratio unstructured_time(const SolutionTrace& trace)
{
    if (!trace.satisfiable || trace.final_d() == 0)
        throw Error(Errc::UndefinedForUnsat, "unstructured time needs a satisfiable trace");
    return Ratio{std::uint64_t{1} << trace.n_vars, trace.final_d()};
}

} // namespace saqc
