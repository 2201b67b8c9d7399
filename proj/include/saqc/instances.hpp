// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random 3SAT / exact-cover (X3SAT) instances: generation, evaluation and a
// small line-oriented text format.
//
// Text format:
//   p saqc <x3sat|3sat> <N> <M>
//   c seed=<u64>            (metadata, only for generated instances)
//   c alpha=<real>
//   c prng=<name>
//   x i j k                 X3SAT clause, 1-based ascending indices
//   f l1 l2 l3              3SAT clause, l = +i forbids s_i = 1, -i forbids s_i = 0
// Any other `c` line is a comment.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "saqc/error.hpp"

namespace saqc {

using VariableIndex = std::uint32_t;

enum class Family : std::uint8_t { X3SAT, SAT3 };

constexpr std::string_view family_name(Family f) noexcept
{
    return f == Family::X3SAT ? "x3sat" : "3sat";
}

inline std::optional<Family> parse_family(std::string_view s) noexcept
{
    if (s == "x3sat" || s == "X3SAT")
        return Family::X3SAT;
    if (s == "3sat" || s == "3SAT")
        return Family::SAT3;
    return std::nullopt;
}

/// A three-variable constraint in canonical form: `vars` ascend and, for a
/// forbidden triple, `forbidden[k]` is the rejected value of `vars[k]`.
class Clause {
public:
    enum class Kind : std::uint8_t { ExactlyOne, ForbiddenTriple };

    static Clause exactly_one(VariableIndex a, VariableIndex b, VariableIndex c)
    {
        Clause cl;
        cl.kind_ = Kind::ExactlyOne;
        cl.vars_ = {a, b, c};
        std::sort(cl.vars_.begin(), cl.vars_.end());
        cl.check_distinct();
        cl.accept_ = 0b00010110; // patterns 001, 010, 100
        return cl;
    }

    /// Forbids s_vars[k] = values[k] jointly; the pair is permuted together
    /// into ascending-variable order.
    static Clause forbidding(std::array<VariableIndex, 3> vars, std::array<bool, 3> values)
    {
        std::array<std::pair<VariableIndex, bool>, 3> tagged{
            {{vars[0], values[0]}, {vars[1], values[1]}, {vars[2], values[2]}}};
        std::sort(tagged.begin(), tagged.end(),
                  [](const auto& l, const auto& r) { return l.first < r.first; });
        Clause cl;
        cl.kind_ = Kind::ForbiddenTriple;
        for (std::size_t k = 0; k < 3; ++k) {
            cl.vars_[k] = tagged[k].first;
            cl.forbidden_[k] = tagged[k].second;
        }
        cl.check_distinct();
        cl.accept_ = static_cast<std::uint8_t>(0xFFu & ~(1u << cl.forbidden_pattern()));
        return cl;
    }

    Kind kind() const noexcept { return kind_; }
    const std::array<VariableIndex, 3>& vars() const noexcept { return vars_; }
    const std::array<bool, 3>& forbidden() const noexcept { return forbidden_; }

    /// Bit p is set iff the local pattern p = b0 | b1<<1 | b2<<2 satisfies the clause.
    std::uint8_t accept_mask() const noexcept { return accept_; }

    bool satisfied_by(unsigned local_pattern) const noexcept
    {
        return (accept_ >> (local_pattern & 7u)) & 1u;
    }

    /// Bit i of `assignment` is the value of variable i. Requires N <= 64.
    bool satisfied_by_word(std::uint64_t assignment) const noexcept
    {
        const unsigned p = static_cast<unsigned>(((assignment >> vars_[0]) & 1u) |
                                                 (((assignment >> vars_[1]) & 1u) << 1) |
                                                 (((assignment >> vars_[2]) & 1u) << 2));
        return satisfied_by(p);
    }

    friend bool operator==(const Clause&, const Clause&) = default;

private:
    Clause() = default;

    unsigned forbidden_pattern() const noexcept
    {
        return unsigned(forbidden_[0]) | (unsigned(forbidden_[1]) << 1) |
               (unsigned(forbidden_[2]) << 2);
    }

    void check_distinct() const
    {
        if (vars_[0] == vars_[1] || vars_[1] == vars_[2])
            throw Error(Errc::IndexError, "clause variables must be pairwise distinct");
    }

    std::array<VariableIndex, 3> vars_{};
    Kind kind_ = Kind::ExactlyOne;
    std::array<bool, 3> forbidden_{};
    std::uint8_t accept_ = 0;
};

inline constexpr std::string_view kPrngName = "mt19937_64";

struct Instance {
    Family family = Family::X3SAT;
    std::uint32_t n_vars = 0;
    std::vector<Clause> clauses;
    double alpha = 0.0;
    /// Present for generated instances.
    std::optional<std::uint64_t> seed;
    std::string prng;

    std::size_t n_clauses() const noexcept { return clauses.size(); }

    friend bool operator==(const Instance&, const Instance&) = default;
};

/// M = round-half-up(alpha * N).
inline std::size_t clause_count(double alpha, std::uint32_t n_vars)
{
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n_vars) + 0.5));
}

inline void validate(const Instance& inst)
{
    if (inst.n_vars < 3)
        throw Error(Errc::InvalidSize, "instance needs at least 3 variables");
    if (inst.clauses.empty())
        throw Error(Errc::EmptyInstance, "instance has no clauses");
    for (const Clause& c : inst.clauses) {
        if (c.vars()[2] >= inst.n_vars)
            throw Error(Errc::IndexError, "clause variable out of range");
    }
}

/// Builds a hand-made instance; alpha is set to M/N.
inline Instance make_instance(Family family, std::uint32_t n_vars, std::vector<Clause> clauses)
{
    Instance inst;
    inst.family = family;
    inst.n_vars = n_vars;
    inst.clauses = std::move(clauses);
    inst.alpha = n_vars ? static_cast<double>(inst.clauses.size()) / n_vars : 0.0;
    validate(inst);
    return inst;
}

namespace detail {

/// Unbiased draw from [0, n) by rejecting the low 2^64 mod n raw outputs.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n)
{
    const std::uint64_t reject_below = (0 - n) % n;
    for (;;) {
        const std::uint64_t x = rng();
        if (x >= reject_below)
            return x % n;
    }
}

} // namespace detail

/// Pure function of its arguments. PRNG consumption per clause, in order:
/// three raw draws i, j, k (each via uniform_below(N)), the whole triple
/// redrawn while any two coincide; then for 3SAT one more raw word whose
/// bits 0, 1, 2 are the forbidden values of i, j, k.
inline Instance generate_instance(Family family, std::uint32_t n_vars, double alpha,
                                  std::uint64_t seed)
{
    if (n_vars < 3)
        throw Error(Errc::InvalidSize, "n_vars must be >= 3");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw Error(Errc::EmptyInstance, "alpha must be positive");
    const std::size_t m = clause_count(alpha, n_vars);
    if (m == 0)
        throw Error(Errc::EmptyInstance, "alpha * N rounds to zero clauses");

    std::mt19937_64 rng(seed);
    Instance inst;
    inst.family = family;
    inst.n_vars = n_vars;
    inst.alpha = alpha;
    inst.seed = seed;
    inst.prng = std::string(kPrngName);
    inst.clauses.reserve(m);
    for (std::size_t c = 0; c < m; ++c) {
        std::array<VariableIndex, 3> v{};
        do {
            for (auto& x : v)
                x = static_cast<VariableIndex>(detail::uniform_below(rng, n_vars));
        } while (v[0] == v[1] || v[0] == v[2] || v[1] == v[2]);
        if (family == Family::X3SAT) {
            inst.clauses.push_back(Clause::exactly_one(v[0], v[1], v[2]));
        } else {
            const std::uint64_t bits = rng();
            inst.clauses.push_back(
                Clause::forbidding(v, {bool(bits & 1u), bool(bits & 2u), bool(bits & 4u)}));
        }
    }
    return inst;
}

/// `assignment[i]` nonzero means s_i = 1.
inline bool evaluate_clause(const Clause& clause, std::span<const std::uint8_t> assignment)
{
    if (clause.vars()[2] >= assignment.size())
        throw Error(Errc::IndexError, "assignment shorter than clause variable index");
    unsigned p = 0;
    for (std::size_t k = 0; k < 3; ++k)
        p |= unsigned(assignment[clause.vars()[k]] != 0) << k;
    return clause.satisfied_by(p);
}

inline bool evaluate_instance(const Instance& inst, std::span<const std::uint8_t> assignment)
{
    if (assignment.size() != inst.n_vars)
        throw Error(Errc::IndexError, "assignment length differs from n_vars");
    return std::all_of(inst.clauses.begin(), inst.clauses.end(),
                       [&](const Clause& c) { return evaluate_clause(c, assignment); });
}

namespace detail {

inline std::string format_double(double v)
{
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    const char* end = s.data() + s.size();
    auto res = std::from_chars(s.data(), end, out);
    return res.ec == std::errc{} && res.ptr == end;
}

inline std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
            ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
            ++j;
        if (j > i)
            out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace detail

inline std::string serialize_instance(const Instance& inst)
{
    std::ostringstream os;
    os << "p saqc " << family_name(inst.family) << ' ' << inst.n_vars << ' '
       << inst.clauses.size() << '\n';
    if (inst.seed) {
        os << "c seed=" << *inst.seed << '\n';
        os << "c alpha=" << detail::format_double(inst.alpha) << '\n';
        os << "c prng=" << inst.prng << '\n';
    }
    for (const Clause& c : inst.clauses) {
        if (c.kind() == Clause::Kind::ExactlyOne) {
            os << 'x';
            for (auto v : c.vars())
                os << ' ' << v + 1;
        } else {
            os << 'f';
            for (std::size_t k = 0; k < 3; ++k)
                os << ' ' << (c.forbidden()[k] ? "" : "-") << c.vars()[k] + 1;
        }
        os << '\n';
    }
    return os.str();
}

inline Instance parse_instance(std::string_view text)
{
    Instance inst;
    std::size_t expected = 0;
    bool have_header = false;
    std::optional<double> alpha;
    std::size_t line_no = 0;

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos)
            eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;

        const auto tok = detail::split_ws(line);
        if (tok.empty())
            continue;
        if (tok[0] == "c") {
            if (tok.size() == 2 && tok[1].starts_with("seed=")) {
                std::uint64_t s = 0;
                if (!detail::parse_number(tok[1].substr(5), s))
                    throw ParseError(line_no, "bad seed");
                inst.seed = s;
            } else if (tok.size() == 2 && tok[1].starts_with("alpha=")) {
                double a = 0;
                if (!detail::parse_number(tok[1].substr(6), a))
                    throw ParseError(line_no, "bad alpha");
                alpha = a;
            } else if (tok.size() == 2 && tok[1].starts_with("prng=")) {
                inst.prng = std::string(tok[1].substr(5));
            }
            continue;
        }
        if (tok[0] == "p") {
            if (have_header)
                throw ParseError(line_no, "duplicate header");
            if (tok.size() != 5 || tok[1] != "saqc")
                throw ParseError(line_no, "malformed header, expected 'p saqc <family> <N> <M>'");
            auto fam = parse_family(tok[2]);
            if (!fam)
                throw ParseError(line_no, "unknown family '" + std::string(tok[2]) + "'");
            inst.family = *fam;
            if (!detail::parse_number(tok[3], inst.n_vars) ||
                !detail::parse_number(tok[4], expected))
                throw ParseError(line_no, "malformed header counts");
            if (inst.n_vars < 3)
                throw ParseError(line_no, "N must be >= 3");
            if (expected == 0)
                throw ParseError(line_no, "M must be >= 1");
            inst.clauses.reserve(expected);
            have_header = true;
            continue;
        }
        if (!have_header)
            throw ParseError(line_no, "clause before header");
        const bool is_x = tok[0] == "x";
        const bool is_f = tok[0] == "f";
        if (!is_x && !is_f)
            throw ParseError(line_no, "unknown line tag '" + std::string(tok[0]) + "'");
        if (is_x != (inst.family == Family::X3SAT))
            throw ParseError(line_no, "clause kind does not match family");
        if (tok.size() != 4)
            throw ParseError(line_no, "clause needs exactly three literals");
        if (inst.clauses.size() == expected)
            throw ParseError(line_no, "more clauses than declared");

        std::array<VariableIndex, 3> vars{};
        std::array<bool, 3> values{};
        for (std::size_t k = 0; k < 3; ++k) {
            long long lit = 0;
            if (!detail::parse_number(tok[k + 1], lit))
                throw ParseError(line_no, "bad literal '" + std::string(tok[k + 1]) + "'");
            if (is_x && lit < 0)
                throw ParseError(line_no, "negative index in exact-cover clause");
            const long long idx = lit < 0 ? -lit : lit;
            if (idx < 1 || idx > static_cast<long long>(inst.n_vars))
                throw ParseError(line_no, "variable index out of range");
            vars[k] = static_cast<VariableIndex>(idx - 1);
            values[k] = lit > 0;
        }
        if (vars[0] == vars[1] || vars[0] == vars[2] || vars[1] == vars[2])
            throw ParseError(line_no, "repeated variable in clause");
        inst.clauses.push_back(is_x ? Clause::exactly_one(vars[0], vars[1], vars[2])
                                    : Clause::forbidding(vars, values));
    }
    if (!have_header)
        throw ParseError(line_no, "missing header");
    if (inst.clauses.size() != expected)
        throw ParseError(line_no, "declared " + std::to_string(expected) + " clauses, found " +
                                      std::to_string(inst.clauses.size()));
    inst.alpha = alpha ? *alpha : static_cast<double>(expected) / inst.n_vars;
    if (clause_count(inst.alpha, inst.n_vars) != expected)
        throw ParseError(line_no, "alpha inconsistent with clause count");
    return inst;
}

} // namespace saqc
