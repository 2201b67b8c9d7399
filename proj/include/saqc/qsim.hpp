// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small-N state-vector model of the piecewise adiabatic schedule. Within
// interval m (1-based) and at schedule parameter lambda,
//
//   H = Gamma * sum_{k<m} P_k + lambda * P_m - (1 - lambda) * w_m |Phi><Phi|
//
// where P_k is diagonal with 1 on assignments violating sorted clause k and
// |Phi> is the normalized uniform superposition. The mixer scale w_m is set
// by MixerNorm; the default makes the mixer act as the unit-weight projector
// onto |Xi_{m-1}> inside the subspace spanned by S_{m-1}.
//
// All operators are diagonal plus a uniform rank-one term, so the state
// decomposes exactly into class-uniform amplitudes, where classes group
// assignments by (violations of the first m-1 clauses, violates clause m),
// and a class-orthogonal remainder that only picks up diagonal phases.
// Spectra use the secular equation over distinct diagonal values; time
// evolution uses an exponential integrator in the class space.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "saqc/error.hpp"
#include "saqc/instances.hpp"
#include "saqc/secular.hpp"
#include "saqc/tracker.hpp"

namespace saqc::qsim {

inline constexpr std::uint32_t kDefaultQubitLimit = 14;

enum class MixerNorm : std::uint8_t {
    SubspaceUnit, ///< w_m = 2^N / d_{m-1}
    Projector,    ///< w_m = 1
    Printed,      ///< w_m = 2^{N/2}, the constant matrix -2^{-N/2} sum |s'><s|
};

constexpr std::string_view mixer_norm_name(MixerNorm n) noexcept
{
    switch (n) {
    case MixerNorm::SubspaceUnit: return "subspace-unit";
    case MixerNorm::Projector: return "projector";
    case MixerNorm::Printed: return "printed";
    }
    return "unknown";
}

inline std::optional<MixerNorm> parse_mixer_norm(std::string_view s) noexcept
{
    for (MixerNorm n : {MixerNorm::SubspaceUnit, MixerNorm::Projector, MixerNorm::Printed})
        if (s == mixer_norm_name(n))
            return n;
    return std::nullopt;
}

/// Violation tables of an instance's sorted clauses over all 2^N assignments.
class Problem {
public:
    explicit Problem(const Instance& inst, std::uint32_t qubit_limit = kDefaultQubitLimit,
                     SortKey key = SortKey::Lexicographic)
        : n_vars_(inst.n_vars)
    {
        validate(inst);
        if (inst.n_vars > qubit_limit)
            throw Error(Errc::TooLarge, "qsim limited to " + std::to_string(qubit_limit) +
                                            " variables, instance has " +
                                            std::to_string(inst.n_vars));
        clauses_ = sort_clauses(inst, key);
        const std::size_t dim = this->dim();
        const std::size_t m = clauses_.size();
        violates_.assign(m, std::vector<std::uint8_t>(dim, 0));
        prefix_.assign(m + 1, std::vector<std::uint16_t>(dim, 0));
        d_.assign(m + 1, 0);
        d_[0] = dim;
        for (std::size_t k = 0; k < m; ++k) {
            std::uint64_t count = 0;
            for (std::size_t s = 0; s < dim; ++s) {
                const bool v = !clauses_[k].satisfied_by_word(s);
                violates_[k][s] = v;
                prefix_[k + 1][s] = static_cast<std::uint16_t>(prefix_[k][s] + v);
                count += prefix_[k + 1][s] == 0;
            }
            d_[k + 1] = count;
        }
    }

    std::uint32_t n_vars() const noexcept { return n_vars_; }
    std::size_t dim() const noexcept { return std::size_t{1} << n_vars_; }
    std::size_t n_clauses() const noexcept { return clauses_.size(); }
    const std::vector<Clause>& sorted_clauses() const noexcept { return clauses_; }

    /// |S_m|; d(0) = 2^N.
    std::uint64_t d(std::size_t m) const { return d_.at(m); }

    /// Number of the first `m` sorted clauses violated by assignment s.
    std::uint16_t prefix_violations(std::size_t m, std::size_t s) const { return prefix_[m][s]; }

    /// Whether sorted clause m (1-based) is violated by s.
    bool violates(std::size_t m, std::size_t s) const { return violates_[m - 1][s]; }

    bool satisfiable() const noexcept { return d_.back() > 0; }

    double mixer_scale(std::size_t m, MixerNorm norm) const
    {
        switch (norm) {
        case MixerNorm::Projector: return 1.0;
        case MixerNorm::Printed: return std::exp2(0.5 * n_vars_);
        case MixerNorm::SubspaceUnit:
            if (d_.at(m - 1) == 0)
                throw Error(Errc::UndefinedForUnsat,
                            "subspace-unit mixer undefined after an empty prefix");
            return static_cast<double>(dim()) / static_cast<double>(d_[m - 1]);
        }
        return 1.0;
    }

    void check_interval(std::size_t m) const
    {
        if (m < 1 || m > n_clauses())
            throw Error(Errc::IndexError, "interval index out of range");
    }

private:
    std::uint32_t n_vars_;
    std::vector<Clause> clauses_;
    std::vector<std::vector<std::uint8_t>> violates_;
    std::vector<std::vector<std::uint16_t>> prefix_;
    std::vector<std::uint64_t> d_;
};

/// H = diag(diagonal) - mixer_weight |Phi><Phi|.
struct HamiltonianView {
    std::size_t interval = 1;
    double lambda = 0.0;
    double gamma = 0.0;
    std::vector<double> diagonal;
    double mixer_weight = 0.0;
    /// Class of each assignment: 2 * (violations of the first m-1 clauses) + (violates clause m).
    std::vector<std::uint32_t> sector;
};

inline HamiltonianView build_hamiltonian(const Problem& p, std::size_t m, double lambda,
                                         double gamma, MixerNorm norm = MixerNorm::SubspaceUnit)
{
    p.check_interval(m);
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw Error(Errc::IndexError, "lambda must lie in [0, 1]");
    HamiltonianView h;
    h.interval = m;
    h.lambda = lambda;
    h.gamma = gamma;
    h.mixer_weight = (1.0 - lambda) * p.mixer_scale(m, norm);
    h.diagonal.resize(p.dim());
    h.sector.resize(p.dim());
    for (std::size_t s = 0; s < p.dim(); ++s) {
        const unsigned pre = p.prefix_violations(m - 1, s);
        const bool v = p.violates(m, s);
        h.diagonal[s] = gamma * pre + (v ? lambda : 0.0);
        h.sector[s] = 2 * pre + v;
    }
    return h;
}

inline HamiltonianView build_hamiltonian(const Instance& inst, std::size_t m, double lambda,
                                         double gamma, MixerNorm norm = MixerNorm::SubspaceUnit,
                                         std::uint32_t qubit_limit = kDefaultQubitLimit)
{
    return build_hamiltonian(Problem(inst, qubit_limit), m, lambda, gamma, norm);
}

struct LowSpectrum {
    double e0 = 0.0;
    double e1 = 0.0;
    /// Real, normalized, every entry >= 0 (so the largest entry is positive).
    std::vector<double> ground;
};

namespace detail {

/// Groups entries by exact diagonal value. A level's multiplicity is its
/// number of distinct sector ids when `by_sector`, else its size.
inline std::vector<SecularLevel> group_levels(const HamiltonianView& h, bool by_sector)
{
    struct Acc {
        std::size_t size = 0;
        std::vector<std::uint32_t> classes;
    };
    std::map<double, Acc> acc;
    for (std::size_t s = 0; s < h.diagonal.size(); ++s) {
        auto& a = acc[h.diagonal[s]];
        ++a.size;
        if (by_sector && std::find(a.classes.begin(), a.classes.end(), h.sector[s]) == a.classes.end())
            a.classes.push_back(h.sector[s]);
    }
    const double inv_dim = 1.0 / static_cast<double>(h.diagonal.size());
    std::vector<SecularLevel> out;
    out.reserve(acc.size());
    for (const auto& [value, a] : acc)
        out.push_back({value, a.size * inv_dim, by_sector ? a.classes.size() : a.size});
    return out;
}

} // namespace detail

/// Two lowest eigenvalues of the full 2^N-dimensional operator. With the
/// mixer off the ground vector is the uniform state over the minimal
/// diagonal entries, the limit of the unique ground state as w -> 0+.
inline LowSpectrum low_spectrum(const HamiltonianView& h)
{
    const auto levels = detail::group_levels(h, false);
    const auto sec = secular_lowest(levels, h.mixer_weight);
    LowSpectrum out;
    out.e0 = sec.e0;
    out.e1 = sec.e1;
    out.ground.resize(h.diagonal.size());
    double norm2 = 0.0;
    const double d1 = levels.front().value;
    for (std::size_t s = 0; s < h.diagonal.size(); ++s) {
        double v;
        if (h.mixer_weight > 0.0)
            v = 1.0 / ((h.diagonal[s] - d1) + sec.ground_shift);
        else
            v = h.diagonal[s] == d1 ? 1.0 : 0.0;
        out.ground[s] = v;
        norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : out.ground)
        v *= inv;
    return out;
}

/// Two lowest levels reachable from |Phi> within the interval: the spectrum
/// restricted to class-uniform vectors.
inline SecularLowest sector_spectrum(const HamiltonianView& h)
{
    const auto levels = detail::group_levels(h, true);
    return secular_lowest(levels, h.mixer_weight);
}

struct TwoLevel {
    double identity = 0.0; ///< coefficient of I
    double x = 0.0;        ///< coefficient of sigma_x
    double z = 0.0;        ///< coefficient of sigma_z
    std::array<std::array<double, 2>, 2> matrix{};
    double gap = 0.0;
};

/// Projected Hamiltonian in the basis {|Xi_m>, |Xi_m^perp>} with
/// cos(alpha) = sqrt(d_curr / d_prev):
///   (lambda - 1/2) I + 1/2 (lambda - 1) sin(2 alpha) X + 1/2 [(lambda - 1) cos(2 alpha) - lambda] Z
inline TwoLevel effective_two_level(double lambda, std::uint64_t d_prev, std::uint64_t d_curr)
{
    if (d_curr == 0)
        throw Error(Errc::UndefinedForUnsat, "two-level model needs d_curr > 0");
    if (d_curr > d_prev)
        throw Error(Errc::IndexError, "d_curr must not exceed d_prev");
    const double c2 = static_cast<double>(d_curr) / static_cast<double>(d_prev); // cos^2
    const double cos2a = 2.0 * c2 - 1.0;
    const double sin2a = 2.0 * std::sqrt(c2 * (1.0 - c2));
    TwoLevel t;
    t.identity = lambda - 0.5;
    t.x = 0.5 * (lambda - 1.0) * sin2a;
    t.z = 0.5 * ((lambda - 1.0) * cos2a - lambda);
    t.matrix = {{{t.identity + t.z, t.x}, {t.x, t.identity - t.z}}};
    t.gap = 2.0 * std::hypot(t.x, t.z);
    return t;
}

/// Class structure of one interval; evaluates the class-space operator at
/// any lambda without touching 2^N entries.
class IntervalModel {
public:
    IntervalModel(const Problem& p, std::size_t m, double gamma, MixerNorm norm)
        : m_(m)
        , gamma_(gamma)
    {
        p.check_interval(m);
        scale_ = p.mixer_scale(m, norm);
        class_of_.resize(p.dim());
        std::map<std::uint32_t, std::size_t> index;
        for (std::size_t s = 0; s < p.dim(); ++s) {
            const unsigned pre = p.prefix_violations(m - 1, s);
            const bool v = p.violates(m, s);
            const std::uint32_t key = 2 * pre + v;
            auto [it, inserted] = index.try_emplace(key, keys_.size());
            if (inserted) {
                keys_.push_back(key);
                size_.push_back(0);
            }
            ++size_[it->second];
            class_of_[s] = static_cast<std::uint32_t>(it->second);
        }
        dim_ = p.dim();
    }

    std::size_t n_classes() const noexcept { return keys_.size(); }
    std::size_t class_of(std::size_t s) const { return class_of_[s]; }
    std::size_t class_size(std::size_t c) const { return size_[c]; }
    double mixer_scale() const noexcept { return scale_; }

    double base(std::size_t c) const { return gamma_ * (keys_[c] >> 1); }
    double slope(std::size_t c) const { return keys_[c] & 1u; }
    double value(std::size_t c, double lambda) const { return base(c) + lambda * slope(c); }
    double coupling(std::size_t c) const { return std::sqrt(double(size_[c]) / double(dim_)); }

    SecularLowest sector_lowest(double lambda) const
    {
        std::map<double, SecularLevel> levels;
        for (std::size_t c = 0; c < n_classes(); ++c) {
            auto& l = levels[value(c, lambda)];
            if (l.weight == 0.0)
                l.multiplicity = 0;
            l.value = value(c, lambda);
            l.weight += double(size_[c]) / double(dim_);
            ++l.multiplicity;
        }
        std::vector<SecularLevel> v;
        for (auto& [_, l] : levels)
            v.push_back(l);
        return secular_lowest(v, (1.0 - lambda) * scale_);
    }

    /// Dense class-space operator diag(values) - (1 - lambda) w z z^T.
    Eigen::MatrixXd reduced(double lambda) const
    {
        const std::size_t k = n_classes();
        Eigen::MatrixXd h(k, k);
        const double w = (1.0 - lambda) * scale_;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                h(i, j) = -w * (coupling(i) * coupling(j)) + (i == j ? value(i, lambda) : 0.0);
        return h;
    }

private:
    std::size_t m_;
    double gamma_;
    double scale_ = 1.0;
    std::size_t dim_ = 0;
    std::vector<std::uint32_t> keys_;
    std::vector<std::size_t> size_;
    std::vector<std::uint32_t> class_of_;
};

struct IntervalProfile {
    std::size_t interval = 0;
    std::uint64_t d_prev = 0;
    std::uint64_t d_curr = 0;
    std::vector<double> lambdas;
    std::vector<double> e0;
    std::vector<double> e1;
    double min_gap = 0.0;
    double lambda_star = 0.0;
    /// sqrt(d_m / d_{m-1})
    double predicted_gap = 0.0;
};

struct SpectralProfile {
    double gamma = 0.0;
    MixerNorm norm = MixerNorm::SubspaceUnit;
    std::vector<IntervalProfile> intervals;

    /// Largest |min_gap - predicted_gap|. Intervals whose clause removes
    /// nothing have no partner level in the projected subspace; they are
    /// skipped unless `include_unit_ratio`.
    double max_deviation(bool include_unit_ratio = false) const
    {
        double worst = 0.0;
        for (const auto& iv : intervals)
            if (include_unit_ratio || iv.d_curr < iv.d_prev)
                worst = std::max(worst, std::abs(iv.min_gap - iv.predicted_gap));
        return worst;
    }
};

/// Scans the reachable-sector gap over `grid_size` uniform lambda points per
/// interval (odd sizes include 1/2), then refines the coarse minimum by
/// golden-section search. Stops at the first interval whose prefix is empty.
inline SpectralProfile min_gap_profile(const Problem& p, double gamma, std::size_t grid_size = 257,
                                       MixerNorm norm = MixerNorm::SubspaceUnit)
{
    if (grid_size < 3)
        throw Error(Errc::InvalidSize, "gap grid needs at least 3 points");
    SpectralProfile prof;
    prof.gamma = gamma;
    prof.norm = norm;
    for (std::size_t m = 1; m <= p.n_clauses(); ++m) {
        if (p.d(m) == 0)
            break;
        IntervalModel model(p, m, gamma, norm);
        IntervalProfile iv;
        iv.interval = m;
        iv.d_prev = p.d(m - 1);
        iv.d_curr = p.d(m);
        iv.predicted_gap = std::sqrt(double(iv.d_curr) / double(iv.d_prev));
        iv.min_gap = std::numeric_limits<double>::infinity();
        std::size_t best = 0;
        for (std::size_t i = 0; i < grid_size; ++i) {
            const double lambda = double(i) / double(grid_size - 1);
            const auto sec = model.sector_lowest(lambda);
            iv.lambdas.push_back(lambda);
            iv.e0.push_back(sec.e0);
            iv.e1.push_back(sec.e1);
            if (sec.gap < iv.min_gap) {
                iv.min_gap = sec.gap;
                best = i;
            }
        }
        iv.lambda_star = iv.lambdas[best];
        // Golden-section refinement on the bracketing grid cells.
        double a = iv.lambdas[best == 0 ? 0 : best - 1];
        double b = iv.lambdas[std::min(best + 1, grid_size - 1)];
        const double r = 0.5 * (std::sqrt(5.0) - 1.0);
        auto gap_at = [&](double l) { return model.sector_lowest(l).gap; };
        double x1 = b - r * (b - a), x2 = a + r * (b - a);
        double f1 = gap_at(x1), f2 = gap_at(x2);
        for (int it = 0; it < 60 && b - a > 1e-13; ++it) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - r * (b - a);
                f1 = gap_at(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + r * (b - a);
                f2 = gap_at(x2);
            }
        }
        const double refined = std::min(f1, f2);
        if (refined < iv.min_gap) {
            iv.min_gap = refined;
            iv.lambda_star = f1 < f2 ? x1 : x2;
        }
        prof.intervals.push_back(std::move(iv));
    }
    return prof;
}

inline SpectralProfile min_gap_profile(const Instance& inst, double gamma,
                                       std::size_t grid_size = 257,
                                       MixerNorm norm = MixerNorm::SubspaceUnit,
                                       std::uint32_t qubit_limit = kDefaultQubitLimit)
{
    return min_gap_profile(Problem(inst, qubit_limit), gamma, grid_size, norm);
}

/// <psi_g(t_m^+) | psi_g(t_m^-)>: ground state of interval m at lambda -> 1
/// (the class of minimal energy once the mixer is off) against the ground
/// state of interval m+1 at lambda = 0.
inline double nonadiabatic_overlap(const Problem& p, std::size_t m, double gamma,
                                   MixerNorm norm = MixerNorm::SubspaceUnit)
{
    if (m < 1 || m >= p.n_clauses())
        throw Error(Errc::IndexError, "junction index must satisfy 1 <= m < M");
    IntervalModel before(p, m, gamma, norm);
    std::size_t best = 0;
    bool tie = false;
    for (std::size_t c = 1; c < before.n_classes(); ++c) {
        const double v = before.value(c, 1.0), vb = before.value(best, 1.0);
        if (v < vb) {
            best = c;
            tie = false;
        } else if (v == vb) {
            tie = true;
        }
    }
    if (tie)
        throw Error(Errc::DegenerateGround, "several classes share the ground energy at t_m^-");

    const auto after = low_spectrum(build_hamiltonian(p, m + 1, 0.0, gamma, norm));
    double overlap = 0.0;
    const double amp = 1.0 / std::sqrt(double(before.class_size(best)));
    for (std::size_t s = 0; s < p.dim(); ++s)
        if (before.class_of(s) == best)
            overlap += amp * after.ground[s];
    return std::abs(overlap);
}

struct Schedule {
    double omega = 1.0;
    double gamma = 2.0;
    /// t_m - t_{m-1} for each interval.
    std::vector<double> durations;
    /// When set, interval m uses Gamma_m = kappa * sqrt(d_{m-1}/d_m) instead of `gamma`.
    std::optional<double> kappa;
    MixerNorm norm = MixerNorm::SubspaceUnit;

    double total_time() const
    {
        double t = 0.0;
        for (double d : durations)
            t += d;
        return t;
    }
};

/// Durations Omega * d_{m-1}/d_m from the exact cardinalities.
inline Schedule schedule_from_counts(const Problem& p, double omega, double gamma,
                                     std::optional<double> kappa = std::nullopt)
{
    if (!p.satisfiable())
        throw Error(Errc::UndefinedTarget, "schedule needs a satisfiable instance");
    Schedule s;
    s.omega = omega;
    s.gamma = gamma;
    s.kappa = kappa;
    for (std::size_t m = 1; m <= p.n_clauses(); ++m)
        s.durations.push_back(omega * double(p.d(m - 1)) / double(p.d(m)));
    return s;
}

inline double interval_gamma(const Problem& p, const Schedule& s, std::size_t m)
{
    if (s.kappa)
        return *s.kappa * std::sqrt(double(p.d(m - 1)) / double(p.d(m)));
    return s.gamma;
}

struct EvolutionResult {
    std::vector<std::complex<double>> state;
    /// |<Xi_M|psi(T)>|^2
    double fidelity = 0.0;
    /// |<Xi_m|psi(t_m)>|^2 after each interval.
    std::vector<double> interval_fidelity;
    double total_time = 0.0;
    /// T * max Gamma used, the adimensional running time.
    double adimensional_time = 0.0;
    std::size_t steps = 0;
};

struct IntegratorOptions {
    double tolerance = 1e-8;   ///< local error per step in the class space
    double norm_guard = 1e-6;  ///< maximal tolerated norm drift
    std::size_t max_steps = 50'000'000;
};

namespace detail {

using Cvec = Eigen::VectorXcd;

/// exp(-i K) v for Hermitian K.
inline Cvec expm_hermitian_apply(const Eigen::MatrixXcd& k, const Cvec& v)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(k);
    const Eigen::VectorXd& ev = es.eigenvalues();
    Cvec phase(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        phase(i) = std::polar(1.0, -ev(i));
    return es.eigenvectors() * phase.asDiagonal() * (es.eigenvectors().adjoint() * v);
}

/// Fourth-order Magnus step of length h from parameter time t on an
/// interval of length tau.
inline Cvec magnus4_step(const IntervalModel& model, double t, double h, double tau, const Cvec& u)
{
    static const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
    static const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
    const Eigen::MatrixXd h1 = model.reduced((t + c1 * h) / tau);
    const Eigen::MatrixXd h2 = model.reduced((t + c2 * h) / tau);
    const Eigen::MatrixXd comm = h2 * h1 - h1 * h2; // real antisymmetric
    const std::complex<double> i(0.0, 1.0);
    Eigen::MatrixXcd k = (0.5 * h) * (h1 + h2).cast<std::complex<double>>() -
                         (i * (std::sqrt(3.0) / 12.0) * h * h) * comm.cast<std::complex<double>>();
    // Symmetrize to keep the eigensolver on exactly Hermitian input.
    k = 0.5 * (k + Eigen::MatrixXcd(k.adjoint()));
    return expm_hermitian_apply(k, u);
}

} // namespace detail

/// Integrates i d psi/dt = H(t) psi over all intervals, lambda rising
/// linearly inside each, starting from |Phi>.
inline EvolutionResult evolve(const Problem& p, const Schedule& sched,
                              const IntegratorOptions& opts = {})
{
    if (!p.satisfiable())
        throw Error(Errc::UndefinedTarget, "instance has no solution to prepare");
    if (sched.durations.size() != p.n_clauses())
        throw Error(Errc::InvalidSize, "schedule needs one duration per clause");
    for (double d : sched.durations)
        if (!(d >= 0.0))
            throw Error(Errc::InvalidSize, "durations must be nonnegative");

    using cd = std::complex<double>;
    const std::size_t dim = p.dim();
    std::vector<cd> psi(dim, cd(1.0 / std::sqrt(double(dim)), 0.0));
    EvolutionResult res;
    double max_gamma = 0.0;

    for (std::size_t m = 1; m <= p.n_clauses(); ++m) {
        const double gamma = interval_gamma(p, sched, m);
        max_gamma = std::max(max_gamma, gamma);
        const double tau = sched.durations[m - 1];
        if (tau > 0.0) {
            IntervalModel model(p, m, gamma, sched.norm);
            const std::size_t k = model.n_classes();

            // Split psi into class means and a class-orthogonal remainder.
            detail::Cvec u = detail::Cvec::Zero(static_cast<Eigen::Index>(k));
            for (std::size_t s = 0; s < dim; ++s)
                u(model.class_of(s)) += psi[s];
            for (std::size_t c = 0; c < k; ++c)
                u(c) /= std::sqrt(double(model.class_size(c)));
            std::vector<cd> mean(k);
            for (std::size_t c = 0; c < k; ++c)
                mean[c] = u(c) / std::sqrt(double(model.class_size(c)));

            // Remainder: diagonal phase exp(-i (base * tau + slope * tau / 2)).
            std::vector<cd> phase(k);
            for (std::size_t c = 0; c < k; ++c)
                phase[c] = std::polar(1.0, -(model.base(c) * tau + model.slope(c) * 0.5 * tau));

            double t = 0.0;
            const double hnorm = model.reduced(0.0).cwiseAbs().rowwise().sum().maxCoeff() +
                                 model.reduced(1.0).cwiseAbs().rowwise().sum().maxCoeff();
            double h = std::min(tau, 1.0 / std::max(hnorm, 1e-12));
            while (t < tau) {
                if (res.steps++ > opts.max_steps)
                    throw Error(Errc::IntegrationError, "step budget exhausted");
                h = std::min(h, tau - t);
                const auto full = detail::magnus4_step(model, t, h, tau, u);
                const auto half = detail::magnus4_step(
                    model, t + 0.5 * h, 0.5 * h, tau, detail::magnus4_step(model, t, 0.5 * h, tau, u));
                const double err = (full - half).norm();
                if (err <= opts.tolerance) {
                    // Keep the finer estimate; it is exactly unitary.
                    u = half;
                    t += h;
                } else if (h <= 1e-14 * tau) {
                    throw Error(Errc::IntegrationError, "step size underflow");
                }
                const double fac = err > 0.0 ? 0.9 * std::pow(opts.tolerance / err, 0.2) : 4.0;
                h *= std::clamp(fac, 0.2, 4.0);
            }

            for (std::size_t s = 0; s < dim; ++s) {
                const auto c = model.class_of(s);
                psi[s] = (psi[s] - mean[c]) * phase[c] +
                         u(c) / std::sqrt(double(model.class_size(c)));
            }
        }
        double norm2 = 0.0;
        for (const auto& a : psi)
            norm2 += std::norm(a);
        if (std::abs(std::sqrt(norm2) - 1.0) > opts.norm_guard)
            throw Error(Errc::IntegrationError, "norm drift beyond guard in interval " +
                                                    std::to_string(m));
        // Fidelity with |Xi_m>.
        cd amp = 0.0;
        for (std::size_t s = 0; s < dim; ++s)
            if (p.prefix_violations(m, s) == 0)
                amp += psi[s];
        res.interval_fidelity.push_back(std::norm(amp) / double(p.d(m)));
    }
    res.total_time = sched.total_time();
    res.adimensional_time = res.total_time * max_gamma;
    res.fidelity = res.interval_fidelity.empty() ? 1.0 : res.interval_fidelity.back();
    res.state = std::move(psi);
    return res;
}

} // namespace saqc::qsim
