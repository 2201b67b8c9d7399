// SPDX-License-Identifier: Apache-2.0
#pragma once

// Population statistics of beta over campaign records: mergeable moments and
// histograms, log-log power-law fits, exponential tail fits, quantiles with
// tail extrapolation, and the derived running-time bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "saqc/error.hpp"
#include "saqc/instances.hpp"
#include "saqc/tracker.hpp"

namespace saqc {

inline constexpr double kDefaultBinWidth = 0.25;

struct BetaHistogram {
    Family family = Family::X3SAT;
    std::uint32_t n_vars = 0;
    double bin_width = kDefaultBinWidth;
    /// (beta_low, count), contiguous from beta = 0 to the highest occupied bin.
    std::vector<std::pair<double, std::uint64_t>> bins;
    std::uint64_t total_count = 0; ///< satisfiable records binned
    std::uint64_t unsat_count = 0;
    std::uint64_t aborted_count = 0;
};

/// Per-(family, N) accumulator. Moments follow the population convention
/// (divide by n) and merge with the pairwise update, so any sharding of the
/// record stream gives the same counts and histogram and moments equal to
/// rounding.
class BetaSummary {
public:
    BetaSummary() = default;
    BetaSummary(Family family, std::uint32_t n_vars, double bin_width = kDefaultBinWidth)
        : family_(family)
        , n_vars_(n_vars)
        , bin_width_(bin_width)
    {
        if (!(bin_width > 0.0))
            throw Error(Errc::InvalidSize, "bin width must be positive");
    }

    void add(const BetaRecord& r)
    {
        ++records_;
        switch (r.status) {
        case TraceStatus::Unsat: ++unsat_; return;
        case TraceStatus::Aborted: ++aborted_; return;
        case TraceStatus::Sat: break;
        }
        add_beta(r.beta.value_or(0.0));
        if (r.t_m_over_omega)
            sum_log2_tm_ += std::log2(*r.t_m_over_omega);
    }

    void add_beta(double beta)
    {
        ++n_;
        const double delta = beta - mean_;
        mean_ += delta / double(n_);
        m2_ += delta * (beta - mean_);
        ++bins_[static_cast<std::int64_t>(std::floor(beta / bin_width_))];
        max_ = std::max(max_, beta);
    }

    void merge(const BetaSummary& o)
    {
        if (o.bin_width_ != bin_width_)
            throw Error(Errc::InvalidSize, "cannot merge histograms with different bin widths");
        if (o.n_ > 0) {
            const double n = double(n_ + o.n_);
            const double delta = o.mean_ - mean_;
            m2_ += o.m2_ + delta * delta * double(n_) * double(o.n_) / n;
            mean_ += delta * double(o.n_) / n;
            n_ += o.n_;
            for (const auto& [k, c] : o.bins_)
                bins_[k] += c;
            max_ = std::max(max_, o.max_);
        }
        records_ += o.records_;
        unsat_ += o.unsat_;
        aborted_ += o.aborted_;
        sum_log2_tm_ += o.sum_log2_tm_;
    }

    Family family() const noexcept { return family_; }
    std::uint32_t n_vars() const noexcept { return n_vars_; }
    std::uint64_t records() const noexcept { return records_; }
    std::uint64_t sat_count() const noexcept { return n_; }
    std::uint64_t unsat_count() const noexcept { return unsat_; }
    std::uint64_t aborted_count() const noexcept { return aborted_; }

    /// Satisfiable fraction over all records, aborted ones included in the
    /// denominator.
    double sat_fraction() const noexcept
    {
        return records_ == 0 ? 0.0 : double(n_) / double(records_);
    }

    double mean() const
    {
        require();
        return mean_;
    }

    double stddev() const
    {
        require();
        return std::sqrt(m2_ / double(n_));
    }

    double max() const
    {
        require();
        return max_;
    }

    double mean_log2_tm() const
    {
        require();
        return sum_log2_tm_ / double(n_);
    }

    BetaHistogram histogram() const
    {
        BetaHistogram h;
        h.family = family_;
        h.n_vars = n_vars_;
        h.bin_width = bin_width_;
        h.total_count = n_;
        h.unsat_count = unsat_;
        h.aborted_count = aborted_;
        if (!bins_.empty()) {
            const std::int64_t hi = bins_.rbegin()->first;
            for (std::int64_t k = std::min<std::int64_t>(0, bins_.begin()->first); k <= hi; ++k) {
                auto it = bins_.find(k);
                h.bins.emplace_back(double(k) * bin_width_, it == bins_.end() ? 0 : it->second);
            }
        }
        return h;
    }

private:
    void require() const
    {
        if (n_ == 0)
            throw Error(Errc::EmptyPopulation, "no satisfiable records for " +
                                                   std::string(family_name(family_)) +
                                                   " N=" + std::to_string(n_vars_));
    }

    Family family_ = Family::X3SAT;
    std::uint32_t n_vars_ = 0;
    double bin_width_ = kDefaultBinWidth;
    std::uint64_t records_ = 0, n_ = 0, unsat_ = 0, aborted_ = 0;
    double mean_ = 0.0, m2_ = 0.0, max_ = 0.0, sum_log2_tm_ = 0.0;
    std::map<std::int64_t, std::uint64_t> bins_;
};

using SummaryKey = std::pair<Family, std::uint32_t>;

inline std::map<SummaryKey, BetaSummary> aggregate(std::span<const BetaRecord> records,
                                                   double bin_width = kDefaultBinWidth)
{
    std::map<SummaryKey, BetaSummary> out;
    for (const auto& r : records) {
        auto [it, _] = out.try_emplace({r.family, r.n_vars}, r.family, r.n_vars, bin_width);
        it->second.add(r);
    }
    return out;
}

struct PowerLawFit {
    double a = 0.0;
    double b = 0.0;
    double residual = 0.0; ///< RMS of ln y residuals
    double b_stderr = 0.0;
    std::vector<std::pair<double, double>> points;

    double operator()(double n) const { return a * std::pow(n, b); }
};

namespace detail {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms = 0.0;
    double slope_stderr = 0.0;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y)
{
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    if (sxx == 0.0)
        throw Error(Errc::InsufficientData, "fit abscissae are all equal");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ss += r * r;
    }
    f.rms = std::sqrt(ss / n);
    f.slope_stderr = x.size() > 2 ? std::sqrt(ss / (n - 2.0) / sxx) : 0.0;
    return f;
}

} // namespace detail

/// Least squares of ln y on ln N.
inline PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points)
{
    if (points.size() < 3)
        throw Error(Errc::InsufficientData, "power-law fit needs at least 3 points");
    std::vector<double> x, y;
    for (const auto& [n, v] : points) {
        if (!(n > 0.0) || !(v > 0.0))
            throw Error(Errc::FitDomainError, "power-law fit needs positive N and y");
        x.push_back(std::log(n));
        y.push_back(std::log(v));
    }
    const auto f = detail::least_squares(x, y);
    PowerLawFit out;
    out.a = std::exp(f.intercept);
    out.b = f.slope;
    out.residual = f.rms;
    out.b_stderr = f.slope_stderr;
    out.points.assign(points.begin(), points.end());
    return out;
}

struct TailPolicy {
    double quantile = 0.9;       ///< fit bins at or above the one holding this quantile
    std::uint64_t min_count = 10; ///< bins with fewer samples are dropped
    std::size_t min_bins = 4;
};

/// ln(density) = intercept - beta / xi over the fit region; density is
/// normalized by all satisfiable samples and the bin width.
struct TailFit {
    double xi = 0.0;
    double intercept = 0.0;
    std::pair<double, double> fit_region{0.0, 0.0}; ///< [low edge of first bin, high edge of last]
    double residual = 0.0;
    std::size_t bins_used = 0;

    double density(double beta) const { return std::exp(intercept - beta / xi); }
};

inline TailFit fit_tail(const BetaHistogram& h, const TailPolicy& policy = {})
{
    if (h.total_count == 0)
        throw Error(Errc::EmptyPopulation, "empty histogram");
    const double target = policy.quantile * double(h.total_count);
    std::size_t start = 0;
    double cum = 0.0;
    for (; start < h.bins.size(); ++start) {
        cum += double(h.bins[start].second);
        if (cum >= target)
            break;
    }
    std::vector<double> x, y;
    double lo = 0.0, hi = 0.0;
    const double norm = double(h.total_count) * h.bin_width;
    for (std::size_t i = start; i < h.bins.size(); ++i) {
        const auto [low, count] = h.bins[i];
        if (count < policy.min_count)
            continue;
        if (x.empty())
            lo = low;
        hi = low + h.bin_width;
        x.push_back(low + 0.5 * h.bin_width);
        y.push_back(std::log(double(count) / norm));
    }
    if (x.size() < std::max<std::size_t>(policy.min_bins, 2))
        throw Error(Errc::TailTooThin, "only " + std::to_string(x.size()) +
                                           " tail bins meet the count threshold");
    const auto f = detail::least_squares(x, y);
    if (!(f.slope < 0.0))
        throw Error(Errc::NotDecaying, "tail slope is not negative");
    TailFit t;
    t.xi = -1.0 / f.slope;
    t.intercept = f.intercept;
    t.fit_region = {lo, hi};
    t.residual = f.rms;
    t.bins_used = x.size();
    return t;
}

enum class QuantileMethod : std::uint8_t { Empirical, TailExtrapolated };

constexpr std::string_view quantile_method_name(QuantileMethod m) noexcept
{
    return m == QuantileMethod::Empirical ? "empirical-type7" : "tail-extrapolated";
}

struct BetaOpt {
    double value = 0.0;
    QuantileMethod method = QuantileMethod::Empirical;
};

/// Type-7 quantile of sorted data.
inline double quantile_type7(std::span<const double> sorted, double p)
{
    const double h = double(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

/// sigma-quantile of beta over satisfiable samples. Beyond the empirical
/// resolution 1 - 1/n it extends the last quantile along the fitted tail.
inline BetaOpt beta_opt(std::vector<double> betas, double sigma,
                        const std::optional<TailFit>& tail = std::nullopt)
{
    if (!(sigma > 0.0 && sigma < 1.0))
        throw Error(Errc::IndexError, "sigma must lie in (0, 1)");
    if (betas.empty())
        throw Error(Errc::EmptyPopulation, "no satisfiable samples");
    std::sort(betas.begin(), betas.end());
    const double edge = 1.0 - 1.0 / double(betas.size());
    if (sigma <= edge)
        return {quantile_type7(betas, sigma), QuantileMethod::Empirical};
    if (!tail)
        throw Error(Errc::TailUnavailable, "sigma beyond empirical resolution and no tail fit");
    const double base = quantile_type7(betas, edge);
    return {base + tail->xi * std::log((1.0 - edge) / (1.0 - sigma)),
            QuantileMethod::TailExtrapolated};
}

/// Omega * M * 2^beta
inline double t_opt(double beta, std::size_t m, double omega)
{
    return omega * double(m) * std::exp2(beta);
}

/// Mass of the fitted exponential density above beta, clamped to [0, 1].
inline double p_fail(double beta, const TailFit& tail)
{
    return std::clamp(tail.xi * tail.density(beta), 0.0, 1.0);
}

/// Omega * N * 2^{mean(N) + 6 std(N)}
inline double sigma_rule_exponent(const PowerLawFit& mean, const PowerLawFit& std, double n)
{
    return mean(n) + 6.0 * std(n);
}

inline double sigma_rule_time(const PowerLawFit& mean, const PowerLawFit& std, double n,
                              double omega)
{
    return omega * n * std::exp2(sigma_rule_exponent(mean, std, n));
}

} // namespace saqc
