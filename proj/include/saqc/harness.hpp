// SPDX-License-Identifier: Apache-2.0
#pragma once

// Campaign orchestration: configuration, seed derivation, sharded parallel
// runs with resumable shard files, persistence of records and statistics,
// and report products.
//
// Output directory layout after run_campaign:
//   shards/<family>_N<n>_<k>.jsonl   per-shard records ending in "#end <count> <config hash>"
//   records.jsonl, records.csv       merged in (N, sample index) order
//   summary.csv, fits.json, hist_<family>_<N>.csv
//   metadata.json                    config echo, version, PRNG, sort key
//   qsim_report.json                 only with qsim_validate

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "saqc/error.hpp"
#include "saqc/instances.hpp"
#include "saqc/qsim.hpp"
#include "saqc/stats.hpp"
#include "saqc/tracker.hpp"

namespace saqc {

inline constexpr std::string_view kVersion = "0.1.0";

using ojson = nlohmann::ordered_json;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Chained splitmix64 over (master, family, N, index). Each stage is a
/// bijection of its input, so distinct indices never collide for fixed
/// (master, family, N).
constexpr std::uint64_t derive_seed(std::uint64_t master, Family family, std::uint32_t n_vars,
                                    std::uint64_t index) noexcept
{
    std::uint64_t x = mix64(master);
    x = mix64(x ^ (family == Family::X3SAT ? 0x78337361ull : 0x33736174ull));
    x = mix64(x ^ n_vars);
    return mix64(x ^ index);
}

struct CampaignConfig {
    Family family = Family::X3SAT;
    std::vector<std::uint32_t> n_values{8};
    std::optional<double> alpha; ///< defaults to 0.62 (x3sat) or 4.25 (3sat)
    std::uint64_t samples = 100;
    std::uint64_t master_seed = 1;
    unsigned workers = 1;
    std::size_t memory_cap = kDefaultMemoryCap;
    std::string output_dir = "out";
    bool full_trace = false;
    SortKey sort_key = SortKey::Lexicographic;
    double bin_width = kDefaultBinWidth;
    std::uint64_t shard_size = 256;
    double sigma = 0.99;
    bool qsim_validate = false;
    std::uint32_t qsim_max_n = 8;
    std::uint64_t qsim_samples = 5;
    double omega = 10.0;
    double gamma = 100.0;

    double effective_alpha() const
    {
        return alpha.value_or(family == Family::X3SAT ? 0.62 : 4.25);
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T config_number(const std::string& key, const std::string& v)
{
    T out{};
    if (!parse_number(v, out))
        throw Error(Errc::ConfigError, "bad value for " + key + ": '" + v + "'");
    return out;
}

inline bool config_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw Error(Errc::ConfigError, "bad boolean for " + key + ": '" + v + "'");
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    auto r = std::to_chars(buf, buf + 16, v, 16);
    std::string s(buf, r.ptr);
    return std::string(16 - s.size(), '0') + s;
}

inline std::uint64_t fnv1a(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace detail

inline void set_config_key(CampaignConfig& c, const std::string& key, const std::string& value)
{
    using detail::config_bool;
    using detail::config_number;
    if (key == "family") {
        auto f = parse_family(value);
        if (!f)
            throw Error(Errc::ConfigError, "unknown family '" + value + "'");
        c.family = *f;
    } else if (key == "n_values") {
        c.n_values.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ','))
            c.n_values.push_back(config_number<std::uint32_t>(key, detail::trim(item)));
    } else if (key == "alpha") {
        c.alpha = config_number<double>(key, value);
    } else if (key == "samples") {
        c.samples = config_number<std::uint64_t>(key, value);
    } else if (key == "master_seed") {
        c.master_seed = config_number<std::uint64_t>(key, value);
    } else if (key == "workers") {
        c.workers = config_number<unsigned>(key, value);
    } else if (key == "memory_cap") {
        c.memory_cap = config_number<std::size_t>(key, value);
    } else if (key == "output_dir") {
        c.output_dir = value;
    } else if (key == "full_trace") {
        c.full_trace = config_bool(key, value);
    } else if (key == "sort_key") {
        auto k = parse_sort_key(value);
        if (!k)
            throw Error(Errc::ConfigError, "unknown sort key '" + value + "'");
        c.sort_key = *k;
    } else if (key == "bin_width") {
        c.bin_width = config_number<double>(key, value);
    } else if (key == "shard_size") {
        c.shard_size = config_number<std::uint64_t>(key, value);
    } else if (key == "sigma") {
        c.sigma = config_number<double>(key, value);
    } else if (key == "qsim_validate") {
        c.qsim_validate = config_bool(key, value);
    } else if (key == "qsim_max_n") {
        c.qsim_max_n = config_number<std::uint32_t>(key, value);
    } else if (key == "qsim_samples") {
        c.qsim_samples = config_number<std::uint64_t>(key, value);
    } else if (key == "omega") {
        c.omega = config_number<double>(key, value);
    } else if (key == "gamma") {
        c.gamma = config_number<double>(key, value);
    } else {
        throw Error(Errc::ConfigError, "unknown key '" + key + "'");
    }
}

inline void validate_config(const CampaignConfig& c)
{
    auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
    if (c.samples < 1)
        fail("samples must be at least 1");
    if (c.n_values.empty())
        fail("n_values is empty");
    for (auto n : c.n_values)
        if (n < 3 || n > kMaxTrackerVars)
            fail("N values must lie in [3, " + std::to_string(kMaxTrackerVars) + "]");
    if (!(c.effective_alpha() > 0.0))
        fail("alpha must be positive");
    if (c.workers < 1)
        fail("workers must be at least 1");
    if (c.memory_cap < 1)
        fail("memory_cap must be at least 1");
    if (!(c.bin_width > 0.0))
        fail("bin_width must be positive");
    if (c.shard_size < 1)
        fail("shard_size must be at least 1");
    if (!(c.sigma > 0.0 && c.sigma < 1.0))
        fail("sigma must lie in (0, 1)");
    if (c.qsim_validate && c.qsim_max_n > qsim::kDefaultQubitLimit)
        fail("qsim_max_n exceeds the qsim limit of " + std::to_string(qsim::kDefaultQubitLimit));
    if (!(c.omega > 0.0) || !(c.gamma > 1.0))
        fail("omega must be positive and gamma above 1");
}

/// Flat "key = value" lines; '#' starts a comment.
inline CampaignConfig parse_config(std::string_view text)
{
    CampaignConfig c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto h = line.find('#'); h != std::string_view::npos)
            line = line.substr(0, h);
        const auto t = detail::trim(line);
        if (t.empty())
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        set_config_key(c, detail::trim(std::string_view(t).substr(0, eq)),
                       detail::trim(std::string_view(t).substr(eq + 1)));
        if (end == text.size())
            break;
    }
    return c;
}

/// SAQC_WORKERS and SAQC_MEMORY_CAP override the file. `getenv` is injectable for tests.
inline void apply_env_overrides(CampaignConfig& c,
                                const std::function<const char*(const char*)>& getenv = ::getenv)
{
    if (const char* v = getenv("SAQC_WORKERS"))
        set_config_key(c, "workers", v);
    if (const char* v = getenv("SAQC_MEMORY_CAP"))
        set_config_key(c, "memory_cap", v);
}

inline CampaignConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::ConfigError, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto c = parse_config(ss.str());
    apply_env_overrides(c);
    validate_config(c);
    return c;
}

/// Every setting that can change output bytes. Worker count and output
/// directory are left out.
inline ojson config_echo(const CampaignConfig& c)
{
    ojson j;
    j["family"] = family_name(c.family);
    j["n_values"] = c.n_values;
    j["alpha"] = c.effective_alpha();
    j["samples"] = c.samples;
    j["master_seed"] = c.master_seed;
    j["memory_cap"] = c.memory_cap;
    j["full_trace"] = c.full_trace;
    j["sort_key"] = sort_key_name(c.sort_key);
    j["bin_width"] = c.bin_width;
    j["shard_size"] = c.shard_size;
    j["sigma"] = c.sigma;
    j["qsim_validate"] = c.qsim_validate;
    if (c.qsim_validate) {
        j["qsim_max_n"] = c.qsim_max_n;
        j["qsim_samples"] = c.qsim_samples;
        j["omega"] = c.omega;
        j["gamma"] = c.gamma;
    }
    return j;
}

inline ojson run_metadata(const CampaignConfig& c)
{
    ojson j;
    j["tool"] = "saqc";
    j["version"] = kVersion;
    j["prng"] = kPrngName;
    j["seed_derivation"] = "splitmix64 chain over (master_seed, family, N, index)";
    j["sort_key"] = sort_key_name(c.sort_key);
    j["moments"] = "population (divide by n)";
    j["quantile"] = "type 7 (linear interpolation between order statistics)";
    j["config"] = config_echo(c);
    return j;
}

// ---- records ----

inline ojson record_to_json(const BetaRecord& r, const SolutionTrace* trace = nullptr)
{
    ojson j;
    j["seed"] = r.instance_seed;
    j["family"] = family_name(r.family);
    j["N"] = r.n_vars;
    j["M"] = r.n_clauses;
    j["status"] = status_name(r.status);
    j["beta"] = r.beta ? ojson(*r.beta) : ojson(nullptr);
    j["t_M_over_Omega"] = r.t_m_over_omega ? ojson(*r.t_m_over_omega) : ojson(nullptr);
    j["max_active_set"] = r.max_active_set;
    if (trace) {
        ojson steps = ojson::array();
        for (const auto& s : trace->steps) {
            ojson st;
            st["clause"] = s.clause_id;
            st["n_active"] = s.n_active_after;
            st["card"] = s.card_after;
            st["d_before"] = s.d_before;
            st["d_after"] = s.d_after;
            // The step that empties the set has an infinite ratio; JSON has no inf.
            st["log2_ratio"] = std::isfinite(s.log2_ratio) ? ojson(s.log2_ratio) : ojson(nullptr);
            steps.push_back(std::move(st));
        }
        j["steps"] = std::move(steps);
    }
    return j;
}

inline BetaRecord record_from_json(const ojson& j)
{
    try {
        BetaRecord r;
        r.instance_seed = j.at("seed").get<std::uint64_t>();
        auto f = parse_family(j.at("family").get<std::string>());
        auto st = parse_status(j.at("status").get<std::string>());
        if (!f || !st)
            throw Error(Errc::ReportError, "bad family or status in record");
        r.family = *f;
        r.status = *st;
        r.n_vars = j.at("N").get<std::uint32_t>();
        r.n_clauses = j.at("M").get<std::size_t>();
        if (!j.at("beta").is_null())
            r.beta = j.at("beta").get<double>();
        if (!j.at("t_M_over_Omega").is_null())
            r.t_m_over_omega = j.at("t_M_over_Omega").get<double>();
        r.max_active_set = j.at("max_active_set").get<std::uint64_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ReportError, std::string("malformed record: ") + e.what());
    }
}

inline std::string record_csv_header()
{
    return "seed,family,N,M,sat,beta,log2_tM,max_active_set\n";
}

inline std::string record_csv_row(const BetaRecord& r)
{
    std::string s = std::to_string(r.instance_seed) + "," + std::string(family_name(r.family)) +
                    "," + std::to_string(r.n_vars) + "," + std::to_string(r.n_clauses) + ",";
    s += r.status == TraceStatus::Sat ? "1" : (r.status == TraceStatus::Unsat ? "0" : "aborted");
    s += ",";
    if (r.beta)
        s += detail::format_double(*r.beta);
    s += ",";
    if (auto l = r.log2_tm())
        s += detail::format_double(*l);
    s += "," + std::to_string(r.max_active_set) + "\n";
    return s;
}

// ---- shards ----

struct Shard {
    std::uint32_t n_vars = 0;
    std::uint64_t index = 0; ///< shard number within this N
    std::uint64_t first = 0;
    std::uint64_t count = 0;
};

inline std::vector<Shard> plan_shards(const CampaignConfig& c)
{
    std::vector<Shard> out;
    for (auto n : c.n_values)
        for (std::uint64_t k = 0, first = 0; first < c.samples; ++k, first += c.shard_size)
            out.push_back({n, k, first, std::min(c.shard_size, c.samples - first)});
    return out;
}

inline std::filesystem::path shard_path(const std::filesystem::path& dir, Family f, const Shard& s)
{
    return dir / "shards" /
           (std::string(family_name(f)) + "_N" + std::to_string(s.n_vars) + "_" +
            std::to_string(s.index) + ".jsonl");
}

inline std::string shard_terminator(const Shard& s, std::uint64_t config_hash)
{
    return "#end " + std::to_string(s.count) + " " + detail::hex64(config_hash);
}

/// A shard is complete when it holds `count` record lines followed by the
/// terminator written for the same configuration.
inline bool shard_complete(const std::filesystem::path& p, const Shard& s, std::uint64_t config_hash)
{
    std::ifstream in(p);
    if (!in)
        return false;
    std::string line, last;
    std::uint64_t lines = 0;
    bool terminated = false;
    while (std::getline(in, line)) {
        if (terminated)
            return false; // data after the terminator
        if (line.starts_with("#end ")) {
            terminated = true;
            last = line;
        } else {
            ++lines;
        }
    }
    return terminated && lines == s.count && last == shard_terminator(s, config_hash) &&
           in.eof();
}

inline std::uint64_t config_hash(const CampaignConfig& c)
{
    return detail::fnv1a(config_echo(c).dump());
}

struct ShardOutcome {
    std::uint64_t aborted = 0;
};

/// Instance `index` of a campaign.
inline Instance campaign_instance(const CampaignConfig& c, std::uint32_t n, std::uint64_t index)
{
    return generate_instance(c.family, n, c.effective_alpha(), derive_seed(c.master_seed, c.family, n, index));
}

inline void run_shard(const CampaignConfig& c, const Shard& s, const std::filesystem::path& path,
                      std::uint64_t hash)
{
    std::string body;
    TraceOptions opts;
    opts.sort_key = c.sort_key;
    opts.memory_cap = c.memory_cap;
    for (std::uint64_t i = s.first; i < s.first + s.count; ++i) {
        const auto inst = campaign_instance(c, s.n_vars, i);
        ojson j;
        try {
            auto res = run_trace(inst, opts);
            j = record_to_json(res.record, c.full_trace ? &res.trace : nullptr);
        } catch (const Error& e) {
            if (e.code() != Errc::CapacityExceeded)
                throw;
            j = record_to_json(aborted_record(inst));
        }
        body += j.dump();
        body += '\n';
    }
    body += shard_terminator(s, hash);
    body += '\n';
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << body;
        out.flush();
        if (!out)
            throw Error(Errc::IoError, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// ---- statistics products ----

inline ojson power_law_json(const PowerLawFit& f)
{
    ojson j;
    j["a"] = f.a;
    j["b"] = f.b;
    j["b_stderr"] = f.b_stderr;
    j["residual"] = f.residual;
    ojson pts = ojson::array();
    for (auto [n, y] : f.points)
        pts.push_back({n, y});
    j["points"] = pts;
    return j;
}

inline ojson tail_json(const TailFit& t)
{
    ojson j;
    j["xi"] = t.xi;
    j["intercept"] = t.intercept;
    j["fit_region"] = {t.fit_region.first, t.fit_region.second};
    j["residual"] = t.residual;
    j["bins_used"] = t.bins_used;
    return j;
}

/// Summaries, fits and per-N beta samples of one family.
struct CampaignStats {
    std::map<std::uint32_t, BetaSummary> summaries;
    std::map<std::uint32_t, std::vector<double>> betas;
    std::map<std::uint32_t, std::size_t> clauses; ///< M per N
    std::optional<PowerLawFit> mean_fit, std_fit;
    std::map<std::uint32_t, TailFit> tails;
    ojson fits;
    std::vector<std::string> warnings;
};

inline CampaignStats compute_stats(std::span<const BetaRecord> records, const CampaignConfig& c)
{
    CampaignStats st;
    for (const auto& r : records) {
        auto [it, _] = st.summaries.try_emplace(r.n_vars, r.family, r.n_vars, c.bin_width);
        it->second.add(r);
        st.clauses[r.n_vars] = r.n_clauses;
        if (r.satisfiable())
            st.betas[r.n_vars].push_back(*r.beta);
    }
    std::vector<std::pair<double, double>> means, stds;
    for (const auto& [n, s] : st.summaries) {
        if (s.sat_count() == 0) {
            st.warnings.push_back("N=" + std::to_string(n) + ": no satisfiable records, omitted");
            continue;
        }
        means.emplace_back(n, s.mean());
        stds.emplace_back(n, s.stddev());
    }
    ojson fits;
    fits["family"] = family_name(c.family);
    fits["metadata"] = run_metadata(c);
    auto fit_or_error = [&](const std::vector<std::pair<double, double>>& pts,
                            std::optional<PowerLawFit>& slot) -> ojson {
        try {
            slot = fit_power_law(pts);
            return power_law_json(*slot);
        } catch (const Error& e) {
            return ojson{{"error", e.what()}};
        }
    };
    fits["mean_beta_fit"] = fit_or_error(means, st.mean_fit);
    fits["std_beta_fit"] = fit_or_error(stds, st.std_fit);
    ojson per_n = ojson::array();
    for (const auto& [n, s] : st.summaries) {
        ojson j;
        j["N"] = n;
        if (s.sat_count() == 0) {
            j["error"] = "EmptyPopulation";
            per_n.push_back(j);
            continue;
        }
        std::optional<TailFit> tail;
        try {
            tail = fit_tail(s.histogram());
            st.tails[n] = *tail;
            j["tail"] = tail_json(*tail);
        } catch (const Error& e) {
            j["tail"] = ojson{{"error", e.what()}};
        }
        try {
            const auto q = beta_opt(st.betas[n], c.sigma, tail);
            j["sigma"] = c.sigma;
            j["beta_opt"] = q.value;
            j["beta_opt_method"] = quantile_method_name(q.method);
            j["t_opt_over_omega"] = t_opt(q.value, st.clauses[n], 1.0);
            if (tail)
                j["p_fail"] = p_fail(q.value, *tail);
        } catch (const Error& e) {
            j["beta_opt_error"] = e.what();
        }
        if (st.mean_fit && st.std_fit)
            j["sigma_rule_exponent"] = sigma_rule_exponent(*st.mean_fit, *st.std_fit, n);
        per_n.push_back(j);
    }
    fits["per_n"] = per_n;
    st.fits = std::move(fits);
    return st;
}

inline void write_text(const std::filesystem::path& p, const std::string& s)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
    out.flush();
    if (!out)
        throw Error(Errc::IoError, "cannot write " + p.string());
}

inline void write_stats(const std::filesystem::path& dir, const CampaignStats& st,
                        const CampaignConfig& c)
{
    std::string summary = "family,N,count,sat_frac,mean_beta,std_beta\n";
    for (const auto& [n, s] : st.summaries) {
        summary += std::string(family_name(c.family)) + "," + std::to_string(n) + "," +
                   std::to_string(s.records()) + "," + detail::format_double(s.sat_fraction()) + ",";
        if (s.sat_count() > 0)
            summary += detail::format_double(s.mean()) + "," + detail::format_double(s.stddev());
        else
            summary += ",";
        summary += "\n";
        std::string hist = "beta_low,count\n";
        for (auto [low, count] : s.histogram().bins)
            hist += detail::format_double(low) + "," + std::to_string(count) + "\n";
        write_text(dir / ("hist_" + std::string(family_name(c.family)) + "_" + std::to_string(n) + ".csv"),
                   hist);
    }
    write_text(dir / "summary.csv", summary);
    write_text(dir / "fits.json", st.fits.dump(2) + "\n");
}

inline std::vector<BetaRecord> read_records(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::ReportError, "missing " + path.string());
    std::vector<BetaRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        try {
            out.push_back(record_from_json(ojson::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ReportError, std::string("malformed line in records: ") + e.what());
        }
    }
    return out;
}

// ---- qsim validation ----

inline ojson qsim_report(const CampaignConfig& c)
{
    ojson rep;
    rep["gamma"] = c.gamma;
    rep["omega"] = c.omega;
    rep["mixer_norm"] = qsim::mixer_norm_name(qsim::MixerNorm::SubspaceUnit);
    ojson list = ojson::array();
    for (auto n : c.n_values) {
        if (n > c.qsim_max_n)
            continue;
        std::uint64_t taken = 0;
        for (std::uint64_t i = 0; i < c.samples && taken < c.qsim_samples; ++i) {
            const auto inst = campaign_instance(c, n, i);
            qsim::Problem p(inst, qsim::kDefaultQubitLimit, c.sort_key);
            if (!p.satisfiable())
                continue;
            ++taken;
            ojson j;
            j["N"] = n;
            j["index"] = i;
            j["seed"] = *inst.seed;
            const auto prof = qsim::min_gap_profile(p, c.gamma);
            ojson ivs = ojson::array();
            for (const auto& iv : prof.intervals)
                ivs.push_back({{"m", iv.interval},
                               {"d_prev", iv.d_prev},
                               {"d_curr", iv.d_curr},
                               {"min_gap", iv.min_gap},
                               {"predicted_gap", iv.predicted_gap},
                               {"lambda_star", iv.lambda_star}});
            j["intervals"] = ivs;
            j["max_deviation"] = prof.max_deviation();
            const auto r = qsim::evolve(p, qsim::schedule_from_counts(p, c.omega, c.gamma));
            j["fidelity"] = r.fidelity;
            j["total_time"] = r.total_time;
            j["adimensional_time"] = r.adimensional_time;
            list.push_back(j);
        }
    }
    rep["instances"] = list;
    return rep;
}

// ---- campaign ----

struct CampaignResult {
    std::uint64_t records = 0;
    std::uint64_t aborted = 0;
    std::uint64_t shards_run = 0;
    std::uint64_t shards_reused = 0;
    std::vector<std::string> warnings;

    int exit_code() const { return aborted > 0 ? 3 : 0; }
};

inline CampaignResult run_campaign(const CampaignConfig& c)
{
    validate_config(c);
    namespace fs = std::filesystem;
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir / "shards", ec);
    if (ec)
        throw Error(Errc::IoError, "cannot create " + (dir / "shards").string() + ": " + ec.message());

    const auto shards = plan_shards(c);
    const auto hash = config_hash(c);
    std::vector<std::size_t> pending;
    CampaignResult res;
    for (std::size_t k = 0; k < shards.size(); ++k) {
        if (shard_complete(shard_path(dir, c.family, shards[k]), shards[k], hash))
            ++res.shards_reused;
        else
            pending.push_back(k);
    }
    res.shards_run = pending.size();

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pending.size())
                return;
            try {
                const auto& s = shards[pending[i]];
                run_shard(c, s, shard_path(dir, c.family, s), hash);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure)
                    failure = std::current_exception();
                next = pending.size();
                return;
            }
        }
    };
    {
        const std::size_t n_threads = std::min<std::size_t>(c.workers, pending.size());
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t)
            pool.emplace_back(worker);
        if (n_threads > 0)
            worker();
    }
    if (failure)
        std::rethrow_exception(failure);

    // Merge in (N, index) order.
    std::string jsonl, csv = record_csv_header();
    std::vector<BetaRecord> records;
    for (const auto& s : shards) {
        std::ifstream in(shard_path(dir, c.family, s));
        std::string line;
        while (std::getline(in, line)) {
            if (line.starts_with("#end "))
                break;
            auto r = record_from_json(ojson::parse(line));
            res.aborted += r.status == TraceStatus::Aborted;
            csv += record_csv_row(r);
            jsonl += line;
            jsonl += '\n';
            records.push_back(std::move(r));
        }
    }
    res.records = records.size();
    write_text(dir / "records.jsonl", jsonl);
    write_text(dir / "records.csv", csv);
    auto st = compute_stats(records, c);
    write_stats(dir, st, c);
    res.warnings = st.warnings;
    write_text(dir / "metadata.json", run_metadata(c).dump(2) + "\n");
    if (c.qsim_validate)
        write_text(dir / "qsim_report.json", qsim_report(c).dump(2) + "\n");
    return res;
}

// ---- report ----

/// Settings needed for statistics, read back from metadata.json.
inline CampaignConfig config_from_metadata(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "metadata.json");
    if (!in)
        throw Error(Errc::ReportError, "missing " + (dir / "metadata.json").string());
    CampaignConfig c;
    try {
        const auto meta = ojson::parse(in);
        const auto& cfg = meta.at("config");
        auto f = parse_family(cfg.at("family").get<std::string>());
        auto k = parse_sort_key(cfg.at("sort_key").get<std::string>());
        if (!f || !k)
            throw Error(Errc::ReportError, "unknown family or sort key");
        c.family = *f;
        c.sort_key = *k;
        c.n_values = cfg.at("n_values").get<std::vector<std::uint32_t>>();
        c.alpha = cfg.at("alpha").get<double>();
        c.samples = cfg.at("samples").get<std::uint64_t>();
        c.master_seed = cfg.at("master_seed").get<std::uint64_t>();
        c.bin_width = cfg.at("bin_width").get<double>();
        c.sigma = cfg.at("sigma").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ReportError, std::string("bad metadata.json: ") + e.what());
    }
    return c;
}

/// Recomputes summary.csv, fits.json and histograms from records.jsonl.
inline CampaignStats refit(const std::filesystem::path& dir)
{
    const auto c = config_from_metadata(dir);
    const auto records = read_records(dir / "records.jsonl");
    auto st = compute_stats(records, c);
    write_stats(dir, st, c);
    return st;
}

struct Report {
    std::string text;
    std::vector<std::string> warnings;
};

/// Plot-ready CSVs from a finished campaign directory:
///   fig1a.csv   N, mean and std of t_M/Omega and of log2 t_M
///   fig1b.csv   N, mean beta, std beta, fitted a N^b for both
///   fig2_<family>_<N>.csv   beta center, density
///   fig2_xi.csv N, xi
inline Report report(const std::filesystem::path& dir)
{
    const auto records = read_records(dir / "records.jsonl");
    if (records.empty())
        throw Error(Errc::ReportError, "records.jsonl holds no records");
    const auto c = config_from_metadata(dir);
    const auto st = compute_stats(records, c);
    Report rep;
    rep.warnings = st.warnings;

    std::map<std::uint32_t, BetaSummary> t_acc;
    std::map<std::uint32_t, BetaSummary> logt_acc;
    for (const auto& r : records)
        if (r.satisfiable() && r.t_m_over_omega) {
            t_acc.try_emplace(r.n_vars, r.family, r.n_vars).first->second.add_beta(*r.t_m_over_omega);
            logt_acc.try_emplace(r.n_vars, r.family, r.n_vars).first->second.add_beta(*r.log2_tm());
        }
    using detail::format_double;
    std::string f1a = "N,mean_tM_over_Omega,std_tM_over_Omega,mean_log2_tM,std_log2_tM\n";
    for (const auto& [n, s] : t_acc)
        f1a += std::to_string(n) + "," + format_double(s.mean()) + "," + format_double(s.stddev()) +
               "," + format_double(logt_acc.at(n).mean()) + "," + format_double(logt_acc.at(n).stddev()) +
               "\n";
    write_text(dir / "fig1a.csv", f1a);

    std::string f1b = "N,mean_beta,std_beta,fit_mean_beta,fit_std_beta\n";
    for (const auto& [n, s] : st.summaries) {
        if (s.sat_count() == 0)
            continue;
        f1b += std::to_string(n) + "," + format_double(s.mean()) + "," + format_double(s.stddev()) +
               "," + (st.mean_fit ? format_double((*st.mean_fit)(n)) : "") + "," +
               (st.std_fit ? format_double((*st.std_fit)(n)) : "") + "\n";
    }
    write_text(dir / "fig1b.csv", f1b);

    std::string xi = "N,xi\n";
    for (const auto& [n, s] : st.summaries) {
        if (s.sat_count() == 0)
            continue;
        const auto h = s.histogram();
        std::string f2 = "beta,density\n";
        for (auto [low, count] : h.bins)
            f2 += format_double(low + 0.5 * h.bin_width) + "," +
                  format_double(double(count) / (double(h.total_count) * h.bin_width)) + "\n";
        write_text(dir / ("fig2_" + std::string(family_name(c.family)) + "_" + std::to_string(n) + ".csv"), f2);
        if (auto it = st.tails.find(n); it != st.tails.end())
            xi += std::to_string(n) + "," + format_double(it->second.xi) + "\n";
    }
    write_text(dir / "fig2_xi.csv", xi);

    std::ostringstream os;
    os << "family " << family_name(c.family) << ", " << records.size() << " records\n";
    for (const auto& [n, s] : st.summaries) {
        os << "N=" << n << " count=" << s.records() << " sat_frac=" << s.sat_fraction();
        if (s.sat_count() > 0)
            os << " mean_beta=" << s.mean() << " std_beta=" << s.stddev();
        if (auto it = st.tails.find(n); it != st.tails.end())
            os << " xi=" << it->second.xi;
        os << "\n";
    }
    if (st.mean_fit)
        os << "mean beta ~ " << st.mean_fit->a << " N^" << st.mean_fit->b
           << " (rms " << st.mean_fit->residual << ")\n";
    if (st.std_fit)
        os << "std beta ~ " << st.std_fit->a << " N^" << st.std_fit->b
           << " (rms " << st.std_fit->residual << ")\n";
    for (const auto& w : rep.warnings)
        os << "warning: " << w << "\n";
    rep.text = os.str();
    return rep;
}

} // namespace saqc
