// SPDX-License-Identifier: Apache-2.0
// saqc: command-line front end.
//   gen        one random instance
//   trace      active-set trace of one instance (JSON)
//   campaign   full run from a config file
//   fit        recompute statistics from an existing campaign directory
//   qvalidate  gap and fidelity report for one small instance
//   report     figure tables from a campaign directory

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "saqc/harness.hpp"

using namespace saqc;

namespace {

std::string read_input(const std::string& path)
{
    std::stringstream ss;
    if (path == "-") {
        ss << std::cin.rdbuf();
    } else {
        std::ifstream in(path);
        if (!in)
            throw Error(Errc::IoError, "cannot read " + path);
        ss << in.rdbuf();
    }
    return ss.str();
}

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v;
        if (!detail::parse_number(detail::trim(item), v))
            throw Error(Errc::ConfigError, "bad number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"structured adiabatic SAT cost analysis"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate one random instance");
    std::string gen_family = "x3sat", gen_out = "-";
    std::uint32_t gen_n = 8;
    std::optional<double> gen_alpha;
    std::uint64_t gen_seed = 1;
    gen->add_option("--family", gen_family, "x3sat or 3sat")->capture_default_str();
    gen->add_option("-n,--vars", gen_n, "number of variables")->capture_default_str();
    gen->add_option("--alpha", gen_alpha, "clause ratio (default 0.62 / 4.25)");
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("-o,--output", gen_out, "file or - for stdout")->capture_default_str();

    // trace
    auto* trace = app.add_subcommand("trace", "trace one instance");
    std::string trace_in = "-", trace_sort = "lexicographic";
    bool trace_full = false;
    std::size_t trace_cap = kDefaultMemoryCap;
    unsigned trace_workers = 1;
    trace->add_option("input", trace_in, "instance file or -")->capture_default_str();
    trace->add_flag("--full-trace", trace_full, "include every step");
    trace->add_option("--sort-key", trace_sort)->capture_default_str();
    trace->add_option("--memory-cap", trace_cap)->capture_default_str();
    trace->add_option("--workers", trace_workers)->capture_default_str();

    // campaign
    auto* campaign = app.add_subcommand("campaign", "run a campaign from a config file");
    std::string campaign_cfg;
    std::optional<std::string> campaign_out;
    campaign->add_option("config", campaign_cfg)->required();
    campaign->add_option("-o,--output-dir", campaign_out, "overrides output_dir");

    // fit
    auto* fit = app.add_subcommand("fit", "recompute statistics of a campaign directory");
    std::string fit_dir;
    fit->add_option("dir", fit_dir)->required();

    // qvalidate
    auto* qv = app.add_subcommand("qvalidate", "spectral and fidelity check of a small instance");
    std::string qv_in = "-", qv_norm = "subspace-unit", qv_profile_csv, qv_fidelity_csv;
    double qv_gamma = 100.0;
    std::string qv_omegas = "10";
    std::size_t qv_grid = 257;
    std::optional<double> qv_kappa;
    qv->add_option("input", qv_in, "instance file or -")->capture_default_str();
    qv->add_option("--gamma", qv_gamma)->capture_default_str();
    qv->add_option("--kappa", qv_kappa, "per-interval Gamma_m = kappa sqrt(d_{m-1}/d_m) for evolution");
    qv->add_option("--omega", qv_omegas, "comma-separated Omega values")->capture_default_str();
    qv->add_option("--grid", qv_grid)->capture_default_str();
    qv->add_option("--mixer", qv_norm, "subspace-unit, projector or printed")->capture_default_str();
    qv->add_option("--profile-csv", qv_profile_csv, "write interval,lambda,E0,E1");
    qv->add_option("--fidelity-csv", qv_fidelity_csv, "write Omega,fidelity");

    // report
    auto* rep = app.add_subcommand("report", "figure tables from a campaign directory");
    std::string rep_dir;
    rep->add_option("dir", rep_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            auto fam = parse_family(gen_family);
            if (!fam)
                throw Error(Errc::ConfigError, "unknown family '" + gen_family + "'");
            const double alpha = gen_alpha.value_or(*fam == Family::X3SAT ? 0.62 : 4.25);
            const auto text = serialize_instance(generate_instance(*fam, gen_n, alpha, gen_seed));
            if (gen_out == "-")
                std::cout << text;
            else
                write_text(gen_out, text);
            return 0;
        }
        if (*trace) {
            auto key = parse_sort_key(trace_sort);
            if (!key)
                throw Error(Errc::ConfigError, "unknown sort key '" + trace_sort + "'");
            const auto inst = parse_instance(read_input(trace_in));
            TraceOptions opts{*key, trace_cap, trace_workers};
            try {
                auto res = run_trace(inst, opts);
                std::cout << record_to_json(res.record, trace_full ? &res.trace : nullptr).dump() << "\n";
            } catch (const Error& e) {
                if (e.code() != Errc::CapacityExceeded)
                    throw;
                std::cout << record_to_json(aborted_record(inst)).dump() << "\n";
                return 3;
            }
            return 0;
        }
        if (*campaign) {
            auto cfg = load_config(campaign_cfg);
            if (campaign_out)
                cfg.output_dir = *campaign_out;
            const auto res = run_campaign(cfg);
            std::cout << res.records << " records, " << res.aborted << " aborted, "
                      << res.shards_run << " shards run, " << res.shards_reused << " reused -> "
                      << cfg.output_dir << "\n";
            for (const auto& w : res.warnings)
                std::cerr << "warning: " << w << "\n";
            return res.exit_code();
        }
        if (*fit) {
            const auto st = refit(fit_dir);
            std::cout << st.fits.dump(2) << "\n";
            for (const auto& w : st.warnings)
                std::cerr << "warning: " << w << "\n";
            return 0;
        }
        if (*qv) {
            auto norm = qsim::parse_mixer_norm(qv_norm);
            if (!norm)
                throw Error(Errc::ConfigError, "unknown mixer normalization '" + qv_norm + "'");
            const auto inst = parse_instance(read_input(qv_in));
            const qsim::Problem p(inst);
            const auto prof = qsim::min_gap_profile(p, qv_gamma, qv_grid, *norm);
            ojson out;
            out["N"] = inst.n_vars;
            out["M"] = inst.clauses.size();
            out["gamma"] = qv_gamma;
            out["mixer_norm"] = qsim::mixer_norm_name(*norm);
            ojson ivs = ojson::array();
            for (const auto& iv : prof.intervals)
                ivs.push_back({{"m", iv.interval},
                               {"d_prev", iv.d_prev},
                               {"d_curr", iv.d_curr},
                               {"min_gap", iv.min_gap},
                               {"predicted_gap", iv.predicted_gap},
                               {"lambda_star", iv.lambda_star}});
            out["intervals"] = ivs;
            out["max_deviation"] = prof.max_deviation();
            if (!qv_profile_csv.empty()) {
                std::string csv = "interval,lambda,E0,E1\n";
                for (const auto& iv : prof.intervals)
                    for (std::size_t i = 0; i < iv.lambdas.size(); ++i)
                        csv += std::to_string(iv.interval) + "," + detail::format_double(iv.lambdas[i]) +
                               "," + detail::format_double(iv.e0[i]) + "," +
                               detail::format_double(iv.e1[i]) + "\n";
                write_text(qv_profile_csv, csv);
            }
            if (p.satisfiable()) {
                ojson fid = ojson::array();
                std::string csv = "Omega,fidelity\n";
                for (double omega : parse_list(qv_omegas)) {
                    auto sched = qsim::schedule_from_counts(p, omega, qv_gamma, qv_kappa);
                    sched.norm = *norm;
                    const auto r = qsim::evolve(p, sched);
                    fid.push_back({{"omega", omega},
                                   {"fidelity", r.fidelity},
                                   {"total_time", r.total_time},
                                   {"adimensional_time", r.adimensional_time}});
                    csv += detail::format_double(omega) + "," + detail::format_double(r.fidelity) + "\n";
                }
                out["evolution"] = fid;
                if (!qv_fidelity_csv.empty())
                    write_text(qv_fidelity_csv, csv);
            } else {
                out["evolution"] = "unsatisfiable: no target state";
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*rep) {
            const auto r = report(rep_dir);
            std::cout << r.text;
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "saqc: " << e.what() << "\n";
        return e.code() == Errc::ConfigError ? 2 : 1;
    }
    return 0;
}
