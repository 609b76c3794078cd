#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "petc/certify.hpp"
#include "petc/config.hpp"
#include "petc/dynamics.hpp"
#include "petc/engine.hpp"
#include "petc/errors.hpp"
#include "petc/io.hpp"
#include "petc/verify.hpp"

#ifndef PETC_LAB_VERSION
#define PETC_LAB_VERSION "0.0.0"
#endif

namespace petc {

/// Cross-command CLI options; they override the corresponding config values.
struct RunOptions {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

namespace cmd_detail {

inline LabConfig apply_options(LabConfig cfg, const RunOptions& opt) {
    if (opt.out_dir) cfg.out_dir = *opt.out_dir;
    if (opt.seed) {
        cfg.estimation.seed = *opt.seed;
        cfg.channel_seed = *opt.seed;
    }
    return cfg;
}

inline std::filesystem::path ensure_out_dir(const LabConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file '" + path.string() + "'");
    out << content;
}

inline void write_manifest(const std::filesystem::path& path, const LabConfig& cfg,
                           const std::string& command,
                           const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["tool"] = "petc_lab";
    j["version"] = PETC_LAB_VERSION;
    j["command"] = command;
    j["config_path"] = cfg.path;
    j["config_digest"] = hex64(fnv1a64(cfg.raw));
    j["seeds"] = {{"certify", cfg.estimation.seed}, {"channel", cfg.channel_seed}};
    j["outputs"] = outputs;
    j["created"] = iso8601_now();
    write_file(path, j.dump(2) + "\n");
}

}  // namespace cmd_detail

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands
// ---------------------------------------------------------------------------

struct CertifiedSetup {
    PresetBundle bundle;
    CertificationConstants constants;
};

/// Resolves the preset and runs the certification pipeline. A diagnostic
/// engine.h_override replaces the selected sampling period afterwards.
inline CertifiedSetup build_setup(const LabConfig& cfg) {
    PresetBundle bundle = make_preset(cfg.preset);
    CertificationConstants k =
        certify_system(bundle.model, bundle.set, cfg.sigma, cfg.m, cfg.estimation, cfg.overrides);
    if (cfg.h_override) k.h = *cfg.h_override;
    return CertifiedSetup{std::move(bundle), k};
}

inline SimConfig build_sim_config(const LabConfig& cfg, const CertifiedSetup& setup) {
    SimConfig sim{setup.bundle.model, setup.bundle.set, setup.constants, cfg.trigger,
                  make_channel(cfg),  cfg.require_x0(),  cfg.require_horizon(), cfg.substeps};
    return sim;
}

inline std::string certification_text(const CertificationConstants& k) {
    std::ostringstream os;
    os << "c = " << fmt_real(k.c) << "\n";
    os << "sigma = " << fmt_real(k.sigma) << "\n";
    os << "m = " << k.m << "\n";
    auto constant = [&](const char* name, double value, Provenance src, double raw) {
        os << name << " = " << fmt_real(value) << "\n";
        os << name << "_source = " << to_string(src) << "\n";
        if (src == Provenance::Estimated) os << name << "_raw = " << fmt_real(raw) << "\n";
    };
    constant("L1c", k.L1c, k.L1c_src, k.L1c_raw);
    constant("L2c", k.L2c, k.L2c_src, k.L2c_raw);
    constant("M_max_c", k.M_max_c, k.M_src, k.M_max_c_raw);
    os << "mu_c = " << fmt_real(k.mu_c) << "\n";
    os << "mu_c_source = " << to_string(k.mu_src) << "\n";
    os << "safety_factor = " << fmt_real(k.safety_factor) << "\n";
    os << "h_sigma_masp = " << fmt_real(k.h_sigma_masp) << "\n";
    os << "h_masp_prior = " << fmt_real(k.h_masp_prior) << "\n";
    os << "h = " << fmt_real(k.h) << "\n";
    os << "active_branch = " << to_string(k.active_branch) << "\n";
    os << "k_rate = " << fmt_real(k.k_rate) << "\n";
    return os.str();
}

inline std::string certification_csv(const CertificationConstants& k) {
    std::ostringstream os;
    os << "c,sigma,m,L1c,L2c,M_max_c,mu_c,h_sigma_masp,h_masp_prior,h,active_branch\n";
    os << fmt_real(k.c) << ',' << fmt_real(k.sigma) << ',' << k.m << ',' << fmt_real(k.L1c) << ','
       << fmt_real(k.L2c) << ',' << fmt_real(k.M_max_c) << ',' << fmt_real(k.mu_c) << ','
       << fmt_real(k.h_sigma_masp) << ',' << fmt_real(k.h_masp_prior) << ',' << fmt_real(k.h)
       << ',' << to_string(k.active_branch) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline CertificationConstants cmd_certify(const LabConfig& raw_cfg, const RunOptions& opt = {}) {
    const LabConfig cfg = cmd_detail::apply_options(raw_cfg, opt);
    const CertifiedSetup setup = build_setup(cfg);
    const auto dir = cmd_detail::ensure_out_dir(cfg);
    const auto txt = dir / (cfg.prefix + "_certify.txt");
    const auto csv = dir / (cfg.prefix + "_certify.csv");
    cmd_detail::write_file(txt, certification_text(setup.constants));
    cmd_detail::write_file(csv, certification_csv(setup.constants));
    cmd_detail::write_manifest(dir / (cfg.prefix + "_certify_manifest.json"), cfg, "certify",
                               {txt.string(), csv.string()});
    if (!opt.quiet) std::cout << certification_text(setup.constants);
    return setup.constants;
}

inline TrajectoryLog cmd_simulate(const LabConfig& raw_cfg, const RunOptions& opt = {}) {
    const LabConfig cfg = cmd_detail::apply_options(raw_cfg, opt);
    const CertifiedSetup setup = build_setup(cfg);
    const TrajectoryLog log = run(build_sim_config(cfg, setup));
    if (log.trace_exhausted)
        std::cerr << "warning: dropout trace exhausted; remaining attempts were delivered\n";
    const auto dir = cmd_detail::ensure_out_dir(cfg);
    const auto csv = dir / (cfg.prefix + "_trajectory.csv");
    {
        std::ofstream out(csv, std::ios::binary);
        if (!out) throw ConfigError("cannot write output file '" + csv.string() + "'");
        log.write_csv(out);
    }
    cmd_detail::write_manifest(dir / (cfg.prefix + "_simulate_manifest.json"), cfg, "simulate",
                               {csv.string()});
    if (!opt.quiet) {
        const TransmissionStats st = transmission_stats(log);
        std::cout << "rows = " << log.rows() << "\n"
                  << "sends = " << st.sends << "\n"
                  << "successes = " << st.successes << "\n"
                  << "mean_gap = " << fmt_real(st.mean_gap) << "\n"
                  << "log = " << csv.string() << "\n";
    }
    return log;
}

inline VerificationReport cmd_verify(const std::string& log_path, const LabConfig& raw_cfg,
                                     const RunOptions& opt = {}) {
    const LabConfig cfg = cmd_detail::apply_options(raw_cfg, opt);
    std::ifstream in(log_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open trajectory log '" + log_path + "'");
    TrajectoryLog log = TrajectoryLog::read_csv(in);

    const CertifiedSetup setup = build_setup(cfg);
    if (log.n != setup.bundle.model.state_dim || log.b != setup.bundle.model.input_dim)
        throw ConfigError("trajectory dimensions do not match the configured model");
    CertificationConstants k = setup.constants;
    k.h = log.h;  // checks run against the grid the log was produced with
    log.substeps = cfg.substeps;

    const VerificationReport report = run_standard_checks(log, setup.bundle.model, k);
    const auto dir = cmd_detail::ensure_out_dir(cfg);
    const auto txt = dir / (cfg.prefix + "_verify.txt");
    const auto csv = dir / (cfg.prefix + "_verify.csv");
    cmd_detail::write_file(txt, report.to_text());
    cmd_detail::write_file(csv, report.to_csv());
    cmd_detail::write_manifest(dir / (cfg.prefix + "_verify_manifest.json"), cfg, "verify",
                               {txt.string(), csv.string()});
    if (!opt.quiet) std::cout << report.to_text();
    return report;
}

struct CompareResult {
    TransmissionStats petc;
    TransmissionStats baseline;
    double bound_ratio = 0.0;    // h_sigma_masp / h_masp_prior
    double savings_ratio = 0.0;  // baseline sends / petc sends
};

inline CompareResult cmd_compare(const LabConfig& raw_cfg, const RunOptions& opt = {}) {
    const LabConfig cfg = cmd_detail::apply_options(raw_cfg, opt);
    const CertifiedSetup setup = build_setup(cfg);
    const SimConfig sim = build_sim_config(cfg, setup);  // both runs copy the same channel state
    const TrajectoryLog petc_log = run(sim);
    const TrajectoryLog base_log = run_periodic_baseline(sim);
    if (petc_log.trace_exhausted || base_log.trace_exhausted)
        std::cerr << "warning: dropout trace exhausted; remaining attempts were delivered\n";

    CompareResult res;
    res.petc = transmission_stats(petc_log);
    res.baseline = transmission_stats(base_log);
    res.bound_ratio = setup.constants.h_sigma_masp / setup.constants.h_masp_prior;
    res.savings_ratio = res.petc.sends > 0
                            ? static_cast<double>(res.baseline.sends) /
                                  static_cast<double>(res.petc.sends)
                            : std::numeric_limits<double>::quiet_NaN();

    std::ostringstream os;
    os << "variant,sends,successes,mean_gap,median_gap,h_sigma_masp,h_masp_prior,bound_ratio,"
          "savings_ratio\n";
    auto row = [&](const char* name, const TransmissionStats& st) {
        os << name << ',' << st.sends << ',' << st.successes << ',' << fmt_real(st.mean_gap)
           << ',' << fmt_real(st.median_gap) << ',' << fmt_real(setup.constants.h_sigma_masp)
           << ',' << fmt_real(setup.constants.h_masp_prior) << ',' << fmt_real(res.bound_ratio)
           << ',' << fmt_real(res.savings_ratio) << "\n";
    };
    row("petc", res.petc);
    row("baseline", res.baseline);

    const auto dir = cmd_detail::ensure_out_dir(cfg);
    const auto csv = dir / (cfg.prefix + "_compare.csv");
    cmd_detail::write_file(csv, os.str());
    cmd_detail::write_manifest(dir / (cfg.prefix + "_compare_manifest.json"), cfg, "compare",
                               {csv.string()});
    if (!opt.quiet) std::cout << os.str();
    return res;
}

struct SweepCell {
    double sigma = 0.0;
    int m = 0;
    std::string rule;
    double p = 0.0;
    CertificationConstants constants;
    TransmissionStats stats;
    bool verified = false;
    std::string worst_check;
    double worst_margin = 0.0;
    std::string error;
};

inline int sweep_thread_cap() {
    if (const char* env = std::getenv("PETC_LAB_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Cartesian sweep over sigma, m, rule and loss probability. Cells run on an
/// independent task pool; the aggregate table is written in cell order so the
/// output does not depend on scheduling.
inline std::vector<SweepCell> cmd_sweep(const LabConfig& raw_cfg, const RunOptions& opt = {}) {
    const LabConfig cfg = cmd_detail::apply_options(raw_cfg, opt);
    const std::vector<double> sigmas = cfg.sweep_sigma.empty() ? std::vector<double>{cfg.sigma}
                                                               : cfg.sweep_sigma;
    const std::vector<int> ms = cfg.sweep_m.empty() ? std::vector<int>{cfg.m} : cfg.sweep_m;
    const std::vector<std::string> rules =
        cfg.sweep_rules.empty() ? std::vector<std::string>{to_string(cfg.trigger.rule)}
                                : cfg.sweep_rules;
    const std::vector<double> ps = cfg.sweep_p.empty() ? std::vector<double>{cfg.channel_p}
                                                       : cfg.sweep_p;

    std::vector<SweepCell> cells;
    for (double s : sigmas)
        for (int m : ms)
            for (const std::string& rule : rules)
                for (double p : ps) {
                    SweepCell c;
                    c.sigma = s;
                    c.m = m;
                    c.rule = rule;
                    c.p = p;
                    cells.push_back(c);
                }

    const auto dir = cmd_detail::ensure_out_dir(cfg);
    std::filesystem::create_directories(dir / "sweep");

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            SweepCell& c = cells[i];
            try {
                LabConfig cell_cfg = cfg;
                cell_cfg.sigma = c.sigma;
                cell_cfg.m = c.m;
                cell_cfg.channel_m = c.m;
                cell_cfg.channel_p = c.p;
                cell_cfg.trigger.rule = trigger_rule_from_string(c.rule);
                const CertifiedSetup setup = build_setup(cell_cfg);
                c.constants = setup.constants;
                const TrajectoryLog log = run(build_sim_config(cell_cfg, setup));
                c.stats = transmission_stats(log);
                const VerificationReport rep =
                    run_standard_checks(log, setup.bundle.model, setup.constants);
                c.verified = rep.pass();
                c.worst_margin = -std::numeric_limits<double>::infinity();
                for (const CheckResult& chk : rep.checks)
                    if (chk.worst_margin - chk.tolerance > c.worst_margin) {
                        c.worst_margin = chk.worst_margin;
                        c.worst_check = chk.name;
                    }
                cmd_detail::write_manifest(
                    dir / "sweep" / ("cell_" + std::to_string(i) + "_manifest.json"), cell_cfg,
                    "sweep", {});
            } catch (const Error& e) {
                c.error = e.what();
            }
        }
    };
    const int pool = std::min<int>(sweep_thread_cap(), static_cast<int>(cells.size()));
    std::vector<std::thread> threads;
    for (int i = 0; i < std::max(1, pool); ++i) threads.emplace_back(worker);
    for (std::thread& th : threads) th.join();

    std::ostringstream os;
    os << "sigma,m,rule,p,h_sigma_masp,h,sends,successes,mean_gap,median_gap,verified,"
          "worst_check,worst_margin,error\n";
    for (const SweepCell& c : cells) {
        os << fmt_real(c.sigma) << ',' << c.m << ',' << c.rule << ',' << fmt_real(c.p) << ','
           << fmt_real(c.constants.h_sigma_masp) << ',' << fmt_real(c.constants.h) << ','
           << c.stats.sends << ',' << c.stats.successes << ',' << fmt_real(c.stats.mean_gap)
           << ',' << fmt_real(c.stats.median_gap) << ',' << (c.verified ? 1 : 0) << ','
           << c.worst_check << ',' << fmt_real(c.worst_margin) << ',' << c.error << "\n";
    }
    const auto csv = dir / (cfg.prefix + "_sweep.csv");
    cmd_detail::write_file(csv, os.str());
    cmd_detail::write_manifest(dir / (cfg.prefix + "_sweep_manifest.json"), cfg, "sweep",
                               {csv.string()});
    if (!opt.quiet) std::cout << os.str();
    return cells;
}

}  // namespace petc
