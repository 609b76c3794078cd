#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "petc/certify.hpp"
#include "petc/channel.hpp"
#include "petc/errors.hpp"
#include "petc/toml.hpp"
#include "petc/trigger.hpp"
#include "petc/vec.hpp"

namespace petc {

/// Parsed and range-checked configuration file. Sections map one-to-one to
/// the library's inputs; values not present fall back to the documented
/// defaults, and keys required by a command are checked by that command.
struct LabConfig {
    // [model]
    std::string preset;

    // [certify]
    double sigma = 0.0;
    int m = 0;
    EstimationConfig estimation;
    ConstantOverrides overrides;

    // [trigger]
    TriggerParams trigger;

    // [channel]
    ChannelMode channel_mode = ChannelMode::Bernoulli;
    double channel_p = 0.5;
    std::uint64_t channel_seed = 1;
    std::string channel_trace_path;
    int channel_m = 0;

    // [engine]
    std::optional<Vec> x0;
    std::optional<double> horizon;
    int substeps = 1;
    std::optional<double> h_override;  // diagnostic: replace the certified h

    // [sweep]
    std::vector<double> sweep_sigma;
    std::vector<int> sweep_m;
    std::vector<std::string> sweep_rules;
    std::vector<double> sweep_p;

    // [output]
    std::string out_dir = "out";
    std::string prefix = "run";

    std::string raw;   // config bytes, hashed into the manifest
    std::string path;

    Vec require_x0() const {
        if (!x0) throw ConfigError("missing config key engine.x0");
        return *x0;
    }
    double require_horizon() const {
        if (!horizon) throw ConfigError("missing config key engine.horizon");
        return *horizon;
    }
};

namespace config_detail {

inline Vec as_vec(const TomlValue& v, const std::string& where) {
    Vec out;
    for (const TomlValue& e : v.as_array(where)) out.push_back(e.as_double(where));
    return out;
}

inline std::vector<std::int64_t> as_int_vec(const TomlValue& v, const std::string& where) {
    std::vector<std::int64_t> out;
    for (const TomlValue& e : v.as_array(where)) out.push_back(e.as_int(where));
    return out;
}

}  // namespace config_detail

inline LabConfig parse_config(const std::string& text, const std::string& path = "") {
    using config_detail::as_int_vec;
    using config_detail::as_vec;
    const TomlDocument doc = parse_toml(text);
    LabConfig cfg;
    cfg.raw = text;
    cfg.path = path;

    cfg.preset = doc.get("model", "preset").as_string("model.preset");

    cfg.sigma = doc.get("certify", "sigma").as_double("certify.sigma");
    if (!(cfg.sigma > 0.0 && cfg.sigma < 1.0)) throw ConfigError("certify.sigma must lie in (0, 1)");
    const std::int64_t m = doc.get("certify", "m").as_int("certify.m");
    if (m < 0) throw ConfigError("certify.m must be nonnegative");
    cfg.m = static_cast<int>(m);
    if (doc.has("certify", "samples")) {
        const std::int64_t s = doc.get("certify", "samples").as_int("certify.samples");
        if (s < 2) throw ConfigError("certify.samples must be >= 2");
        cfg.estimation.samples = static_cast<std::size_t>(s);
    }
    if (doc.has("certify", "seed"))
        cfg.estimation.seed =
            static_cast<std::uint64_t>(doc.get("certify", "seed").as_int("certify.seed"));
    if (doc.has("certify", "safety_factor")) {
        cfg.estimation.safety_factor =
            doc.get("certify", "safety_factor").as_double("certify.safety_factor");
        if (cfg.estimation.safety_factor < 1.0)
            throw ConfigError("certify.safety_factor must be >= 1");
    }
    if (doc.has("certify", "grid_density")) {
        const std::int64_t d = doc.get("certify", "grid_density").as_int("certify.grid_density");
        if (d < 2) throw ConfigError("certify.grid_density must be >= 2");
        cfg.estimation.grid_density = static_cast<int>(d);
    }
    if (doc.has("certify", "excluded_level_fraction")) {
        cfg.estimation.excluded_level_fraction =
            doc.get("certify", "excluded_level_fraction")
                .as_double("certify.excluded_level_fraction");
        if (cfg.estimation.excluded_level_fraction <= 0.0 ||
            cfg.estimation.excluded_level_fraction >= 1.0)
            throw ConfigError("certify.excluded_level_fraction must lie in (0, 1)");
    }
    if (doc.has("certify", "L1c")) cfg.overrides.L1c = doc.get("certify", "L1c").as_double("certify.L1c");
    if (doc.has("certify", "L2c")) cfg.overrides.L2c = doc.get("certify", "L2c").as_double("certify.L2c");
    if (doc.has("certify", "M_max_c"))
        cfg.overrides.M_max_c = doc.get("certify", "M_max_c").as_double("certify.M_max_c");
    if (doc.has("certify", "mu_c")) cfg.overrides.mu_c = doc.get("certify", "mu_c").as_double("certify.mu_c");

    if (doc.has("trigger", "rule"))
        cfg.trigger.rule = trigger_rule_from_string(doc.get("trigger", "rule").as_string("trigger.rule"));
    if (doc.has("trigger", "nu")) {
        const std::int64_t nu = doc.get("trigger", "nu").as_int("trigger.nu");
        if (nu < 1) throw ConfigError("trigger.nu must be >= 1");
        cfg.trigger.nu = nu;
    }
    if (doc.has("trigger", "K")) {
        cfg.trigger.exp_rate = doc.get("trigger", "K").as_double("trigger.K");
        if (cfg.trigger.exp_rate <= 0.0) throw ConfigError("trigger.K must be positive");
    }
    if (doc.has("trigger", "cn_breaks") || doc.has("trigger", "cn_values")) {
        cfg.trigger.cn.breaks = as_int_vec(doc.get("trigger", "cn_breaks"), "trigger.cn_breaks");
        CnSchedule& cn = cfg.trigger.cn;
        cn.values.clear();
        for (const TomlValue& e : doc.get("trigger", "cn_values").as_array("trigger.cn_values"))
            cn.values.push_back(e.as_double("trigger.cn_values"));
        cn.validate();
    }

    cfg.channel_m = cfg.m;  // default: certified loss bound
    if (doc.has("channel", "mode"))
        cfg.channel_mode =
            channel_mode_from_string(doc.get("channel", "mode").as_string("channel.mode"));
    if (doc.has("channel", "p")) {
        cfg.channel_p = doc.get("channel", "p").as_double("channel.p");
        if (cfg.channel_p < 0.0 || cfg.channel_p > 1.0)
            throw ConfigError("channel.p must lie in [0, 1]");
    }
    if (doc.has("channel", "seed"))
        cfg.channel_seed =
            static_cast<std::uint64_t>(doc.get("channel", "seed").as_int("channel.seed"));
    if (doc.has("channel", "trace_path"))
        cfg.channel_trace_path = doc.get("channel", "trace_path").as_string("channel.trace_path");
    if (doc.has("channel", "m")) {
        const std::int64_t cm = doc.get("channel", "m").as_int("channel.m");
        if (cm < 0) throw ConfigError("channel.m must be nonnegative");
        cfg.channel_m = static_cast<int>(cm);
    }

    if (doc.has("engine", "x0")) cfg.x0 = as_vec(doc.get("engine", "x0"), "engine.x0");
    if (doc.has("engine", "horizon")) {
        cfg.horizon = doc.get("engine", "horizon").as_double("engine.horizon");
        if (*cfg.horizon <= 0.0) throw ConfigError("engine.horizon must be positive");
    }
    if (doc.has("engine", "substeps")) {
        const std::int64_t s = doc.get("engine", "substeps").as_int("engine.substeps");
        if (s < 1) throw ConfigError("engine.substeps must be >= 1");
        cfg.substeps = static_cast<int>(s);
    }
    if (doc.has("engine", "h_override")) {
        cfg.h_override = doc.get("engine", "h_override").as_double("engine.h_override");
        if (*cfg.h_override <= 0.0) throw ConfigError("engine.h_override must be positive");
    }

    if (doc.has("sweep", "sigma"))
        for (const TomlValue& e : doc.get("sweep", "sigma").as_array("sweep.sigma"))
            cfg.sweep_sigma.push_back(e.as_double("sweep.sigma"));
    if (doc.has("sweep", "m"))
        for (const TomlValue& e : doc.get("sweep", "m").as_array("sweep.m"))
            cfg.sweep_m.push_back(static_cast<int>(e.as_int("sweep.m")));
    if (doc.has("sweep", "rules"))
        for (const TomlValue& e : doc.get("sweep", "rules").as_array("sweep.rules"))
            cfg.sweep_rules.push_back(e.as_string("sweep.rules"));
    if (doc.has("sweep", "p"))
        for (const TomlValue& e : doc.get("sweep", "p").as_array("sweep.p"))
            cfg.sweep_p.push_back(e.as_double("sweep.p"));

    if (doc.has("output", "dir")) cfg.out_dir = doc.get("output", "dir").as_string("output.dir");
    if (doc.has("output", "prefix"))
        cfg.prefix = doc.get("output", "prefix").as_string("output.prefix");

    return cfg;
}

inline LabConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

/// Builds the channel described by the config.
inline ChannelModel make_channel(const LabConfig& cfg) {
    switch (cfg.channel_mode) {
        case ChannelMode::AlwaysDeliver: return ChannelModel::always_deliver(cfg.channel_m);
        case ChannelMode::Bernoulli:
            return ChannelModel::bernoulli(cfg.channel_p, cfg.channel_seed, cfg.channel_m);
        case ChannelMode::Trace:
            if (cfg.channel_trace_path.empty())
                throw ConfigError("missing config key channel.trace_path");
            return ChannelModel::from_trace_file(cfg.channel_trace_path, cfg.channel_m);
    }
    throw ConfigError("unreachable channel mode");
}

}  // namespace petc
