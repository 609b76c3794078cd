// Command-line front end: certification, simulation, verification, baseline
// comparison and parameter sweeps for event-triggered control loops.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "petc/commands.hpp"

namespace {

struct Cli {
    std::string config_path;
    std::string log_path;
    std::string out_dir;
    bool out_set = false;
    std::int64_t seed = -1;
    bool quiet = false;

    petc::RunOptions options() const {
        petc::RunOptions opt;
        if (out_set) opt.out_dir = out_dir;
        if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
        opt.quiet = quiet;
        return opt;
    }
};

void add_common(CLI::App* cmd, Cli& cli, bool with_log) {
    if (with_log)
        cmd->add_option("log", cli.log_path, "trajectory CSV to verify")->required();
    cmd->add_option("--config", cli.config_path, "TOML configuration file")->required();
    cmd->add_option("--out", cli.out_dir, "output directory (overrides [output].dir)")
        ->each([&cli](const std::string&) { cli.out_set = true; });
    cmd->add_option("--seed", cli.seed, "override certify and channel seeds");
    cmd->add_flag("--quiet", cli.quiet, "suppress stdout reports");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sampling-period certification and event-triggered control simulation"};
    app.require_subcommand(1);

    Cli cli;
    CLI::App* certify = app.add_subcommand("certify", "estimate constants and bound the sampling period");
    CLI::App* simulate = app.add_subcommand("simulate", "run the closed loop and log the trajectory");
    CLI::App* verify = app.add_subcommand("verify", "run post-hoc checks on a trajectory log");
    CLI::App* compare = app.add_subcommand("compare", "compare against the periodic baseline");
    CLI::App* sweep = app.add_subcommand("sweep", "cartesian parameter sweep");
    add_common(certify, cli, false);
    add_common(simulate, cli, false);
    add_common(verify, cli, true);
    add_common(compare, cli, false);
    add_common(sweep, cli, false);

    CLI11_PARSE(app, argc, argv);

    try {
        const petc::LabConfig cfg = petc::load_config(cli.config_path);
        const petc::RunOptions opt = cli.options();
        if (certify->parsed()) {
            petc::cmd_certify(cfg, opt);
        } else if (simulate->parsed()) {
            petc::cmd_simulate(cfg, opt);
        } else if (verify->parsed()) {
            const petc::VerificationReport report = petc::cmd_verify(cli.log_path, cfg, opt);
            return report.pass() ? 0 : 1;
        } else if (compare->parsed()) {
            petc::cmd_compare(cfg, opt);
        } else if (sweep->parsed()) {
            petc::cmd_sweep(cfg, opt);
        }
        return 0;
    } catch (const petc::ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return 2;
    } catch (const petc::TraceError& e) {
        std::cerr << "TraceError: " << e.what() << "\n";
        return 2;
    } catch (const petc::ParseError& e) {
        std::cerr << "ParseError: " << e.what() << "\n";
        return 2;
    } catch (const petc::PreconditionError& e) {
        std::cerr << "PreconditionError: " << e.what() << "\n";
        return 2;
    } catch (const petc::AssumptionViolation& e) {
        std::cerr << "AssumptionViolation: " << e.what() << "\n";
        return 3;
    } catch (const petc::ProtocolViolation& e) {
        std::cerr << "ProtocolViolation: " << e.what() << "\n";
        return 3;
    } catch (const petc::DomainError& e) {
        std::cerr << "DomainError: " << e.what() << "\n";
        return 3;
    } catch (const petc::VerificationFailure& e) {
        std::cerr << "VerificationFailure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 70;
    }
}
