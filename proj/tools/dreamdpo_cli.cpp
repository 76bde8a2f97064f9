// Command-line front end: run / sweep-tau / ablate-pairs / baseline-sds over
// flat key=value config files. Config keys can be overridden with --set.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dreamdpo/config.hpp"
#include "dreamdpo/harness.hpp"
#include "dreamdpo/http_transport.hpp"

namespace {

constexpr const char* kEndpointEnv = "DREAMDPO_LMM_ENDPOINT";

dreamdpo::ConfigOverrides collect_overrides(const std::vector<std::string>& sets,
                                            const std::optional<std::uint64_t>& seed,
                                            const std::optional<int>& steps,
                                            const std::string& out_dir) {
    dreamdpo::ConfigOverrides ov;
    for (const auto& s : sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw dreamdpo::ConfigError("--set expects key=value, got '" + s + "'");
        }
        ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) ov.emplace_back("seed", std::to_string(*seed));
    if (steps) ov.emplace_back("steps", std::to_string(*steps));
    if (!out_dir.empty()) ov.emplace_back("output_dir", out_dir);
    return ov;
}

// HTTP transport when the endpoint environment variable is set; otherwise the
// harness falls back to the configured mock.
std::unique_ptr<dreamdpo::LmmTransport> endpoint_transport() {
    const char* ep = std::getenv(kEndpointEnv);
    if (ep == nullptr || *ep == '\0') return nullptr;
    return std::make_unique<dreamdpo::HttpTransport>(ep);
}

std::string opt_str(const std::optional<double>& v) {
    return v ? dreamdpo::csv::fmt(*v) : std::string("-");
}

void print_row(const dreamdpo::SummaryRow& row) {
    std::cout << row.config_id << ": pull_only=" << row.pull_only
              << " push_pull=" << row.push_pull << " skipped=" << row.skipped
              << " mean_s_gap=" << dreamdpo::csv::fmt(row.mean_s_gap)
              << "\n  final_avg_reward=" << opt_str(row.final_avg_reward)
              << " final_dist_to_target=" << opt_str(row.final_dist_to_target)
              << "\n  image_norm=[" << dreamdpo::csv::fmt(row.image_norm.lo) << ", "
              << dreamdpo::csv::fmt(row.image_norm.hi) << "]"
              << " wall_clock=" << row.wall_clock_seconds << "s"
              << "\n  outputs: " << row.output_dir << "\n";
}

std::vector<double> parse_tau_list(const std::string& arg) {
    std::vector<double> taus;
    std::string tok;
    std::istringstream in(arg);
    while (std::getline(in, tok, ',')) {
        if (tok == "inf") {
            taus.push_back(std::numeric_limits<double>::infinity());
        } else {
            try {
                taus.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw dreamdpo::ConfigError("--taus: bad value '" + tok + "'");
            }
            if (taus.back() < 0.0) throw dreamdpo::ConfigError("--taus: values must be >= 0");
        }
    }
    return taus;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference-guided score distillation over analytic diffusion oracles"};
    app.require_subcommand(1);

    std::string config_path, out_dir, taus_arg;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "config file (flat key=value)")->required();
        cmd->add_option("--set", sets, "override a config key (key=value, repeatable)");
        cmd->add_option("--seed", seed, "override the seed");
        cmd->add_option("--steps", steps, "override the step count");
        cmd->add_option("--out", out_dir, "override the output directory");
    };

    CLI::App* cmd_run = app.add_subcommand("run", "run one experiment");
    add_common(cmd_run);
    CLI::App* cmd_sweep = app.add_subcommand("sweep-tau", "one run per tau on a replayed stream");
    add_common(cmd_sweep);
    cmd_sweep->add_option("--taus", taus_arg, "comma-separated tau values (inf allowed)")
        ->required();
    CLI::App* cmd_ablate =
        app.add_subcommand("ablate-pairs", "compare pair strategies on a shared stream");
    add_common(cmd_ablate);
    CLI::App* cmd_sds = app.add_subcommand("baseline-sds", "run with the plain SDS gradient");
    add_common(cmd_sds);

    CLI11_PARSE(app, argc, argv);

    try {
        auto overrides = collect_overrides(sets, seed, steps, out_dir);
        if (cmd_sds->parsed()) overrides.emplace_back("mode", "sds");

        const dreamdpo::ExperimentConfig cfg = dreamdpo::parse_config_file(config_path, overrides);
        auto transport = endpoint_transport();

        if (cmd_run->parsed() || cmd_sds->parsed()) {
            print_row(dreamdpo::run_experiment(cfg, transport.get()));
        } else if (cmd_sweep->parsed()) {
            const auto taus = parse_tau_list(taus_arg);
            for (const auto& row : dreamdpo::sweep_tau(cfg, taus, transport.get())) print_row(row);
            std::cout << "sweep table: " << cfg.output_dir << "/sweep.csv\n";
        } else if (cmd_ablate->parsed()) {
            for (const auto& row : dreamdpo::ablate_pairs(cfg, transport.get())) print_row(row);
            std::cout << "ablation table: " << cfg.output_dir << "/ablate.csv\n";
        }
    } catch (const dreamdpo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
