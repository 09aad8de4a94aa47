// chernoff-kit: configuration-driven Chernoff-approximation experiments.
//
//   chernoff-kit run <config.toml> [--out DIR] [--seed S] [--threads K] [--snapshots]
//   chernoff-kit list-presets
//
// Exit codes: 0 success, 1 numerical failure, 2 config validation failure.
// The CHERNOFF_KIT_OUT environment variable overrides --out.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chernoff/config.hpp"
#include "chernoff/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Chernoff approximation experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    chernoff::runner::RunOptions opts;

    CLI::App* run_cmd = app.add_subcommand("run", "run the experiments described by a TOML config");
    run_cmd->add_option("config", config_path, "path to the experiment config")->required();
    run_cmd->add_option("--out", opts.out_dir, "output directory (default: current directory)");
    run_cmd->add_option("--seed", opts.seed, "seed recorded in report metadata");
    run_cmd->add_option("--threads", opts.threads, "worker threads for independent study cells")
        ->check(CLI::Range(1, 256));
    run_cmd->add_flag("--snapshots", opts.snapshots, "write per-n solution snapshots as CSV");

    CLI::App* list_cmd = app.add_subcommand("list-presets", "list the bundled experiment presets");

    CLI11_PARSE(app, argc, argv);

    if (list_cmd->parsed()) {
        std::cout << chernoff::config::list_presets_text();
        return 0;
    }

    if (const char* env_out = std::getenv("CHERNOFF_KIT_OUT"); env_out && *env_out) opts.out_dir = env_out;

    chernoff::config::ParsedConfig cfg;
    try {
        cfg = chernoff::config::parse_config_file(config_path);
    } catch (const chernoff::config::ConfigError& e) {
        std::cerr << config_path << ":" << e.line << ": " << e.what() << "\n";
        return 2;
    } catch (const chernoff::toml::ParseError& e) {
        std::cerr << config_path << ":" << e.line << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return 2;
    }

    try {
        chernoff::runner::run(cfg, opts);
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << opts.out_dir << "/results.csv and report.json\n";
    return 0;
}
