// Batch front end: `stacklq run <config.json>` loads a JSON config,
// dispatches to the chosen mode, and writes CSV/JSON artifacts.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "stacklq/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"stacklq: Stackelberg LQ game solver and verifier"};
    app.require_subcommand(1);

    CLI::App* runcmd = app.add_subcommand("run", "solve, simulate and verify one config");
    std::string config_path;
    std::string output_dir;
    int threads = 0;
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    runcmd->add_option("config", config_path, "JSON config file")->required();
    runcmd->add_option("--output-dir", output_dir, "directory for the artifact files");
    runcmd->add_option("--threads", threads, "worker threads for path simulation");
    runcmd
        ->add_option_function<std::uint64_t>(
            "--seed-override",
            [&](const std::uint64_t& v) {
                seed_override = v;
                has_seed_override = true;
            },
            "replace the config's RNG seed")
        ->expected(1);

    CLI11_PARSE(app, argc, argv);

    try {
        stacklq::RunConfig cfg = stacklq::parse_config_file(config_path);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (has_seed_override) cfg.seed = seed_override;
        if (threads > 0) {
            cfg.threads = threads;
        } else if (const char* env = std::getenv("STACKLQ_THREADS")) {
            cfg.threads = std::max(1, std::atoi(env));
        }
        return stacklq::run(cfg);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}
