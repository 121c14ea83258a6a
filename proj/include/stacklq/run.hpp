#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stacklq/game_model.hpp"
#include "stacklq/principal_agent.hpp"

namespace stacklq {

// One batch run: load a config, dispatch on the mode, write CSV/JSON
// artifacts into output_dir.
struct RunConfig {
    std::string mode;  // "cid" | "general" | "principal_agent"
    TimeGrid grid{1.0, 200};
    std::optional<CidSpec> cid;
    std::optional<GameSpec> general;
    std::optional<PaParams> pa;

    int n_paths = 1000;
    std::uint64_t seed = 1;
    int export_paths = 100;  // cap on rows written to paths.csv

    bool run_perturbation = false;
    std::vector<double> epsilons{-0.04, -0.02, 0.02, 0.04};
    int perturb_paths = 20000;
    double perturb_scale = 1.0;

    std::string output_dir = ".";
    int threads = 1;
};

// Throws std::runtime_error with a parse/validation message on bad input.
RunConfig parse_config_file(const std::string& path);

// Exit status: 0 success, 2 validation error, 3 assumption violation,
// 4 blow-up.
int run(const RunConfig& config);

// Shortest round-trip decimal representation (byte-stable across runs).
std::string format_double(double v);

}  // namespace stacklq
