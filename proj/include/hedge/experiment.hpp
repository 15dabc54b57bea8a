#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "hedge/actor_critic.hpp"
#include "hedge/bellman.hpp"
#include "hedge/dataset.hpp"
#include "hedge/dynamics.hpp"
#include "hedge/market.hpp"
#include "hedge/utility.hpp"

namespace hedge {

// Config-driven experiment runner backing the CLI. All sections are
// schema-validated up front; unknown keys are rejected.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    std::optional<GeneratorConfig> generator;
    std::optional<ChainMdpConfig> mdp;

    UtilityFamily utility{UtilityKind::entropy, 1.0};
    std::optional<CostSpec> cost;

    struct Solve {
        double tol = 1e-8;
        int max_iter = 0;
        std::string init = "zeros"; // zeros | random
        std::uint64_t init_seed = 0;
        OperatorKind op = OperatorKind::mark_to_market;
    } solve;

    struct Dataset {
        std::string dir;           // load an existing dataset directory
        std::string source;        // "generator" | "mdp" to synthesize inline
        int path_length = 5000;
    } dataset;

    TrainConfig training;

    struct Evaluation {
        int episodes = 200;
        int horizon = 40;
        double margin = 0.0; // trained policy must beat the baseline by this
    } evaluation;

    struct Compare {
        bool vanilla_check = false;
        int vanilla_regimes = 2;
        double vanilla_beta = 0.9;
        double vanilla_bound = 1e-4;
    } compare;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
};

// Command bodies shared by the CLI and tests. Each writes its artifacts
// into `out` atomically and deterministically.
void run_generate(const ExperimentConfig& config, const std::filesystem::path& out);
void run_solve_tabular(const ExperimentConfig& config, const std::filesystem::path& out);
void run_train(const ExperimentConfig& config, const std::filesystem::path& out);
void run_evaluate(const ExperimentConfig& config, const std::filesystem::path& out);
void run_compare_operators(const ExperimentConfig& config, const std::filesystem::path& out);

// The dataset a config describes (loaded or synthesized).
HistoricDataset resolve_dataset(const ExperimentConfig& config);

} // namespace hedge
