#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hedge/errors.hpp"
#include "hedge/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--out", args.out_dir, "output directory (overrides output_dir)");
}

int run(const CommonArgs& args, void (*body)(const hedge::ExperimentConfig&, const std::filesystem::path&)) {
    try {
        hedge::ExperimentConfig config = hedge::ExperimentConfig::load(args.config_path);
        if (args.seed) {
            config.seed = *args.seed;
            config.training.seed = *args.seed;
        }
        const std::filesystem::path out = args.out_dir.empty() ? config.output_dir : args.out_dir;
        body(config, out);
        return kExitOk;
    } catch (const hedge::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const hedge::NumericError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumeric;
    } catch (const hedge::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-averse hedging engine: synthetic data, tabular Bellman solvers and "
                 "actor-critic training"};
    app.require_subcommand(1);

    CommonArgs generate_args, solve_args, train_args, eval_args, compare_args;

    CLI::App* generate = app.add_subcommand("generate", "write a synthetic historic dataset");
    add_common(generate, generate_args);
    CLI::App* solve = app.add_subcommand("solve-tabular", "solve the Bellman fixed point exactly");
    add_common(solve, solve_args);
    CLI::App* train_cmd = app.add_subcommand("train", "train the actor-critic model");
    add_common(train_cmd, train_args);
    CLI::App* evaluate = app.add_subcommand("evaluate", "roll the trained policy out of sample");
    add_common(evaluate, eval_args);
    CLI::App* compare = app.add_subcommand("compare-operators",
                                           "solve the mark-to-market and cash operators side by side");
    add_common(compare, compare_args);

    CLI11_PARSE(app, argc, argv);

    if (generate->parsed())
        return run(generate_args, hedge::run_generate);
    if (solve->parsed())
        return run(solve_args, hedge::run_solve_tabular);
    if (train_cmd->parsed())
        return run(train_args, hedge::run_train);
    if (evaluate->parsed())
        return run(eval_args, hedge::run_evaluate);
    if (compare->parsed())
        return run(compare_args, hedge::run_compare_operators);
    return kExitValidation;
}
