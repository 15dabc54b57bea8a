#include "hedge/experiment.hpp"

#include <cmath>
#include <fstream>

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

namespace {

void expect_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw ValidationError(where + ": expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const auto& key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw ValidationError(where + ": unknown key '" + item.key() + "'");
    }
}

UtilityFamily utility_from_json(const nlohmann::json& j) {
    expect_keys(j, {"kind", "lambda"}, "utility");
    const UtilityKind kind = utility_kind_from_string(j.value("kind", "entropy"));
    const double lambda = j.value("lambda", 1.0);
    return UtilityFamily(kind, lambda);
}

CostSpec cost_from_json(const nlohmann::json& j) {
    expect_keys(j, {"gamma_weights", "action_bound"}, "cost");
    std::vector<double> gamma(kFeatureCount, 0.0);
    if (j.contains("gamma_weights"))
        gamma = j.at("gamma_weights").get<std::vector<double>>();
    if (static_cast<int>(gamma.size()) != kFeatureCount)
        throw ValidationError("cost.gamma_weights: expected " + std::to_string(kFeatureCount) +
                              " entries");
    return CostSpec(gamma, j.value("action_bound", 5.0));
}

OperatorKind operator_from_string(const std::string& name) {
    if (name == "mark_to_market") return OperatorKind::mark_to_market;
    if (name == "cash_plain") return OperatorKind::cash_plain;
    if (name == "cash_calendar") return OperatorKind::cash_calendar;
    throw ValidationError("solve.operator: unknown operator '" + name + "'");
}

TrainConfig training_from_json(const nlohmann::json& j, const UtilityFamily& fam,
                               const std::optional<CostSpec>& cost, std::uint64_t seed) {
    expect_keys(j,
                {"rounds", "batch_size", "actor_steps_per_round", "critic_steps_per_round",
                 "actor_lr", "critic_lr", "momentum", "entropy_closed_form", "critic_loss",
                 "sampler", "hidden"},
                "training");
    TrainConfig c;
    c.utility = fam;
    c.seed = seed;
    if (cost)
        c.cost = *cost;
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("actor_steps_per_round"))
        c.actor_steps_per_round = j.at("actor_steps_per_round").get<int>();
    if (j.contains("critic_steps_per_round"))
        c.critic_steps_per_round = j.at("critic_steps_per_round").get<int>();
    auto lr_of = [](const nlohmann::json& lj, const std::string& where) {
        expect_keys(lj, {"initial", "decay"}, where);
        LearningRate lr;
        if (lj.contains("initial")) lr.initial = lj.at("initial").get<double>();
        if (lj.contains("decay")) lr.decay = lj.at("decay").get<double>();
        return lr;
    };
    if (j.contains("actor_lr")) c.actor_lr = lr_of(j.at("actor_lr"), "training.actor_lr");
    if (j.contains("critic_lr")) c.critic_lr = lr_of(j.at("critic_lr"), "training.critic_lr");
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
    if (j.contains("entropy_closed_form"))
        c.entropy_closed_form = j.at("entropy_closed_form").get<bool>();
    if (j.contains("critic_loss"))
        c.critic_loss = critic_loss_from_string(j.at("critic_loss").get<std::string>());
    if (j.contains("sampler")) {
        expect_keys(j.at("sampler"), {"sigma_w", "historic_mass"}, "training.sampler");
        if (j.at("sampler").contains("sigma_w"))
            c.sampler.sigma_w = j.at("sampler").at("sigma_w").get<double>();
        if (j.at("sampler").contains("historic_mass"))
            c.sampler.historic_mass = j.at("sampler").at("historic_mass").get<double>();
    }
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
    c.validate();
    return c;
}

std::string format_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

} // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    expect_keys(j,
                {"seed", "output_dir", "generator", "mdp", "utility", "cost", "solve", "dataset",
                 "training", "evaluation", "compare"},
                "config");
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
    if (j.contains("mdp")) c.mdp = ChainMdpConfig::from_json(j.at("mdp"));
    if (j.contains("utility")) c.utility = utility_from_json(j.at("utility"));
    if (j.contains("cost")) c.cost = cost_from_json(j.at("cost"));
    if (j.contains("solve")) {
        const auto& s = j.at("solve");
        expect_keys(s, {"tol", "max_iter", "init", "init_seed", "operator"}, "solve");
        if (s.contains("tol")) c.solve.tol = s.at("tol").get<double>();
        if (s.contains("max_iter")) c.solve.max_iter = s.at("max_iter").get<int>();
        if (s.contains("init")) c.solve.init = s.at("init").get<std::string>();
        if (s.contains("init_seed")) c.solve.init_seed = s.at("init_seed").get<std::uint64_t>();
        if (s.contains("operator")) c.solve.op = operator_from_string(s.at("operator").get<std::string>());
        if (c.solve.init != "zeros" && c.solve.init != "random")
            throw ValidationError("solve.init: must be 'zeros' or 'random'");
        if (!(c.solve.tol > 0.0))
            throw ValidationError("solve.tol: must be > 0");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        expect_keys(d, {"dir", "source", "path_length"}, "dataset");
        if (d.contains("dir")) c.dataset.dir = d.at("dir").get<std::string>();
        if (d.contains("source")) c.dataset.source = d.at("source").get<std::string>();
        if (d.contains("path_length")) c.dataset.path_length = d.at("path_length").get<int>();
        if (!c.dataset.source.empty() && c.dataset.source != "generator" && c.dataset.source != "mdp")
            throw ValidationError("dataset.source: must be 'generator' or 'mdp'");
    }
    if (j.contains("training"))
        c.training = training_from_json(j.at("training"), c.utility, c.cost, c.seed);
    else {
        c.training.utility = c.utility;
        c.training.seed = c.seed;
        if (c.cost)
            c.training.cost = *c.cost;
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        expect_keys(e, {"episodes", "horizon", "margin"}, "evaluation");
        if (e.contains("episodes")) c.evaluation.episodes = e.at("episodes").get<int>();
        if (e.contains("horizon")) c.evaluation.horizon = e.at("horizon").get<int>();
        if (e.contains("margin")) c.evaluation.margin = e.at("margin").get<double>();
        if (c.evaluation.episodes < 1)
            throw ValidationError("evaluation.episodes: must be >= 1");
        if (c.evaluation.horizon < 1)
            throw ValidationError("evaluation.horizon: must be >= 1");
    }
    if (j.contains("compare")) {
        const auto& k = j.at("compare");
        expect_keys(k, {"vanilla_check", "vanilla_regimes", "vanilla_beta", "vanilla_bound"}, "compare");
        if (k.contains("vanilla_check")) c.compare.vanilla_check = k.at("vanilla_check").get<bool>();
        if (k.contains("vanilla_regimes")) c.compare.vanilla_regimes = k.at("vanilla_regimes").get<int>();
        if (k.contains("vanilla_beta")) c.compare.vanilla_beta = k.at("vanilla_beta").get<double>();
        if (k.contains("vanilla_bound")) c.compare.vanilla_bound = k.at("vanilla_bound").get<double>();
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: invalid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

HistoricDataset resolve_dataset(const ExperimentConfig& config) {
    if (!config.dataset.dir.empty())
        return load_dataset(config.dataset.dir);
    if (config.dataset.source == "mdp" || (config.dataset.source.empty() && config.mdp)) {
        if (!config.mdp)
            throw ValidationError("dataset.source: 'mdp' requires an mdp section");
        return make_chain_dataset(*config.mdp, config.dataset.path_length, config.seed);
    }
    if (config.dataset.source == "generator" || config.generator) {
        if (!config.generator)
            throw ValidationError("dataset.source: 'generator' requires a generator section");
        return generate_history(*config.generator, config.seed);
    }
    throw ValidationError("dataset: provide dataset.dir, a generator section or an mdp section");
}

void run_generate(const ExperimentConfig& config, const std::filesystem::path& out) {
    if (!config.generator)
        throw ValidationError("generate: config needs a generator section");
    const HistoricDataset data = generate_history(*config.generator, config.seed);
    save_dataset(data, out);
}

namespace {

std::string value_table_csv(const HedgingMdp& mdp, const ValueTable& table) {
    std::string csv = "market_state,spot,lattice_index,holding,value\n";
    for (int m = 0; m < mdp.n_market(); ++m)
        for (int z = 0; z < mdp.n_lattice(); ++z)
            csv += std::to_string(m) + "," + format_double(mdp.spots[m]) + "," + std::to_string(z) +
                   "," + format_double(mdp.lattice[z]) + "," + format_double(table.at(m, z)) + "\n";
    return csv;
}

std::string policy_csv(const HedgingMdp& mdp, const std::vector<int>& policy) {
    std::string csv = "market_state,lattice_index,holding,action_index,action\n";
    for (int m = 0; m < mdp.n_market(); ++m)
        for (int z = 0; z < mdp.n_lattice(); ++z) {
            const int a = policy[static_cast<std::size_t>(m) * mdp.n_lattice() + z];
            csv += std::to_string(m) + "," + std::to_string(z) + "," +
                   format_double(mdp.lattice[z]) + "," + std::to_string(a) + "," +
                   format_double(mdp.actions[a]) + "\n";
        }
    return csv;
}

std::string residuals_csv(const std::vector<double>& residuals) {
    std::string csv = "iteration,residual\n";
    for (std::size_t i = 0; i < residuals.size(); ++i)
        csv += std::to_string(i + 1) + "," + format_double(residuals[i]) + "\n";
    return csv;
}

} // namespace

void run_solve_tabular(const ExperimentConfig& config, const std::filesystem::path& out) {
    if (!config.mdp)
        throw ValidationError("solve-tabular: config needs an mdp section");
    const HedgingMdp mdp = build_chain_mdp(*config.mdp);

    ValueTable f0 = ValueTable::zeros(mdp.n_market(), mdp.n_lattice());
    if (config.solve.init == "random")
        f0 = ValueTable::uniform_random(mdp.n_market(), mdp.n_lattice(), -5.0, 5.0,
                                        config.solve.init_seed ? config.solve.init_seed : config.seed);

    const auto result =
        value_iterate(mdp, config.utility, config.solve.op, f0, config.solve.tol, config.solve.max_iter);
    const auto policy = greedy_policy(mdp, config.utility, result.table, config.solve.op);

    double max_ratio = 0.0;
    for (std::size_t i = 1; i + 1 < result.residuals.size(); ++i)
        if (result.residuals[i] > 1e-12)
            max_ratio = std::max(max_ratio, result.residuals[i + 1] / result.residuals[i]);

    const auto axioms = check_axioms(config.utility, 200, config.seed);

    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec)
        throw IoError("cannot create output directory: " + out.string());
    write_file_atomic(out / "value_table.csv", value_table_csv(mdp, result.table));
    write_file_atomic(out / "policy.csv", policy_csv(mdp, policy));
    write_file_atomic(out / "residuals.csv", residuals_csv(result.residuals));

    const nlohmann::json report{
        {"converged", result.converged},
        {"iterations", result.iterations},
        {"final_residual", result.residuals.empty() ? 0.0 : result.residuals.back()},
        {"max_residual_ratio", max_ratio},
        {"beta_star", mdp.beta_star},
        {"utility_axioms", axioms.to_json()},
    };
    write_file_atomic(out / "report.json", format_json(report));

    if (!result.converged)
        throw NumericError("solve-tabular: value iteration did not converge (report written)");
}

void run_train(const ExperimentConfig& config, const std::filesystem::path& out) {
    const HistoricDataset data = resolve_dataset(config);
    const TrainResult result = train(data, config.training);

    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec)
        throw IoError("cannot create output directory: " + out.string());
    write_file_atomic(out / "model.json", format_json(result.model.to_json()));
    write_file_atomic(out / "curves.csv", result.curves.to_csv());

    nlohmann::json report{
        {"rounds", result.model.rounds_trained},
        {"final_actor_objective",
         result.curves.actor_objective.empty() ? 0.0 : result.curves.actor_objective.back()},
        {"final_critic_loss",
         result.curves.critic_loss.empty() ? 0.0 : result.curves.critic_loss.back()},
    };

    // when the dataset came from a chain instance the exact solution is
    // available; report the sup-norm gap against it on the lattice
    if (config.mdp) {
        const HedgingMdp mdp = build_chain_mdp(*config.mdp);
        const auto oracle =
            value_iterate(mdp, config.utility, OperatorKind::mark_to_market,
                          ValueTable::zeros(mdp.n_market(), mdp.n_lattice()), 1e-9);
        const auto book_values = chain_claim_values(*config.mdp);
        ChainMdpConfig hedge_cfg = *config.mdp;
        if (!config.mdp->hedge_payout.empty())
            hedge_cfg.payout = config.mdp->hedge_payout;
        const auto hedge_values = chain_claim_values(hedge_cfg);
        const auto payouts = [&] {
            if (!config.mdp->payout.empty())
                return config.mdp->payout;
            std::vector<double> g(config.mdp->spots.size());
            for (std::size_t m = 0; m < g.size(); ++m)
                g[m] = config.mdp->payout_scale * config.mdp->spots[m] / 100.0;
            return g;
        }();
        const auto hedge_pay = config.mdp->hedge_payout.empty() ? payouts : config.mdp->hedge_payout;

        double sup_gap = 0.0;
        double sup_value = 0.0;
        for (int m = 0; m < mdp.n_market(); ++m)
            for (int z = 0; z < mdp.n_lattice(); ++z) {
                const double q = mdp.lattice[z];
                std::vector<double> zf = {
                    config.mdp->base_weight * book_values[m] + q * hedge_values[m],
                    config.mdp->base_weight * payouts[m] + q * hedge_pay[m], 0.0, 0.0, 0.0};
                const double nn = result.model.value(zf, {mdp.spots[m]});
                sup_gap = std::max(sup_gap, std::abs(nn - oracle.table.at(m, z)));
                sup_value = std::max(sup_value, std::abs(oracle.table.at(m, z)));
            }
        report["oracle_sup_gap"] = sup_gap;
        report["oracle_sup_value"] = sup_value;
    }
    write_file_atomic(out / "report.json", format_json(report));
}

void run_evaluate(const ExperimentConfig& config, const std::filesystem::path& out) {
    const std::filesystem::path model_path = out / "model.json";
    std::ifstream in(model_path);
    if (!in)
        throw IoError("evaluate: cannot open " + model_path.string() +
                      " (run the train command into the same output directory first)");
    nlohmann::json mj;
    in >> mj;
    const TrainedModel model = TrainedModel::from_json(mj);

    EpisodeSource world;
    if (config.mdp) {
        const ChainMdpConfig chain = *config.mdp;
        const int horizon = config.evaluation.horizon;
        world = [chain, horizon](std::uint64_t seed) {
            return make_chain_dataset(chain, horizon + 1, seed);
        };
    } else if (config.generator) {
        GeneratorConfig gen = *config.generator;
        gen.path_length = config.evaluation.horizon + 1;
        world = [gen](std::uint64_t seed) { return generate_history(gen, seed); };
    } else {
        throw ValidationError("evaluate: config needs an mdp or generator section");
    }

    const CostSpec cost = config.cost ? *config.cost : config.training.cost;
    const auto report =
        evaluate(model, world, config.utility, cost, config.evaluation.episodes, config.seed);

    nlohmann::json j = report.to_json();
    j["margin"] = config.evaluation.margin;
    j["beats_baseline_by_margin"] =
        report.policy_utility > report.baseline_utility + config.evaluation.margin;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    write_file_atomic(out / "eval_report.json", format_json(j));
}

void run_compare_operators(const ExperimentConfig& config, const std::filesystem::path& out) {
    if (!config.mdp)
        throw ValidationError("compare-operators: config needs an mdp section");
    const HedgingMdp mdp = build_chain_mdp(*config.mdp);
    const ValueTable zeros = ValueTable::zeros(mdp.n_market(), mdp.n_lattice());

    nlohmann::json report;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec)
        throw IoError("cannot create output directory: " + out.string());

    const UtilityFamily families[] = {
        UtilityFamily(UtilityKind::expectation, 1.0),
        UtilityFamily(UtilityKind::entropy, config.utility.lambda),
        UtilityFamily(UtilityKind::cvar, config.utility.lambda),
    };
    bool all_converged = true;
    for (const auto& fam : families) {
        const auto mark = value_iterate(mdp, fam, OperatorKind::mark_to_market, zeros, config.solve.tol);
        const auto cash = value_iterate(mdp, fam, OperatorKind::cash_calendar, zeros, config.solve.tol);
        all_converged = all_converged && mark.converged && cash.converged;

        // the book-value transform of the remark: cash fixed point vs V* + B
        double gap = 0.0;
        for (int m = 0; m < mdp.n_market(); ++m)
            for (int z = 0; z < mdp.n_lattice(); ++z)
                gap = std::max(gap, std::abs(cash.table.at(m, z) - mark.table.at(m, z) -
                                             mdp.book_value(m, z)));

        const std::string name = to_string(fam.kind);
        report[name] = {
            {"mark_iterations", mark.iterations},
            {"cash_iterations", cash.iterations},
            {"converged", mark.converged && cash.converged},
            {"book_transform_gap", gap},
        };
        write_file_atomic(out / ("value_mark_" + name + ".csv"), value_table_csv(mdp, mark.table));
        write_file_atomic(out / ("value_cash_" + name + ".csv"), value_table_csv(mdp, cash.table));
    }

    if (config.compare.vanilla_check) {
        // layered finite-book instance: the stationary cash fixed point must
        // match direct backward evaluation of the total discounted cashflows
        LayeredMdpConfig layered;
        layered.regimes = config.compare.vanilla_regimes;
        layered.beta = config.compare.vanilla_beta;
        layered.truncation_bound = config.compare.vanilla_bound;
        const HedgingMdp vmdp = make_layered_vanilla_mdp(layered);
        const UtilityFamily entropy(UtilityKind::entropy, 1.0);
        const auto fix = value_iterate(vmdp, entropy, OperatorKind::cash_calendar,
                                       ValueTable::zeros(vmdp.n_market(), vmdp.n_lattice()), 1e-9);

        // independent route: layer-by-layer backward recursion on raw tensors
        const int k = vmdp.n_market();
        const int p = vmdp.n_lattice();
        ValueTable direct = ValueTable::zeros(k, p);
        for (int sweep = 0; sweep < k; ++sweep) {
            const int s = k - 1 - sweep;
            for (int z = 0; z < p; ++z) {
                const double lam_eff = vmdp.calendar_discount[s];
                double best = -1e300;
                for (int a = 0; a < vmdp.n_actions(); ++a) {
                    const int zn = vmdp.succ(z, a);
                    double acc = 0.0;
                    bool absorbing = false;
                    for (int sn = 0; sn < k; ++sn) {
                        const double prob = vmdp.transition[s][sn];
                        if (prob == 0.0)
                            continue;
                        if (sn == s) {
                            absorbing = true;
                            continue;
                        }
                        acc += prob * std::exp(-lam_eff * (vmdp.rc(a, z, s, sn) +
                                                           vmdp.beta[s] * direct.at(sn, zn)));
                    }
                    const double v = absorbing ? 0.0 : -std::log(acc) / lam_eff;
                    if (v > best)
                        best = v;
                }
                direct.at(s, z) = best;
            }
        }
        const double gap = sup_norm_diff(fix.table, direct);
        report["vanilla_check"] = {
            {"converged", fix.converged},
            {"iterations", fix.iterations},
            {"market_states", k},
            {"gap", gap},
            {"passed", fix.converged && gap < 1e-3},
        };
        all_converged = all_converged && fix.converged;
    }

    write_file_atomic(out / "compare_report.json", format_json(report));
    if (!all_converged)
        throw NumericError("compare-operators: a value iteration did not converge (report written)");
}

} // namespace hedge
