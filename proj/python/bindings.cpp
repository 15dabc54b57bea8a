#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "hedge/actor_critic.hpp"
#include "hedge/bellman.hpp"
#include "hedge/dataset.hpp"
#include "hedge/experiment.hpp"
#include "hedge/market.hpp"
#include "hedge/errors.hpp"
#include "hedge/utility.hpp"

namespace py = pybind11;
using namespace hedge;

namespace {

UtilityFamily make_family(const std::string& kind, double lambda) {
    return UtilityFamily(utility_kind_from_string(kind), lambda);
}

py::dict json_to_dict(const nlohmann::json& j) {
    const py::object loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

nlohmann::json dict_to_json(const py::object& obj) {
    const py::object dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

} // namespace

PYBIND11_MODULE(pyhedge, m) {
    m.doc() = "risk-averse hedging engine: OCE utilities, tabular Bellman solvers, "
              "synthetic market data and actor-critic training";

    // pricing oracle
    m.def(
        "black_scholes_price",
        [](bool call, double spot, double strike, double vol, double rate, double tau) {
            return black_scholes::price(call, spot, strike, vol, rate, tau);
        },
        py::arg("call"), py::arg("spot"), py::arg("strike"), py::arg("vol"), py::arg("rate"),
        py::arg("tau"));
    m.def(
        "black_scholes_delta",
        [](bool call, double spot, double strike, double vol, double rate, double tau) {
            return black_scholes::delta(call, spot, strike, vol, rate, tau);
        },
        py::arg("call"), py::arg("spot"), py::arg("strike"), py::arg("vol"), py::arg("rate"),
        py::arg("tau"));

    // OCE utilities
    m.def(
        "u_eval",
        [](const std::string& kind, double lambda, double x) {
            return u_eval(make_family(kind, lambda), x);
        },
        py::arg("kind"), py::arg("lambda_"), py::arg("x"));
    m.def(
        "oce_value",
        [](const std::string& kind, double lambda, const std::vector<double>& outcomes,
           const std::vector<double>& probabilities) {
            const auto r = oce_value(make_family(kind, lambda),
                                     EmpiricalDistribution(outcomes, probabilities));
            return py::make_tuple(r.value, r.y_star);
        },
        py::arg("kind"), py::arg("lambda_"), py::arg("outcomes"), py::arg("probabilities"));
    m.def(
        "entropy_certainty_equivalent",
        [](double lambda, const std::vector<double>& outcomes,
           const std::vector<double>& probabilities) {
            return entropy_closed_form(lambda, EmpiricalDistribution(outcomes, probabilities));
        },
        py::arg("lambda_"), py::arg("outcomes"), py::arg("probabilities"));
    m.def(
        "check_axioms",
        [](const std::string& kind, double lambda, int trials, std::uint64_t seed) {
            return json_to_dict(check_axioms(make_family(kind, lambda), trials, seed).to_json());
        },
        py::arg("kind"), py::arg("lambda_"), py::arg("trials") = 200, py::arg("seed") = 1);

    // tabular machinery on chain instances
    py::class_<HedgingMdp>(m, "HedgingMdp")
        .def_property_readonly("n_market", &HedgingMdp::n_market)
        .def_property_readonly("n_lattice", &HedgingMdp::n_lattice)
        .def_property_readonly("n_actions", &HedgingMdp::n_actions)
        .def_readonly("lattice", &HedgingMdp::lattice)
        .def_readonly("actions", &HedgingMdp::actions)
        .def_readonly("spots", &HedgingMdp::spots)
        .def("to_json", [](const HedgingMdp& mdp) { return json_to_dict(mdp.to_json()); });

    m.def(
        "build_chain_mdp",
        [](const py::object& config) {
            return build_chain_mdp(ChainMdpConfig::from_json(dict_to_json(config)));
        },
        py::arg("config"));
    m.def("default_chain_config", [] { return json_to_dict(default_chain_config().to_json()); });

    m.def(
        "value_iterate",
        [](const HedgingMdp& mdp, const std::string& kind, double lambda, double tol,
           const std::string& op) {
            OperatorKind ok = OperatorKind::mark_to_market;
            if (op == "cash_plain")
                ok = OperatorKind::cash_plain;
            else if (op == "cash_calendar")
                ok = OperatorKind::cash_calendar;
            const auto r = value_iterate(mdp, make_family(kind, lambda), ok,
                                         ValueTable::zeros(mdp.n_market(), mdp.n_lattice()), tol);
            std::vector<std::vector<double>> table(mdp.n_market(),
                                                   std::vector<double>(mdp.n_lattice()));
            for (int i = 0; i < mdp.n_market(); ++i)
                for (int z = 0; z < mdp.n_lattice(); ++z)
                    table[i][z] = r.table.at(i, z);
            py::dict out;
            out["values"] = table;
            out["iterations"] = r.iterations;
            out["converged"] = r.converged;
            out["residuals"] = r.residuals;
            return out;
        },
        py::arg("mdp"), py::arg("kind") = "entropy", py::arg("lambda_") = 1.0,
        py::arg("tol") = 1e-8, py::arg("operator") = "mark_to_market");

    m.def(
        "greedy_policy",
        [](const HedgingMdp& mdp, const std::string& kind, double lambda,
           const std::vector<std::vector<double>>& values) {
            ValueTable table = ValueTable::zeros(mdp.n_market(), mdp.n_lattice());
            for (int i = 0; i < mdp.n_market(); ++i)
                for (int z = 0; z < mdp.n_lattice(); ++z)
                    table.at(i, z) = values[i][z];
            return greedy_policy(mdp, make_family(kind, lambda), table);
        },
        py::arg("mdp"), py::arg("kind"), py::arg("lambda_"), py::arg("values"));

    // dataset generation
    m.def(
        "generate_dataset",
        [](const py::object& generator_config, std::uint64_t seed, const std::string& out_dir) {
            const GeneratorConfig config = generator_config_from_json(dict_to_json(generator_config));
            const HistoricDataset data = generate_history(config, seed);
            if (!out_dir.empty())
                save_dataset(data, out_dir);
            py::dict summary;
            summary["steps"] = data.n_steps();
            summary["states"] = static_cast<int>(data.states.size());
            summary["book_instruments"] =
                data.steps.empty() ? 0 : static_cast<int>(data.steps.front().book.size());
            summary["hedge_instruments"] =
                data.steps.empty() ? 0 : static_cast<int>(data.steps.front().hedges.size());
            return summary;
        },
        py::arg("generator_config"), py::arg("seed") = 1, py::arg("out_dir") = "");

    // end-to-end experiment commands
    m.def(
        "run_command",
        [](const std::string& command, const py::object& config, const std::string& out_dir) {
            const ExperimentConfig cfg = ExperimentConfig::from_json(dict_to_json(config));
            if (command == "generate")
                run_generate(cfg, out_dir);
            else if (command == "solve-tabular")
                run_solve_tabular(cfg, out_dir);
            else if (command == "train")
                run_train(cfg, out_dir);
            else if (command == "evaluate")
                run_evaluate(cfg, out_dir);
            else if (command == "compare-operators")
                run_compare_operators(cfg, out_dir);
            else
                throw ValidationError("unknown command: " + command);
        },
        py::arg("command"), py::arg("config"), py::arg("out_dir"));
}
