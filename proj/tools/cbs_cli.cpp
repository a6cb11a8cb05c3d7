// Command-line front end: `screen`, `estimate`, and `simulate`
// subcommands over delimiter-separated files, JSON/CSV reports.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbs/csv.hpp"
#include "cbs/report_json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitNonConvergence = 4;

struct SharedArgs {
    std::string input;
    std::string treatment = "D";
    std::string outcome = "Y";
    std::vector<std::string> unpenalized;
    std::size_t q = 30;
    std::string q_rule = "fixed";
    double epsilon = 0.01;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string out;
    std::string format = "json";
    std::string delimiter = ",";
    std::size_t threads = 0;
    bool strict = false;
    std::string wamd_weighting = "screening_scores";
};

void add_shared(CLI::App* cmd, SharedArgs& a, bool needs_input) {
    auto* in = cmd->add_option("--input", a.input, "input delimiter-separated file");
    if (needs_input) in->required();
    cmd->add_option("--treatment", a.treatment, "treatment column name (0/1)");
    cmd->add_option("--outcome", a.outcome, "outcome column name");
    cmd->add_option("--unpenalized", a.unpenalized,
                    "comma-separated columns adjusted without penalty")
        ->delimiter(',');
    cmd->add_option("--q", a.q, "screening size (default 30)");
    cmd->add_option("--q-rule", a.q_rule, "fixed | nlogn (floor(n/log n))")
        ->check(CLI::IsMember({"fixed", "nlogn"}));
    cmd->add_option("--epsilon", a.epsilon, "propensity clamp in (0, 0.5)");
    cmd->add_option("--alpha", a.alpha, "significance level m for the interval");
    cmd->add_option("--seed", a.seed, "64-bit seed");
    cmd->add_option("--out", a.out, "output path (stdout when omitted)");
    cmd->add_option("--format", a.format, "json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--delimiter", a.delimiter, "field delimiter (default ,)");
    cmd->add_option("--threads", a.threads, "worker threads (0 = hardware)");
    cmd->add_flag("--strict", a.strict, "treat solver non-convergence as failure (exit 4)");
    cmd->add_option("--wamd-weighting", a.wamd_weighting,
                    "balance-criterion weights: screening_scores | ps_coefficients")
        ->check(CLI::IsMember({"screening_scores", "ps_coefficients"}));
}

cbs::RunConfig make_config(const SharedArgs& a) {
    cbs::RunConfig cfg;
    cfg.q = a.q;
    cfg.q_rule = a.q_rule == "nlogn" ? cbs::QRule::n_over_log_n : cbs::QRule::fixed;
    cfg.epsilon_clamp = a.epsilon;
    cfg.significance = a.alpha;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    cfg.wamd_weighting = a.wamd_weighting == "ps_coefficients"
                             ? cbs::WamdWeighting::ps_coefficients
                             : cbs::WamdWeighting::screening_scores;
    return cfg;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw cbs::invalid_input("cannot open output path " + out_path);
    f << text << "\n";
}

int run_screen(const SharedArgs& a) {
    cbs::CsvSchema schema{a.treatment, a.outcome, a.unpenalized, a.delimiter.at(0)};
    cbs::IngestResult data = cbs::ingest_csv(a.input, schema);
    cbs::Sample y_screen = data.outcome;
    if (data.unpenalized.cols() > 0) {
        y_screen = cbs::Sample(cbs::detail::residualize(data.outcome.values(), data.unpenalized));
    }
    const std::size_t q_eff = a.q_rule == "nlogn"
                                  ? std::max<std::size_t>(1, cbs::q_rule_n_over_log_n(y_screen.size()))
                                  : a.q;
    cbs::ScreenResult sr = cbs::screen(data.covariates, y_screen, data.treatment, q_eff,
                                       a.threads);
    if (a.format == "csv") {
        std::ostringstream os;
        os.precision(17);
        os << "rank,name,index,score\n";
        for (std::size_t r = 0; r < sr.selected.size(); ++r) {
            const std::size_t j = sr.selected[r];
            os << r + 1 << "," << data.covariates.name(j) << "," << j << "," << sr.scores[j]
               << "\n";
        }
        emit(os.str(), a.out);
    } else {
        nlohmann::json sel = nlohmann::json::array();
        for (std::size_t r = 0; r < sr.selected.size(); ++r) {
            const std::size_t j = sr.selected[r];
            sel.push_back({{"rank", r + 1},
                           {"name", data.covariates.name(j)},
                           {"index", j},
                           {"score", sr.scores[j]}});
        }
        nlohmann::json doc{{"q", q_eff},
                           {"selected", sel},
                           {"n", y_screen.size()},
                           {"p", data.covariates.p()},
                           {"input_digest", cbs::hex64(data.input_digest)},
                           {"seed", a.seed}};
        emit(doc.dump(2), a.out);
    }
    return kExitOk;
}

int run_estimate(const SharedArgs& a) {
    cbs::CsvSchema schema{a.treatment, a.outcome, a.unpenalized, a.delimiter.at(0)};
    cbs::IngestResult data = cbs::ingest_csv(a.input, schema);
    cbs::RunConfig cfg = make_config(a);
    const cbs::Matrix* unpen = data.unpenalized.cols() > 0 ? &data.unpenalized : nullptr;
    const std::vector<std::string>* unames =
        data.unpenalized.cols() > 0 ? &data.unpenalized_names : nullptr;
    cbs::AnalysisReport report =
        cbs::run_cbs(data.covariates, data.outcome, data.treatment, cfg, unpen, unames,
                     data.input_digest);
    if (a.format == "csv") {
        emit(cbs::report_to_csv(report), a.out);
    } else {
        emit(cbs::to_json(report).dump(2), a.out);
    }
    if (a.strict && report.any_nonconvergence()) {
        std::cerr << "cbs: a solver did not converge (strict mode)\n";
        return kExitNonConvergence;
    }
    return kExitOk;
}

std::string csv_sibling(const std::string& json_path) {
    if (json_path.size() > 5 && json_path.substr(json_path.size() - 5) == ".json") {
        return json_path.substr(0, json_path.size() - 5) + ".csv";
    }
    return json_path + ".csv";
}

int run_simulate(const SharedArgs& a, const std::string& scenario, std::size_t n,
                 std::size_t p, std::size_t runs) {
    cbs::RunConfig cfg = make_config(a);
    const std::size_t threads = a.threads;
    if (scenario == "table1") {
        cbs::DgpSpec spec;
        spec.n = n;
        spec.p = p;
        spec.scenario = cbs::Scenario::linear;
        spec.seed = a.seed;
        cbs::McSummary s = cbs::run_mc(spec, runs, cfg, threads);
        nlohmann::json doc{{"scenario", "table1"},
                           {"n", n},
                           {"p", p},
                           {"true_delta", spec.true_delta},
                           {"summary", cbs::to_json(s)},
                           {"seed", a.seed},
                           {"rng", cbs::rng_description()}};
        std::ostringstream csv;
        csv.precision(17);
        csv << "run,delta_hat,v_hat,covered\n";
        for (std::size_t i = 0; i < s.per_run_estimates.size(); ++i) {
            csv << s.run_indices[i] << "," << s.per_run_estimates[i] << "," << s.per_run_vhat[i]
                << "," << static_cast<int>(s.per_run_covered[i]) << "\n";
        }
        if (a.out.empty()) {
            std::cout << doc.dump(2) << "\n";
        } else {
            emit(doc.dump(2), a.out);
            emit(csv.str(), csv_sibling(a.out));
        }
    } else {  // dr
        auto cells = cbs::run_dr_study(runs, n, p, a.seed, cfg, threads);
        nlohmann::json jc = nlohmann::json::array();
        std::ostringstream csv;
        csv.precision(17);
        csv << "cell,run,delta_hat\n";
        for (const auto& cell : cells) {
            jc.push_back({{"cell", cbs::analyst_model_name(cell.model)},
                          {"median", cell.median},
                          {"q1", cell.q1},
                          {"q3", cell.q3},
                          {"completed", cell.estimates.size()},
                          {"failures", cell.failures}});
            for (std::size_t i = 0; i < cell.estimates.size(); ++i) {
                csv << cbs::analyst_model_name(cell.model) << "," << i << ","
                    << cell.estimates[i] << "\n";
            }
        }
        nlohmann::json doc{{"scenario", "dr"}, {"n", n},         {"p", p},
                           {"runs", runs},    {"cells", jc},     {"seed", a.seed},
                           {"true_delta", 2.0}, {"rng", cbs::rng_description()}};
        if (a.out.empty()) {
            std::cout << doc.dump(2) << "\n";
        } else {
            emit(doc.dump(2), a.out);
            emit(csv.str(), csv_sibling(a.out));
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal ball screening: outcome-model-free confounder screening and "
                 "doubly robust effect estimation"};
    app.require_subcommand(1);

    SharedArgs screen_args, est_args, sim_args;
    auto* sc_screen = app.add_subcommand("screen", "rank covariates by conditional ball "
                                                   "covariance and keep the top q");
    add_shared(sc_screen, screen_args, true);

    auto* sc_est = app.add_subcommand("estimate", "full screening + selection + doubly "
                                                  "robust estimate");
    add_shared(sc_est, est_args, true);

    auto* sc_sim = app.add_subcommand("simulate", "seeded Monte Carlo studies");
    add_shared(sc_sim, sim_args, false);
    std::string scenario = "table1";
    std::size_t sim_n = 300, sim_p = 100, sim_runs = 200;
    sc_sim->add_option("--scenario", scenario, "table1 | dr")
        ->check(CLI::IsMember({"table1", "dr"}));
    sc_sim->add_option("--n", sim_n, "sample size");
    sc_sim->add_option("--p", sim_p, "covariate dimension");
    sc_sim->add_option("--runs", sim_runs, "Monte Carlo runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc_screen->parsed()) return run_screen(screen_args);
        if (sc_est->parsed()) return run_estimate(est_args);
        if (sc_sim->parsed()) return run_simulate(sim_args, scenario, sim_n, sim_p, sim_runs);
    } catch (const cbs::degenerate_data& e) {
        std::cerr << "cbs: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const cbs::invalid_input& e) {
        std::cerr << "cbs: " << e.what() << "\n";
        return kExitSchema;
    } catch (const std::exception& e) {
        std::cerr << "cbs: " << e.what() << "\n";
        return kExitSchema;
    }
    return kExitOk;
}
