#pragma once

#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cbs/pipeline.hpp"
#include "cbs/simharness.hpp"

namespace cbs {

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline nlohmann::json to_json(const DrEstimate& e) {
    return nlohmann::json{{"delta_hat", e.delta_hat},
                          {"v_hat", e.v_hat},
                          {"ci_lower", e.ci_lower},
                          {"ci_upper", e.ci_upper},
                          {"level", e.level},
                          {"n", e.n},
                          {"influence", e.influence}};
}

inline nlohmann::json to_json(const CvReport& cv) {
    return nlohmann::json{{"lambda_path", cv.lambda_path},
                          {"cv_error", cv.cv_error},
                          {"cv_se", cv.cv_se},
                          {"chosen_lambda", cv.chosen_lambda}};
}

inline nlohmann::json to_json(const AnalysisReport& r) {
    nlohmann::json screened = nlohmann::json::array();
    for (const auto& e : r.screened) {
        screened.push_back({{"name", e.name}, {"index", e.index}, {"score", e.score}});
    }
    nlohmann::json surface = nlohmann::json::array();
    for (const auto& pt : r.wamd.grid) {
        surface.push_back({{"gamma", pt.gamma},
                           {"lambda_d", pt.lambda_d},
                           {"wamd", pt.wamd_literal},
                           {"selection_value", pt.wamd_selection},
                           {"nonzero", pt.nonzero_count},
                           {"converged", pt.converged}});
    }
    nlohmann::json coef = nlohmann::json::object();
    auto coef_table = [&](const LassoFit& f) {
        nlohmann::json t = nlohmann::json::object();
        for (std::size_t j : f.nonzero_set) t[r.design_names[j]] = f.coefficients[j];
        t["(intercept)"] = f.intercept;
        return t;
    };
    coef["outcome_arm0"] = coef_table(r.outcome_fit0);
    coef["outcome_arm1"] = coef_table(r.outcome_fit1);
    {
        nlohmann::json t = nlohmann::json::object();
        for (std::size_t j : r.wamd.chosen_fit.nonzero_set)
            t[r.design_names[j]] = r.wamd.chosen_fit.coefficients[j];
        t["(intercept)"] = r.wamd.chosen_fit.intercept;
        coef["propensity"] = t;
    }

    return nlohmann::json{
        {"estimate", to_json(r.estimate)},
        {"screened", screened},
        {"dropped_duplicates", r.dropped_duplicates},
        {"selected_or", r.selected_or},
        {"selected_ps", r.selected_ps},
        {"coefficients", coef},
        {"tuning",
         {{"lambda_y0", r.lambda_y0},
          {"lambda_y1", r.lambda_y1},
          {"lambda_d", r.lambda_d},
          {"gamma", r.gamma},
          {"cv_arm0", to_json(r.cv0)},
          {"cv_arm1", to_json(r.cv1)},
          {"wamd_degenerate", r.wamd.degenerate},
          {"wamd_weighting", r.wamd_weighting}}},
        {"wamd_surface", surface},
        {"convergence",
         {{"outcome_arm0", r.outcome_fit0.converged},
          {"outcome_arm1", r.outcome_fit1.converged},
          {"propensity", r.wamd.chosen_fit.converged},
          {"any_grid_point_nonconverged", r.wamd.any_nonconverged}}},
        {"q_effective", r.q_effective},
        {"provenance",
         {{"config_hash", hex64(r.config_hash)},
          {"input_digest", hex64(r.input_digest)},
          {"seed", r.seed},
          {"rng", r.rng_method}}},
        {"ci_note", r.ci_note}};
}

inline nlohmann::json to_json(const McSummary& s) {
    return nlohmann::json{{"runs", s.runs},
                          {"completed", s.completed},
                          {"failures", s.failures},
                          {"bias_x100", s.bias_x100},
                          {"bias_se_x100", s.bias_se_x100},
                          {"mse_x100", s.mse_x100},
                          {"mse_se_x100", s.mse_se_x100},
                          {"coverage_pct", s.coverage_pct}};
}

/// Flat tables for --format csv: screened scores, model coefficients,
/// and the single estimate row.
inline std::string report_to_csv(const AnalysisReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "table,name,value\n";
    for (const auto& e : r.screened) os << "score," << e.name << "," << e.score << "\n";
    auto coefs = [&](const char* tag, const LassoFit& f) {
        os << "coef_" << tag << ",(intercept)," << f.intercept << "\n";
        for (std::size_t j : f.nonzero_set)
            os << "coef_" << tag << "," << r.design_names[j] << "," << f.coefficients[j] << "\n";
    };
    coefs("outcome_arm0", r.outcome_fit0);
    coefs("outcome_arm1", r.outcome_fit1);
    os << "coef_propensity,(intercept)," << r.wamd.chosen_fit.intercept << "\n";
    for (std::size_t j : r.wamd.chosen_fit.nonzero_set)
        os << "coef_propensity," << r.design_names[j] << ","
           << r.wamd.chosen_fit.coefficients[j] << "\n";
    os << "estimate,delta_hat," << r.estimate.delta_hat << "\n";
    os << "estimate,v_hat," << r.estimate.v_hat << "\n";
    os << "estimate,ci_lower," << r.estimate.ci_lower << "\n";
    os << "estimate,ci_upper," << r.estimate.ci_upper << "\n";
    os << "estimate,level," << r.estimate.level << "\n";
    os << "estimate,n," << r.estimate.n << "\n";
    return os.str();
}

}  // namespace cbs
