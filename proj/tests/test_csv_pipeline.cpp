#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cbs/csv.hpp"
#include "cbs/pipeline.hpp"
#include "cbs/report_json.hpp"
#include "cbs/simharness.hpp"
#include "helpers.hpp"

using namespace cbs;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        path = (std::filesystem::temp_directory_path() /
                ("cbs_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + ".csv"))
                   .string();
        std::ofstream f(path, std::ios::binary);
        f << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("well-formed file parses into matching shapes") {
    TempFile f("D,Y,X1,X2\n1,2.5,0.1,-0.3\n0,1.0,0.2,0.4\n1,-0.5,-1.5,2.25\n");
    IngestResult r = ingest_csv(f.path, {"D", "Y", {}, ','});
    CHECK(r.covariates.n() == 3);
    CHECK(r.covariates.p() == 2);
    CHECK(r.outcome.size() == 3);
    CHECK(r.treatment.n1() == 2);
    CHECK(r.covariates.name(0) == "X1");
    CHECK(r.covariates.col(1)[2] == 2.25);
    CHECK(r.input_digest != 0);
}

TEST_CASE("bad treatment token is reported with its data row") {
    TempFile f("D,Y,X1\n1,1.0,0.1\n0,1.0,0.2\n1,1.0,0.3\n0,1.0,0.4\n2,1.0,0.5\n");
    try {
        ingest_csv(f.path, {"D", "Y", {}, ','});
        FAIL("expected invalid_input");
    } catch (const invalid_input& e) {
        const std::string msg = e.what();
        CHECK(msg.find("data row 5") != std::string::npos);
        CHECK(msg.find("not 0 or 1") != std::string::npos);
    }
}

TEST_CASE("missing cells are rejected with coordinates") {
    TempFile f("D,Y,X1,X2\n1,2.0,0.5,NA\n0,1.0,,0.3\n");
    try {
        ingest_csv(f.path, {"D", "Y", {}, ','});
        FAIL("expected invalid_input");
    } catch (const invalid_input& e) {
        const std::string msg = e.what();
        CHECK(msg.find("data row 1, column 'X2'") != std::string::npos);
        CHECK(msg.find("data row 2, column 'X1'") != std::string::npos);
        CHECK(msg.find("missing cell") != std::string::npos);
    }
}

TEST_CASE("structural file errors") {
    TempFile empty("");
    CHECK_THROWS_AS(ingest_csv(empty.path, {"D", "Y", {}, ','}), invalid_input);

    TempFile header_only("D,Y,X1\n");
    CHECK_THROWS_AS(ingest_csv(header_only.path, {"D", "Y", {}, ','}), invalid_input);

    TempFile missing_col("D,X1\n1,0.5\n");
    CHECK_THROWS_AS(ingest_csv(missing_col.path, {"D", "Y", {}, ','}), invalid_input);

    TempFile ragged("D,Y,X1\n1,1.0,0.5\n0,1.0\n");
    CHECK_THROWS_AS(ingest_csv(ragged.path, {"D", "Y", {}, ','}), invalid_input);

    TempFile malformed("D,Y,X1\n1,abc,0.5\n");
    CHECK_THROWS_AS(ingest_csv(malformed.path, {"D", "Y", {}, ','}), invalid_input);

    TempFile dup_role("D,Y,X1\n1,1.0,0.5\n");
    CHECK_THROWS_AS(ingest_csv(dup_role.path, {"D", "D", {}, ','}), invalid_input);
    CHECK_THROWS_AS(ingest_csv(dup_role.path, {"D", "Y", {"Y"}, ','}), invalid_input);
}

TEST_CASE("delimiter override") {
    TempFile f("D;Y;X1\n1;2.0;0.5\n0;1.0;0.25\n");
    IngestResult r = ingest_csv(f.path, {"D", "Y", {}, ';'});
    CHECK(r.covariates.p() == 1);
    CHECK(r.outcome[0] == 2.0);
}

TEST_CASE("pipeline smoke run: structure, containment, determinism") {
    DgpSpec spec;
    spec.n = 90;
    spec.p = 12;
    spec.seed = 31;
    SimData data = generate(spec, 0);
    RunConfig cfg;
    cfg.q = 6;
    cfg.lambda_y_grid_size = 12;
    cfg.lambda_d_grid_size = 8;
    cfg.gamma_grid = {1.0, 2.0};
    cfg.seed = 5;

    AnalysisReport rep = run_cbs(data.x, data.y, data.d, cfg);
    CHECK(rep.screened.size() == 6);
    CHECK(rep.q_effective == 6);
    CHECK(rep.estimate.n == 90);
    CHECK(rep.estimate.influence.size() == 90);
    CHECK(rep.estimate.ci_lower <= rep.estimate.delta_hat);
    CHECK(rep.estimate.ci_upper >= rep.estimate.delta_hat);
    CHECK(rep.config_hash != 0);
    CHECK(rep.input_digest != 0);
    CHECK_FALSE(rep.ci_note.empty());

    // every selected variable appears in the fitted design (screened set
    // plus unpenalized columns)
    for (const auto& nm : rep.selected_or) {
        CHECK(std::find(rep.design_names.begin(), rep.design_names.end(), nm) !=
              rep.design_names.end());
    }
    for (const auto& nm : rep.selected_ps) {
        CHECK(std::find(rep.design_names.begin(), rep.design_names.end(), nm) !=
              rep.design_names.end());
    }

    // identical inputs and config give a byte-identical report
    AnalysisReport rep2 = run_cbs(data.x, data.y, data.d, cfg);
    CHECK(to_json(rep).dump() == to_json(rep2).dump());

    // thread count must not change the result
    RunConfig cfg4 = cfg;
    cfg4.threads = 4;
    AnalysisReport rep4 = run_cbs(data.x, data.y, data.d, cfg4);
    CHECK(rep4.estimate.delta_hat == rep.estimate.delta_hat);
    CHECK(to_json(rep4).dump() == to_json(rep).dump());
}

TEST_CASE("degenerate inputs raise typed errors") {
    DgpSpec spec;
    spec.n = 40;
    spec.p = 8;
    SimData data = generate(spec, 1);
    RunConfig cfg;
    cfg.q = 4;

    std::vector<std::uint8_t> all_ones(40, 1);
    CHECK_THROWS_AS(run_cbs(data.x, data.y, ArmLabels(all_ones), cfg), degenerate_data);

    // constant covariates everywhere -> all screening scores zero
    Matrix flat(40, 3);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 40; ++i) flat.at(i, j) = static_cast<double>(j);
    FeatureMatrix fm(std::move(flat), {"A", "B", "C"});
    CHECK_THROWS_AS(run_cbs(fm, data.y, data.d, cfg), degenerate_data);
}

TEST_CASE("exact duplicate screened columns are dropped, lowest index kept") {
    Rng rng(8);
    const std::size_t n = 80;
    Matrix x = testutil::random_matrix(rng, n, 6);
    for (std::size_t i = 0; i < n; ++i) x.at(i, 4) = x.at(i, 1);  // duplicate pair
    std::vector<std::string> names = {"X1", "X2", "X3", "X4", "X5", "X6"};
    std::vector<double> yv(n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) {
        dv[i] = i % 2;
        yv[i] = 3.0 * x.at(i, 1) + 0.5 * rng.normal();
    }
    RunConfig cfg;
    cfg.q = 6;
    cfg.lambda_y_grid_size = 10;
    cfg.lambda_d_grid_size = 6;
    cfg.gamma_grid = {1.0};
    AnalysisReport rep =
        run_cbs(FeatureMatrix(std::move(x), names), Sample(yv), ArmLabels(dv), cfg);
    REQUIRE(rep.dropped_duplicates.size() == 1);
    CHECK(rep.dropped_duplicates[0] == "X5");
    bool x2_in = false, x5_in = false;
    for (const auto& e : rep.screened) {
        x2_in |= e.name == "X2";
        x5_in |= e.name == "X5";
    }
    CHECK(x2_in);
    CHECK_FALSE(x5_in);
}

TEST_CASE("residualization drives the screening outcome only") {
    Rng rng(9);
    const std::size_t n = 100;
    Matrix x = testutil::random_matrix(rng, n, 5);
    Matrix z(n, 1);
    std::vector<double> yv(n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) {
        z.at(i, 0) = rng.normal();
        dv[i] = i % 2;
        // the unpenalized covariate dominates Y; X2 carries the rest
        yv[i] = 10.0 * z.at(i, 0) + 1.5 * x.at(i, 1) + 0.3 * rng.normal();
    }
    std::vector<std::string> names = {"X1", "X2", "X3", "X4", "X5"};
    std::vector<std::string> znames = {"Z"};
    RunConfig cfg;
    cfg.q = 3;
    cfg.lambda_y_grid_size = 10;
    cfg.lambda_d_grid_size = 6;
    cfg.gamma_grid = {1.0};
    FeatureMatrix fm(std::move(x), names);
    Sample y(yv);
    ArmLabels d(dv);
    AnalysisReport rep = run_cbs(fm, y, d, cfg, &z, &znames);

    // screening scores must equal a manual screen on the residualized outcome
    Sample resid(detail::residualize(y.values(), z));
    ScreenResult manual = screen(fm, resid, d, 3);
    for (std::size_t r = 0; r < rep.screened.size(); ++r) {
        CHECK(rep.screened[r].index == manual.selected[r]);
        CHECK(rep.screened[r].score == manual.scores[manual.selected[r]]);
    }
    // Z is in the designs and models by name
    CHECK(std::find(rep.design_names.begin(), rep.design_names.end(), "Z") !=
          rep.design_names.end());
}

TEST_CASE("q rule switch changes the screening size") {
    DgpSpec spec;
    spec.n = 120;
    spec.p = 10;
    SimData data = generate(spec, 3);
    RunConfig cfg;
    cfg.q_rule = QRule::n_over_log_n;  // floor(120/log 120) = 25 > p -> saturates
    cfg.lambda_y_grid_size = 8;
    cfg.lambda_d_grid_size = 6;
    cfg.gamma_grid = {1.0};
    AnalysisReport rep = run_cbs(data.x, data.y, data.d, cfg);
    CHECK(rep.q_effective == 25);
    CHECK(rep.screened.size() == 10);  // saturated at p
}
