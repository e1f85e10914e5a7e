#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "intens/experiment.hpp"

using namespace intens;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* kConstantBiasVar =
    "experiment = bias-variance\n"
    "model = constant\n"
    "model.a = 40\n"
    "window.lower = -1\n"
    "window.upper = 1\n"
    "kernel.gamma = 2\n"
    "x0 = 0.1\n"
    "n = 50 200\n"
    "h.values = 0.1 0.2\n"
    "seed = 7\n";

const char* kRate1d =
    "experiment = rate\n"
    "model = log_polynomial\n"
    "model.poly = 5.0:0 0.6:1 -0.4:2 0.1:3\n"
    "window.lower = -1\n"
    "window.upper = 1\n"
    "kernel.gamma = 3\n"
    "x0 = 0.1\n"
    "n = 100 1000 10000\n"
    "h.rule = mse_argmin\n";

}  // namespace

TEST_CASE("config parsing: comments, whitespace, lists", "[experiment]") {
    ExperimentConfig cfg = ExperimentConfig::from_string(
        "# a comment\n"
        "  alpha =  3.5  # trailing comment\n"
        "pts = 0.1 0.2 ; -0.3 0.4\n"
        "grid = 1 2 4\n",
        "cfg");
    CHECK(cfg.get_double("alpha", 0.0) == 3.5);
    CHECK(cfg.get_double("missing", -1.0) == -1.0);
    auto pts = cfg.get_points("pts");
    REQUIRE(pts.size() == 2);
    CHECK(pts[1][0] == -0.3);
    CHECK(cfg.get_doubles("grid") == std::vector<double>{1.0, 2.0, 4.0});
}

TEST_CASE("config parsing reports the offending line", "[experiment]") {
    CHECK_THROWS_WITH(ExperimentConfig::from_string("a = 1\nnot a pair\n", "cfg"),
                      ContainsSubstring("cfg:2") && ContainsSubstring("key = value"));
    CHECK_THROWS_WITH(ExperimentConfig::from_string("a = 1\na = 2\n", "cfg"),
                      ContainsSubstring("duplicate key 'a'") &&
                          ContainsSubstring("line 1"));
    ExperimentConfig bad = ExperimentConfig::from_string("a = 1\nh = abc\n", "cfg");
    CHECK_THROWS_WITH(bad.get_double("h", 0.0),
                      ContainsSubstring("cfg:2") && ContainsSubstring("'abc'"));
    CHECK_THROWS_WITH(bad.get_u64("h", 0),
                      ContainsSubstring("unsigned integer"));
    CHECK_THROWS_AS(bad.require_string("missing"), ConfigError);
}

TEST_CASE("build_setup validation", "[experiment]") {
    auto setup_from = [](std::string extra) {
        std::string base = kConstantBiasVar;
        return build_setup(ExperimentConfig::from_string(base + extra, "cfg"));
    };
    CHECK_NOTHROW(setup_from(""));
    // unknown keys are rejected with their line number
    CHECK_THROWS_WITH(setup_from("kernell.gamma = 2\n"),
                      ContainsSubstring("unknown key 'kernell.gamma'"));
    CHECK_THROWS_WITH(setup_from("kernel.d = 2\n"),
                      ContainsSubstring("kernel.d"));
    // n grid must be strictly increasing
    std::string shuffled = kConstantBiasVar;
    shuffled.replace(shuffled.find("n = 50 200"), 10, "n = 200 50\n#");
    CHECK_THROWS_WITH(build_setup(ExperimentConfig::from_string(shuffled, "cfg")),
                      ContainsSubstring("strictly increasing"));
    // x0 must be strictly inside the window
    std::string outside = kConstantBiasVar;
    outside.replace(outside.find("x0 = 0.1"), 8, "x0 = 1.0");
    CHECK_THROWS_WITH(build_setup(ExperimentConfig::from_string(outside, "cfg")),
                      ContainsSubstring("inside the window"));
    // explicit bandwidths must fit inside the boundary margin
    std::string wide = kConstantBiasVar;
    wide.replace(wide.find("h.values = 0.1 0.2"), 18, "h.values = 0.95\n #");
    CHECK_THROWS_WITH(build_setup(ExperimentConfig::from_string(wide, "cfg")),
                      ContainsSubstring("margin"));
    CHECK_THROWS_WITH(setup_from("estimator = nearest\n"),
                      ContainsSubstring("unknown estimator"));
}

TEST_CASE("bias-variance on a constant Poisson model", "[experiment]") {
    ExperimentSetup s = build_setup(ExperimentConfig::from_string(kConstantBiasVar, "cfg"));
    BiasVarianceResult r = run_bias_variance_experiment(s);
    REQUIRE(r.records.size() == 4);
    for (const auto& rec : r.records) {
        CHECK(rec.lambda_x0 == 40.0);
        CHECK(std::abs(rec.oracle_bias) < 1e-10);
        CHECK(std::isnan(rec.bias_ratio));  // leading bias is exactly zero
        CHECK(rec.variance_ratio == Catch::Approx(1.0).epsilon(1e-10));
    }
    nlohmann::json summary = summary_json(r);
    CHECK(summary["records"] == 4);
    CHECK(summary["mc_oracle_within_3se"].is_null());  // no Monte Carlo requested
}

TEST_CASE("experiment output is byte-identical across reruns and thread counts",
          "[experiment]") {
    auto run_to_string = [](int threads) {
        ExperimentConfig cfg = ExperimentConfig::from_string(kConstantBiasVar, "cfg");
        cfg.set("threads", std::to_string(threads));
        cfg.set("R", "40");  // include the Monte Carlo columns
        ExperimentSetup s = build_setup(cfg);
        std::ostringstream os;
        write_csv(os, run_bias_variance_experiment(s));
        return os.str();
    };
    std::string a = run_to_string(1);
    std::string b = run_to_string(1);
    std::string c = run_to_string(4);
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("identity suite passes and the mutation self-test trips one check",
          "[experiment]") {
    IdentityReport clean = run_identity_suite();
    CHECK(clean.all_pass);
    CHECK(clean.failures() == 0);
    CHECK(clean.checks.size() > 200);
    IdentityMutation mut;
    mut.v_scale = 1.01;
    IdentityReport broken = run_identity_suite(mut);
    CHECK_FALSE(broken.all_pass);
    CHECK(broken.failures() == 1);
    std::ostringstream os;
    write_csv(os, broken);
    CHECK_THAT(os.str(), ContainsSubstring(",0\n"));  // the failing row
}

TEST_CASE("rate experiment recovers the fixed-bandwidth convergence order",
          "[experiment]") {
    ExperimentSetup s = build_setup(ExperimentConfig::from_string(kRate1d, "cfg"));
    RateResult r = run_rate_experiment(s);
    REQUIRE(r.fits.size() == 1);
    CHECK(r.fits[0].target_slope == Catch::Approx(-0.2));
    CHECK(r.fits[0].slope == Catch::Approx(-0.2).margin(0.05));
    std::ostringstream os;
    write_csv(os, r);
    CHECK_THAT(os.str(), ContainsSubstring("\n"));
}

TEST_CASE("streamed estimator matches the materialised estimator bit-for-bit",
          "[experiment]") {
    std::string text = kConstantBiasVar;
    text += "estimator = adaptive_oracle\nR = 1\n";
    // swap the constant model for an inhomogeneous one so the adaptive
    // weights are non-trivial
    text.replace(text.find("model = constant"), 16, "model = log_polynomial");
    text.replace(text.find("model.a = 40"), 12,
                 "model.poly = 4.0:0 0.5:1");
    ExperimentSetup s = build_setup(ExperimentConfig::from_string(text, "cfg"));
    const std::size_t n = 30;
    EstimateRequest req = detail::make_request(s, s.x0s[0], 0.2);
    SuperposedSample sample = sample_superposition(s.model, n, 99, 1000);
    double materialised = estimate(sample, req);
    double streamed = detail::streamed_estimate(s, req, n, 99, 1000);
    CHECK(streamed == materialised);

    // and again for the fixed-bandwidth mode
    s.mode = EstimatorMode::FIXED;
    EstimateRequest fixed_req = detail::make_request(s, s.x0s[0], 0.2);
    CHECK(detail::streamed_estimate(s, fixed_req, n, 99, 1000) ==
          estimate(sample, fixed_req));
}
