// Orchestration layer: config parsing and validation, deterministic artifact
// writers, and the structure of the subcommand runners' outputs.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "voltube/report.hpp"

using voltube::config_error;
using voltube::ExperimentConfig;
using voltube::hypothesis_error;
using voltube::json;
using voltube::load_config;
using voltube::parse_config;
using voltube::Scheme;
using voltube::verify_config;

namespace {

const char* kHestonConfig = R"({
  "model": {"family": "heston", "kappa": 1.0, "theta": 1.0, "xi": 1.0,
            "rho": -0.5, "V0": 1.0, "T": 1.0},
  "run": {"n_paths": 9000, "n_steps": 16, "seed": 7},
  "targets": {"y_list": [5.0]}
})";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    EXPECT_TRUE(is.good()) << "missing file: " << p;
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::filesystem::path fresh_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(ParseConfig, ReadsFamiliesRunTargetsAndOutput) {
    const std::string text = R"({
      "model": {"family": "heston", "kappa": 2.0, "theta": 0.09, "xi": 0.3,
                "rho": -0.5, "V0": 0.04, "T": 2.0},
      "run": {"n_paths": 1234, "n_steps": 55, "seed": 99,
              "scheme": "euler_reflection", "threads": 4},
      "targets": {"y_list": [1.0, 2.0], "j_list": [0, 1], "strikes": [-0.5, 0.5],
                  "p_list": [1.0], "dt_list": [0.001, 0.01, 0.1],
                  "scaling_p_list": [2], "k_min_abs": 0.7},
      "output": {"directory": "artifacts", "formats": ["csv"]}
    })";
    const ExperimentConfig cfg = parse_config(text);
    EXPECT_EQ(cfg.family, "heston");
    ASSERT_TRUE(cfg.heston.has_value());
    EXPECT_EQ(cfg.heston->kappa, 2.0);
    EXPECT_EQ(cfg.spec.V0, 0.04);
    EXPECT_EQ(cfg.run.n_paths, 1234u);
    EXPECT_EQ(cfg.run.n_steps, 55u);
    EXPECT_EQ(cfg.effective_steps(), 55u);
    EXPECT_EQ(cfg.run.seed, 99u);
    EXPECT_EQ(cfg.run.scheme, Scheme::euler_reflection);
    EXPECT_EQ(cfg.run.threads, 4u);
    ASSERT_EQ(cfg.targets.y_list.size(), 2u);
    ASSERT_EQ(cfg.targets.scaling_p_list.size(), 1u);
    EXPECT_EQ(cfg.targets.scaling_p_list[0], 2);
    ASSERT_TRUE(cfg.targets.k_min_abs.has_value());
    EXPECT_EQ(*cfg.targets.k_min_abs, 0.7);
    EXPECT_EQ(cfg.output.directory, "artifacts");
    EXPECT_TRUE(cfg.output.write_csv);
    EXPECT_FALSE(cfg.output.write_json);
    EXPECT_EQ(cfg.config_hash, voltube::fnv1a64(text));
}

TEST(ParseConfig, DefaultsAndEffectiveSteps) {
    const ExperimentConfig cfg = parse_config(R"({
      "model": {"family": "heston", "kappa": 1.0, "theta": 0.09, "xi": 0.3,
                "rho": -0.5, "V0": 0.09, "T": 1.0}
    })");
    EXPECT_EQ(cfg.run.n_paths, 100000u);
    EXPECT_EQ(cfg.run.n_steps, 0u);
    EXPECT_EQ(cfg.effective_steps(), 400u);  // default grid for T = 1
    EXPECT_EQ(cfg.run.seed, 42u);
    EXPECT_EQ(cfg.run.scheme, Scheme::euler_full_truncation);
    EXPECT_EQ(cfg.run.threads, 1u);
    EXPECT_EQ(cfg.output.directory, "out");
    EXPECT_TRUE(cfg.output.write_csv);
    EXPECT_TRUE(cfg.output.write_json);
    EXPECT_FALSE(cfg.heston->rho == 0.0);
}

TEST(ParseConfig, BoundedSkewFamilyAndCustomBounds) {
    const ExperimentConfig cfg = parse_config(R"({
      "model": {"family": "bounded_skew_heston", "kappa": 1.0, "theta": 0.09,
                "xi": 0.3, "rho": -0.5, "V0": 0.09, "T": 1.0,
                "eta0": 1.0, "eps": 0.3},
      "custom_bounds": {"K": 3.0, "C2": 2.0, "L": 10.0}
    })");
    EXPECT_EQ(cfg.family, "bounded_skew_heston");
    EXPECT_FALSE(cfg.heston.has_value());
    EXPECT_EQ(cfg.spec.K, 3.0);
    EXPECT_EQ(cfg.bound_options.C2, 2.0);
    ASSERT_TRUE(cfg.bound_options.L_override.has_value());
    EXPECT_EQ(*cfg.bound_options.L_override, 10.0);
    EXPECT_NEAR(cfg.spec.eta(0.0, 100.0), 1.3, 1e-12);  // clipped at eta0 (1 + eps)
}

TEST(ParseConfig, RejectsMalformedDocuments) {
    EXPECT_THROW(parse_config("{"), config_error);
    EXPECT_THROW(parse_config("{}"), config_error);
    EXPECT_THROW(parse_config(R"({"model": {"family": "sabr", "kappa": 1.0, "theta": 1.0,
        "xi": 1.0, "rho": 0.0, "V0": 1.0, "T": 1.0}})"),
                 config_error);
    EXPECT_THROW(parse_config(R"({"model": {"family": "heston", "kappa": "fast", "theta": 1.0,
        "xi": 1.0, "rho": 0.0, "V0": 1.0, "T": 1.0}})"),
                 config_error);
    EXPECT_THROW(parse_config(R"({"model": {"family": "heston", "kappa": 1.0, "theta": 1.0,
        "xi": 1.0, "rho": 0.0, "V0": 1.0, "T": 1.0},
        "output": {"formats": ["parquet"]}})"),
                 config_error);
    // custom K must still satisfy K > 1.
    EXPECT_THROW(parse_config(R"({"model": {"family": "heston", "kappa": 1.0, "theta": 1.0,
        "xi": 1.0, "rho": 0.0, "V0": 1.0, "T": 1.0},
        "custom_bounds": {"K": 0.5}})"),
                 std::invalid_argument);
}

TEST(LoadConfig, MissingFileIsAConfigError) {
    EXPECT_THROW(load_config("/nonexistent/voltube.json"), config_error);
    const auto dir = fresh_dir("voltube_load_config");
    const auto path = dir / "cfg.json";
    std::ofstream(path) << kHestonConfig;
    const ExperimentConfig cfg = load_config(path.string());
    EXPECT_EQ(cfg.family, "heston");
    std::filesystem::remove_all(dir);
}

TEST(VerifyConfig, PassesHonestFamiliesAndCatchesUnderstatedK) {
    ExperimentConfig good = parse_config(kHestonConfig);
    EXPECT_NO_THROW(verify_config(good));
    EXPECT_TRUE(good.hypothesis_checked);
    EXPECT_TRUE(good.hypothesis.passes());

    // kappa = 2 gives |beta(v)| = 2|1 - v|, which outgrows K(1 + v) for K just
    // above 1; overriding K understates the growth envelope and must be caught
    // by sampling (eta and sigma are constant, so no Lipschitz violation).
    const std::string lying = R"({
      "model": {"family": "heston", "kappa": 2.0, "theta": 1.0, "xi": 1.0,
                "rho": -0.5, "V0": 1.0, "T": 1.0},
      "custom_bounds": {"K": 1.0000001}
    })";
    ExperimentConfig bad = parse_config(lying);
    EXPECT_THROW(verify_config(bad), hypothesis_error);
    ExperimentConfig tolerated = parse_config(lying);
    EXPECT_NO_THROW(verify_config(tolerated, true));
    EXPECT_FALSE(tolerated.hypothesis.passes());
    EXPECT_TRUE(tolerated.hypothesis.lipschitz_violations.empty());
    EXPECT_FALSE(tolerated.hypothesis.bound_violations.empty());
}

TEST(Formatters, SeventeenDigitRoundTripAndHashWidth) {
    const double pi = 3.14159265358979312;
    const std::string s = voltube::detail::format_g17(pi);
    EXPECT_EQ(std::stod(s), pi);
    EXPECT_EQ(voltube::detail::format_hash(voltube::fnv1a64("")), "cbf29ce484222325");
    EXPECT_EQ(voltube::detail::format_hash(0x1ull), "0000000000000001");
}

TEST(Metadata, NamesTheRunWithoutWorkerCount) {
    ExperimentConfig cfg = parse_config(kHestonConfig);
    verify_config(cfg);
    const json m = voltube::detail::metadata_json(cfg);
    EXPECT_EQ(m.at("seed").get<std::uint64_t>(), 7u);
    EXPECT_EQ(m.at("family"), "heston");
    EXPECT_EQ(m.at("scheme"), "euler_full_truncation");
    EXPECT_EQ(m.at("n_paths").get<std::size_t>(), 9000u);
    EXPECT_EQ(m.at("n_steps").get<std::size_t>(), 16u);
    EXPECT_TRUE(m.contains("config_hash"));
    EXPECT_TRUE(m.contains("version"));
    EXPECT_TRUE(m.contains("C2"));
    EXPECT_TRUE(m.contains("L"));
    EXPECT_FALSE(m.contains("threads"));
    EXPECT_FALSE(m.contains("hypothesis_violations"));
}

TEST(RunConstants, EmitsFiniteChainAndNullsBelowThreshold) {
    ExperimentConfig cfg = parse_config(kHestonConfig);
    verify_config(cfg);
    cfg.targets.y_list = {1.0, 5.0};  // threshold here is V0 (1 + 2 sinh(T/2))^2 ~ 4.17
    cfg.output.directory = fresh_dir("voltube_constants").string();
    const json out = voltube::run_constants(cfg);
    const json& c = out.at("constants");
    for (const char* key : {"c", "lambda", "gamma", "log_q_mu", "log_Q", "log_c_star",
                            "log_c_T", "log_d_T", "log_e_T", "log_ratio_d_c", "log_ratio_e_c"}) {
        ASSERT_TRUE(c.contains(key)) << key;
        EXPECT_TRUE(std::isfinite(c.at(key).get<double>())) << key;
    }
    const json& targets = out.at("targets");
    ASSERT_EQ(targets.size(), 2u);
    EXPECT_TRUE(targets[0].at("theorem").is_null());
    ASSERT_FALSE(targets[1].at("theorem").is_null());
    EXPECT_TRUE(std::isfinite(targets[1].at("theorem").at("log_neg").get<double>()));
    EXPECT_TRUE(std::filesystem::exists(
        std::filesystem::path(cfg.output.directory) / "constants.json"));
    std::filesystem::remove_all(cfg.output.directory);
}

TEST(RunCurves, ReportsResidualsAndWritesPreamble) {
    ExperimentConfig cfg = parse_config(kHestonConfig);
    verify_config(cfg);
    cfg.run.n_steps = 1000;
    cfg.output.directory = fresh_dir("voltube_curves").string();
    const json out = voltube::run_curves(cfg);
    const json& files = out.at("curves");
    ASSERT_EQ(files.size(), 1u);
    EXPECT_LE(files[0].at("max_el_residual_u").get<double>(), 1e-6);
    EXPECT_LE(files[0].at("el_residual_v_rel").get<double>(), 1e-5);
    const std::string csv =
        read_file(std::filesystem::path(cfg.output.directory) / "curves_0.csv");
    EXPECT_NE(csv.find("# config_hash: "), std::string::npos);
    EXPECT_NE(csv.find("# seed: 7"), std::string::npos);
    EXPECT_NE(csv.find("# C2: "), std::string::npos);
    EXPECT_NE(csv.find("t,u,u_prime,x_tilde,v_tilde,r_tilde,el_residual_u"), std::string::npos);
    std::filesystem::remove_all(cfg.output.directory);
}

TEST(RunTube, ByteIdenticalArtifactsAcrossWorkerCounts) {
    auto run_with_threads = [&](unsigned threads, const char* dirname) {
        ExperimentConfig cfg = parse_config(kHestonConfig);
        verify_config(cfg);
        cfg.run.threads = threads;
        cfg.output.directory = fresh_dir(dirname).string();
        voltube::run_tube(cfg);
        const auto dir = std::filesystem::path(cfg.output.directory);
        auto bytes = std::make_pair(read_file(dir / "tube.csv"),
                                    read_file(dir / "tube_summary.json"));
        std::filesystem::remove_all(dir);
        return bytes;
    };
    const auto one = run_with_threads(1, "voltube_tube_t1");
    const auto three = run_with_threads(3, "voltube_tube_t3");
    EXPECT_EQ(one.first, three.first);
    EXPECT_EQ(one.second, three.second);
    EXPECT_NE(one.first.find("y,p_hat,ci_low,ci_high"), std::string::npos);
}

TEST(RunTails, OracleColumnAndThinSlopeHandling) {
    ExperimentConfig cfg = parse_config(kHestonConfig);
    verify_config(cfg);
    cfg.run.n_paths = 2000;
    cfg.targets.y_list = {0.25, 0.5};
    cfg.output.directory = fresh_dir("voltube_tails").string();
    const json out = voltube::run_tails(cfg);
    const json& rows = out.at("tails");
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& row : rows) {
        ASSERT_FALSE(row.at("oracle_tail").is_null());
        const double oracle = row.at("oracle_tail").get<double>();
        EXPECT_GT(oracle, 0.0);
        EXPECT_LT(oracle, 1.0);
        EXPECT_TRUE(row.at("bound").is_null());  // both targets below the tail threshold
    }
    EXPECT_TRUE(out.at("mc_slope").is_null());  // two points cannot support a fit
    std::filesystem::remove_all(cfg.output.directory);
}

TEST(RunSubcommand, DispatchesAndRejectsUnknownNames) {
    ExperimentConfig cfg = parse_config(kHestonConfig);
    verify_config(cfg);
    cfg.output.write_csv = false;
    cfg.output.write_json = false;
    const json out = voltube::run_subcommand("constants", cfg);
    EXPECT_TRUE(out.contains("constants"));
    EXPECT_THROW(voltube::run_subcommand("frobnicate", cfg), config_error);
}
