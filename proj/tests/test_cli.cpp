#include "nethawkes/io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace nh = nethawkes;
namespace io = nethawkes::io;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
  protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("nethawkes_cli_") + info->name() + "_" +
                                           std::to_string(std::random_device{}()));
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    // Runs the CLI with stdout and stderr captured under the test directory.
    int run(const std::string& args, std::string* err = nullptr) {
        const fs::path out = dir / "stdout.txt", errf = dir / "stderr.txt";
        const std::string cmd =
            std::string(NETHAWKES_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + errf.string();
        const int status = std::system(cmd.c_str());
        if (err) {
            *err = io::read_file(errf);
        }
        return WEXITSTATUS(status);
    }
    std::string p(const std::string& rel) const { return (dir / rel).string(); }

    static std::vector<json> jsonl(const fs::path& path) {
        std::vector<json> out;
        std::istringstream in(io::read_file(path));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                out.push_back(json::parse(line));
            }
        }
        return out;
    }

    // Small synthetic data set used by the fitting tests.
    void simulate_small() {
        ASSERT_EQ(run("simulate --K 4 --T 1500 --p 0.4 --radius 0.6 --B 2 --D 5 --seed 3 --out " + p("sim")), 0);
    }
};

TEST_F(CliTest, SimulateWritesCountsParamsAndManifest) {
    ASSERT_EQ(run("simulate --K 2 --T 100 --seed 5 --out " + p("s")), 0);
    const nh::CountMatrix S = io::read_counts(dir / "s/counts.csv");
    EXPECT_EQ(S.T, 100U);
    EXPECT_EQ(S.K, 2U);
    const json params = io::read_json(dir / "s/params.json");
    const nh::ModelParams truth = io::params_from_json(params.at("params"));
    EXPECT_EQ(truth.K(), 2U);
    const json m = io::read_json(dir / "s/manifest.json");
    EXPECT_EQ(m.at("command"), "simulate");
    EXPECT_EQ(m.at("seed"), 5);
    EXPECT_EQ(m.at("config").at("K"), "2");
    EXPECT_EQ(m.at("config").at("p"), "0.25");
    EXPECT_TRUE(m.at("fidelity").contains("include_diagonal"));
    const json s = io::read_json(dir / "s/summary.json");
    EXPECT_DOUBLE_EQ(s.at("events").get<double>(), S.total());
}

TEST_F(CliTest, SimulateIsDeterministicBySeed) {
    ASSERT_EQ(run("simulate --K 3 --T 500 --seed 9 --out " + p("a")), 0);
    ASSERT_EQ(run("simulate --K 3 --T 500 --seed 9 --threads 1 --out " + p("b")), 0);
    ASSERT_EQ(run("simulate --K 3 --T 500 --seed 10 --out " + p("c")), 0);
    EXPECT_EQ(io::read_file(dir / "a/counts.csv"), io::read_file(dir / "b/counts.csv"));
    EXPECT_NE(io::read_file(dir / "a/counts.csv"), io::read_file(dir / "c/counts.csv"));
}

TEST_F(CliTest, SyntheticRegimeRateMatchesReportedRange) {
    // Fifty processes, sparse network, unit background rate.
    ASSERT_EQ(run("simulate --K 50 --p 0.08 --T 100000 --lambda0 1 --seed 1 --out " + p("r")), 0);
    const json s = io::read_json(dir / "r/summary.json");
    ASSERT_TRUE(s.at("stable").get<bool>());
    const double rate = s.at("mean_rate").get<double>();
    EXPECT_GE(rate, 4.7);
    EXPECT_LE(rate, 28.7);
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsOverride) {
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "# comment\nK = 3\nT = 200\nweight_rate = 20 # trailing\n";
    }
    ASSERT_EQ(run("simulate --config " + p("run.cfg") + " --T 150 --out " + p("c")), 0);
    const nh::CountMatrix S = io::read_counts(dir / "c/counts.csv");
    EXPECT_EQ(S.K, 3U);
    EXPECT_EQ(S.T, 150U);
    const json m = io::read_json(dir / "c/manifest.json");
    EXPECT_EQ(m.at("config").at("weight-rate"), "20");
}

TEST_F(CliTest, GibbsEmitsOneRecordPerSweep) {
    simulate_small();
    ASSERT_EQ(run("fit-gibbs --counts " + p("sim/counts.csv") + " --B 2 --D 5 --samples 12 --out " + p("g")), 0);
    const auto trace = jsonl(dir / "g/trace.jsonl");
    ASSERT_EQ(trace.size(), 12U);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        EXPECT_EQ(trace[i].at("iteration").get<std::size_t>(), i + 1);
        EXPECT_TRUE(std::isfinite(trace[i].at("log_joint").get<double>()));
    }
    const json s = io::read_json(dir / "g/summary.json");
    EXPECT_EQ(s.at("mean_A").size(), 16U);
    EXPECT_EQ(io::read_json(dir / "g/manifest.json").at("fidelity").at("exposure"), "exact");
}

TEST_F(CliTest, GibbsResumeIsBitExact) {
    simulate_small();
    const std::string base = "fit-gibbs --counts " + p("sim/counts.csv") + " --B 2 --D 5 --draw-every 2 --burnin 3";
    ASSERT_EQ(run(base + " --samples 16 --out " + p("full")), 0);
    ASSERT_EQ(run(base + " --samples 7 --out " + p("part")), 0);
    ASSERT_EQ(run(base + " --samples 16 --resume " + p("part/checkpoint.json") + " --out " + p("part")), 0);
    const auto a = jsonl(dir / "full/trace.jsonl"), b = jsonl(dir / "part/trace.jsonl");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].at("log_joint").get<double>(), b[i].at("log_joint").get<double>()) << i;
    }
    EXPECT_EQ(io::read_file(dir / "full/samples.jsonl"), io::read_file(dir / "part/samples.jsonl"));
    EXPECT_EQ(io::read_json(dir / "full/summary.json"), io::read_json(dir / "part/summary.json"));
}

TEST_F(CliTest, SviWithFullBatchAndUnitStepMatchesBatchVb) {
    simulate_small();
    const std::string base = "--counts " + p("sim/counts.csv") + " --B 2 --D 5 --iters 8";
    ASSERT_EQ(run("fit-vb " + base + " --out " + p("vb")), 0);
    ASSERT_EQ(run("fit-svi " + base + " --minibatch 1500 --fixed-step 1 --out " + p("svi")), 0);
    const auto a = jsonl(dir / "vb/trace.jsonl"), b = jsonl(dir / "svi/trace.jsonl");
    ASSERT_EQ(a.size(), 8U);
    ASSERT_EQ(b.size(), 8U);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (const char* key : {"elbo", "sum_p", "sum_mean_W", "mean_lambda0"}) {
            const double x = a[i].at(key).get<double>(), y = b[i].at(key).get<double>();
            EXPECT_NEAR(x, y, 1e-10 * std::max(1.0, std::abs(x))) << key << " at " << i;
        }
    }
}

TEST_F(CliTest, VariationalResumeIsBitExact) {
    simulate_small();
    const std::string base = "fit-svi --counts " + p("sim/counts.csv") + " --B 2 --D 5 --minibatch 300";
    ASSERT_EQ(run(base + " --iters 10 --out " + p("full")), 0);
    ASSERT_EQ(run(base + " --iters 4 --out " + p("part")), 0);
    ASSERT_EQ(run(base + " --iters 10 --resume " + p("part/checkpoint.json") + " --out " + p("part")), 0);
    const auto a = jsonl(dir / "full/trace.jsonl"), b = jsonl(dir / "part/trace.jsonl");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].at("elbo").get<double>(), b[i].at("elbo").get<double>()) << i;
    }
    EXPECT_EQ(io::read_json(dir / "full/state.json"), io::read_json(dir / "part/state.json"));
}

TEST_F(CliTest, ElboTraceIsNondecreasingForBatchVb) {
    simulate_small();
    ASSERT_EQ(run("fit-vb --counts " + p("sim/counts.csv") + " --B 2 --D 5 --iters 25 --out " + p("vb")), 0);
    const auto t = jsonl(dir / "vb/trace.jsonl");
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double prev = t[i - 1].at("elbo").get<double>(), cur = t[i].at("elbo").get<double>();
        EXPECT_GE(cur, prev - 1e-8 * std::abs(prev)) << i;
    }
}

TEST_F(CliTest, MapCrossValidationAndInitialization) {
    simulate_small();
    ASSERT_EQ(run("fit-map --counts " + p("sim/counts.csv") + " --B 2 --D 5 --cv --cv-grid 0,1,10 --out " +
                  p("map")),
              0);
    const json cv = io::read_json(dir / "map/cv.json");
    EXPECT_EQ(cv.at("grid").size(), 3U);
    const auto trace = jsonl(dir / "map/trace.jsonl");
    for (std::size_t i = 1; i < trace.size(); ++i) {
        EXPECT_GE(trace[i].at("objective").get<double>(), trace[i - 1].at("objective").get<double>() - 1e-9);
    }
    ASSERT_EQ(run("fit-gibbs --counts " + p("sim/counts.csv") + " --B 2 --D 5 --samples 3 --init map --out " +
                  p("g")),
              0);
    ASSERT_EQ(run("fit-vb --counts " + p("sim/counts.csv") + " --B 2 --D 5 --iters 3 --init map --out " + p("v")), 0);
}

TEST_F(CliTest, EvalMetricsMatchLibraryAndOracles) {
    simulate_small();
    ASSERT_EQ(run("simulate --params " + p("sim/params.json") + " --T 500 --seed 77 --out " + p("test")), 0);
    const std::string data = " --counts " + p("sim/counts.csv") + " --B 2 --D 5";
    ASSERT_EQ(run("fit-gibbs" + data + " --samples 30 --draw-every 3 --out " + p("gibbs")), 0);
    ASSERT_EQ(run("fit-vb" + data + " --iters 20 --out " + p("vb")), 0);
    ASSERT_EQ(run("fit-map" + data + " --out " + p("map")), 0);
    ASSERT_EQ(run("eval --fit " + p("gibbs") + " --fit " + p("vb") + " --fit " + p("map") + " --truth " +
                  p("sim/params.json") + " --test " + p("test/counts.csv") + " --train " + p("sim/counts.csv") +
                  " --counts " + p("sim/counts.csv") + " --xcorr-lag 5 --out " + p("ev")),
              0);
    const json metrics = io::read_json(dir / "ev/metrics.json");
    const auto& rows = metrics.at("rows");
    ASSERT_EQ(rows.size(), 4U);

    const nh::ModelParams truth = io::params_from_json(io::read_json(dir / "sim/params.json").at("params"));
    const nh::CountMatrix train = io::read_counts(dir / "sim/counts.csv");
    const nh::CountMatrix test = io::read_counts(dir / "test/counts.csv");
    const std::size_t K = truth.K();
    for (std::size_t r = 0; r < 3; ++r) {
        const std::string label = rows[r].at("label");
        const json s = io::read_json(dir / label / "summary.json");
        const auto score = s.at(label == "map" ? "mean_W" : "mean_A").get<std::vector<double>>();
        std::vector<double> xs;
        std::vector<int> ys;
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                if (k != kp) {
                    xs.push_back(score[k * K + kp]);
                    ys.push_back(truth.A(k, kp));
                }
            }
        }
        EXPECT_NEAR(rows[r].at("roc_auc").get<double>(), oracle::pairwise_auc(xs, ys), 1e-12) << label;
        EXPECT_NEAR(rows[r].at("pr_auc").get<double>(), oracle::threshold_pr_auc(xs, ys), 1e-12) << label;
    }
    // The MAP fit has a single draw, so its predictive likelihood is directly computable.
    const nh::ModelParams map = io::params_from_json(io::read_json(dir / "map/params.json").at("params"));
    const nh::BasisSet basis = io::basis_from_json(io::read_json(dir / "map/basis.json"));
    const double model = oracle::loglik(test, oracle::rates(map, test, basis));
    const std::vector<double> base = nh::homogeneous_rates(train);
    nh::ModelParams h(K, basis.B);
    h.lambda0 = base;
    const double baseline = oracle::loglik(test, oracle::rates(h, test, basis));
    EXPECT_NEAR(rows[2].at("predictive_ll").get<double>(), (model - baseline) / test.total(), 1e-9);
    EXPECT_TRUE(fs::exists(dir / "ev/metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "ev/uncertainty_gibbs.csv"));
    EXPECT_EQ(rows[3].at("label"), "xcorr");
}

TEST_F(CliTest, EvalPerfectScoresGiveUnitAuc) {
    // A fit whose posterior means equal the true adjacency.
    ASSERT_EQ(run("simulate --K 5 --T 50 --p 0.4 --seed 4 --out " + p("s")), 0);
    const nh::ModelParams truth = io::params_from_json(io::read_json(dir / "s/params.json").at("params"));
    nh::ModelParams fit = truth;
    for (std::size_t i = 0; i < fit.A.size(); ++i) {
        fit.W.data()[i] = fit.A.data()[i];
    }
    fs::create_directories(dir / "perfect");
    json s = io::read_json(dir / "s/params.json");
    io::write_json(dir / "perfect/summary.json",
                   json{{"algorithm", "map"}, {"K", 5}, {"mean_A", fit.W.data()}, {"std_A", std::vector<double>(25, 0.0)},
                        {"mean_W", fit.W.data()}, {"lambda0", fit.lambda0}});
    io::write_json(dir / "perfect/manifest.json", json{{"algorithm", "map"}});
    ASSERT_EQ(run("eval --fit " + p("perfect") + " --truth " + p("s/params.json") + " --out " + p("ev")), 0);
    const json row = io::read_json(dir / "ev/metrics.json").at("rows").at(0);
    EXPECT_DOUBLE_EQ(row.at("roc_auc").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(row.at("pr_auc").get<double>(), 1.0);
}

TEST_F(CliTest, BenchmarkSinglePointEmitsOneRow) {
    ASSERT_EQ(run("benchmark --T 300 --K 3 --B 1 --D 4 --grid 2 --sweeps 1 --out " + p("b")), 0);
    const std::string csv = io::read_file(dir / "b/benchmark.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    const json j = io::read_json(dir / "b/benchmark.json");
    ASSERT_EQ(j.at("rows").size(), 1U);
    EXPECT_GT(j.at("rows")[0].at("seconds_per_sweep").get<double>(), 0.0);
}

TEST_F(CliTest, ThresholdProducesBinaryCounts) {
    {
        std::ofstream f(dir / "probs.csv");
        f << "0.1,0.7\n0.95,0.2\n0.69,1.0\n";
    }
    ASSERT_EQ(run("threshold --probs " + p("probs.csv") + " --dt 0.5 --out " + p("t")), 0);
    const nh::CountMatrix S = io::read_counts(dir / "t/counts.csv");
    ASSERT_EQ(S.T, 3U);
    ASSERT_EQ(S.K, 2U);
    EXPECT_DOUBLE_EQ(S.dt, 0.5);
    const std::vector<nh::Count> expected{0, 1, 1, 0, 0, 1};
    EXPECT_EQ(S.data, expected);
}

TEST_F(CliTest, ErrorsAreReportedAsJson) {
    std::string err;
    EXPECT_EQ(run("simulate --K notanumber --out " + p("x"), &err), 2);
    EXPECT_EQ(json::parse(err).at("error").at("type"), "usage_error");

    EXPECT_NE(run("fit-gibbs --counts " + p("missing.csv") + " --out " + p("x"), &err), 0);
    EXPECT_TRUE(json::parse(err).at("error").contains("message"));

    {
        std::ofstream f(dir / "bad.csv");
        f << "1,2\n3\n";
    }
    EXPECT_NE(run("fit-vb --counts " + p("bad.csv") + " --out " + p("x"), &err), 0);
    EXPECT_TRUE(json::parse(err).contains("error"));

    // A strongly supercritical network diverges; a warning line precedes the error.
    EXPECT_EQ(run("simulate --K 3 --p 1 --radius 3 --T 5000 --out " + p("x"), &err), 3);
    std::istringstream lines(err);
    std::string first, last;
    std::getline(lines, first);
    std::getline(lines, last);
    EXPECT_EQ(json::parse(first).at("warning").at("type"), "unstable_network");
    EXPECT_EQ(json::parse(last).at("error").at("type"), "explosive_process");

    EXPECT_EQ(run("nonsense", &err), 2);
}

} // namespace
