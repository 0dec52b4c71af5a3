// Copyright 2026 The corrnoise Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end tests of the command-line driver: exit codes, config handling and output files.

#include "corrnoise/emb.hpp"
#include "corrnoise/simulator.hpp"
#include "oracles.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = oracle::scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
    }

    json read_json(const std::string& name) const {
        std::ifstream in(path(name));
        return json::parse(in);
    }

    Result run(const std::string& args, const std::string& env = "") const {
        const auto log = path("stdout.log");
        std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" CORRNOISE_CLI "' " + args + " > '" + log.string() + "' 2>&1";
        int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.output = oracle::slurp(log);
        return r;
    }

    fs::path dir_;
};

const char* toy_trace_text = "#entries=3\n0:1\n1:2\n2:1\n3:0,2\n";

}

TEST_F(Cli, NoSubcommandIsValidationError) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, MissingConfigIsIoError) {
    EXPECT_EQ(run("verify -c nope.json").code, 3);
}

TEST_F(Cli, MalformedConfigIsValidationError) {
    write("bad.json", "{ not json");
    EXPECT_EQ(run("verify -c bad.json").code, 1);
}

TEST_F(Cli, GenTraceDeterministicAndInfeasible) {
    write("t.json", R"({"num_entries": 50, "iterations": 10, "batch_size": 4, "pooling": 2, "zipf_alpha": 1.1, "seed": 4, "output": "a.txt"})");
    ASSERT_EQ(run("gen-trace -c t.json").code, 0);
    ASSERT_EQ(run("gen-trace -c t.json --set output=b.txt").code, 0);
    EXPECT_EQ(oracle::slurp(path("a.txt")), oracle::slurp(path("b.txt")));
    EXPECT_FALSE(fs::exists(path("a.txt.tmp")));

    auto r = run("gen-trace -c t.json --set num_entries=1000");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("batch_size * pooling * iterations"), std::string::npos);
}

TEST_F(Cli, GenTraceAlphaSweepNamesFiles) {
    write("t.json", R"({"num_entries": 50, "iterations": 10, "batch_size": 4, "pooling": 2, "zipf_alpha": [0.5, 1.2], "seed": 4, "output": "z.txt.gz"})");
    ASSERT_EQ(run("gen-trace -c t.json").code, 0);
    EXPECT_TRUE(fs::exists(path("z_alpha0.5.txt.gz")));
    EXPECT_TRUE(fs::exists(path("z_alpha1.2.txt.gz")));
    EXPECT_EQ(corrnoise::ingest_trace_file(path("z_alpha0.5.txt.gz")).num_entries(), 50u);
}

TEST_F(Cli, GenMixingWritesLoadableMatrix) {
    write("m.json", R"({"kind": "random", "n": 12, "band": 4, "seed": 2})");
    ASSERT_EQ(run("gen-mixing -c m.json --set output=mix.json").code, 0);
    auto c = corrnoise::load_matrix(read_json("mix.json"));
    EXPECT_EQ(c.n(), 12u);
    EXPECT_EQ(c.band(), 4u);
    EXPECT_EQ(run("gen-mixing -c m.json --set kind=weird").code, 1);
}

TEST_F(Cli, PrecomputeToyStats) {
    write("toy.txt", toy_trace_text);
    write("p.json", R"({"plan": {"seed": 1, "band": 1, "dtype": "f64"}, "mixing": {"n": 4, "band": 1, "toeplitz": [1.0]},
                        "trace": "toy.txt", "d_emb": 2, "store_output": "toy.cns", "stats_output": "stats.json"})");
    ASSERT_EQ(run("precompute -c p.json").code, 0);
    auto stats = read_json("stats.json");
    EXPECT_EQ(stats["measured"]["nnz"], 7);
    EXPECT_EQ(stats["measured"]["avg_noise_entries"], 1.75);
    // footprint stat matches the payload section of the file
    const auto size = fs::file_size(path("toy.cns"));
    EXPECT_EQ(stats["measured"]["file_bytes"].get<std::uint64_t>(), size);
    EXPECT_EQ(stats["measured"]["payload_bytes"].get<std::uint64_t>(),
              size - corrnoise::CoalescedNoiseStore<double>::header_bytes - stats["measured"]["index_bytes"].get<std::uint64_t>());
    EXPECT_EQ(stats["measured"]["payload_bytes"], 7 * 2 * 8);
}

TEST_F(Cli, PrecomputeAllHotWarns) {
    write("toy.txt", toy_trace_text);
    write("p.json", R"({"plan": {"band": 1}, "mixing": {"n": 4, "band": 1, "toeplitz": [1.0]}, "trace": "toy.txt", "threshold": 0})");
    auto r = run("precompute -c p.json");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("warning"), std::string::npos);
    EXPECT_EQ(corrnoise::peek_store_header(path("store.cns")).nnz, 0u);
}

TEST_F(Cli, PrecomputeIsReproducibleAcrossThreads) {
    write("p.json", R"({"plan": {"seed": 3, "band": 3, "dtype": "f32"}, "mixing": {"n": 20, "band": 3, "toeplitz": [1.0, -0.4, 0.2]},
                        "trace": {"num_entries": 60, "iterations": 20, "batch_size": 4, "pooling": 2, "zipf_alpha": 1.1, "seed": 2},
                        "d_emb": 4, "threshold": 6, "tiles": 4, "store_output": "a.cns"})");
    ASSERT_EQ(run("precompute -c p.json").code, 0);
    ASSERT_EQ(run("precompute -c p.json --set store_output=b.cns", "CORRNOISE_THREADS=3").code, 0);
    EXPECT_EQ(oracle::slurp(path("a.cns")), oracle::slurp(path("b.cns")));
    EXPECT_EQ(run("precompute -c p.json --set tile_budget_bytes=10").code, 1);
    EXPECT_EQ(run("precompute -c p.json --set mixing.band=2").code, 1);
}

TEST_F(Cli, VerifyPassesAndDetectsCorruption) {
    write("v.json", R"({"report": "report.json"})");
    auto ok = run("verify -c v.json");
    EXPECT_EQ(ok.code, 0) << ok.output;
    EXPECT_TRUE(read_json("report.json")["passed"].get<bool>());
    auto bad = run("verify -c v.json --set corrupt_store=true");
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.output.find("FAIL eager-lazy"), std::string::npos);
    EXPECT_EQ(run("verify --set band=1").code, 0);
}

TEST_F(Cli, SimulateSweep) {
    write("s.json", R"({"cost_model": {}, "sweep": {"cost_model.band": [1, 2, 4, 8, 16, 32, 64, 128]},
                        "csv_output": "out.csv", "json_output": "out.json"})");
    ASSERT_EQ(run("simulate -c s.json").code, 0);
    auto doc = read_json("out.json");
    ASSERT_EQ(doc["modeled"].size(), 8u);
    std::vector<std::string> best;
    for (const auto& point : doc["modeled"]) {
        bool has_nmp = false;
        for (const auto& r : point["reports"]) {
            if (r["strategy"] == "dp-sgd") {
                EXPECT_EQ(r["ratio_vs_dpsgd"], 1.0);
            }
            if (r["strategy"] == "cocoon-nmp") {
                has_nmp = true;
                EXPECT_GT(r["placement"]["rows_cxl"].get<int>(), 0);
            }
        }
        EXPECT_EQ(has_nmp, point["config"]["band"] == 128);
        best.push_back(point["best"]);
    }
    EXPECT_EQ(best[1], "gpu-gemv");
    EXPECT_EQ(best[6], "cpu-gemv");
    auto csv = oracle::slurp(path("out.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), corrnoise::csv_header());
}

TEST_F(Cli, SimulateOverridesAreStrict) {
    write("s.json", R"({"cost_model": {"tiers": {"main_capacity_bytes": 1000000000000}}})");
    EXPECT_EQ(run("simulate -c s.json --set cost_model.band=8").code, 0);
    EXPECT_EQ(run("simulate -c s.json --set cost_model.bogus=8").code, 1);
    EXPECT_EQ(run("simulate -c s.json --set cost_model.tiers=8").code, 1);
    EXPECT_EQ(run("simulate -c s.json --set 'cost_model.band=[1,2]'").code, 1);
    EXPECT_EQ(run("simulate -c s.json --set nodots").code, 1);
    EXPECT_EQ(run("simulate -c s.json --set cost_model.bw_pcie=0").code, 1);
}

TEST_F(Cli, SimulateWithTraceStats) {
    write("s.json", R"({"cost_model": {"m": 100000000},
                        "emb_from_trace": {"trace": {"num_entries": 2000, "iterations": 50, "batch_size": 64, "pooling": 2, "zipf_alpha": 1.05, "seed": 1},
                                           "d_emb": 16, "threshold": 10, "scale": 3000},
                        "json_output": "o.json"})");
    ASSERT_EQ(run("simulate -c s.json").code, 0);
    bool has_emb = false;
    const auto doc = read_json("o.json");
    for (const auto& r : doc["modeled"][0]["reports"]) {
        has_emb = has_emb || r["strategy"] == "cocoon-emb";
    }
    EXPECT_TRUE(has_emb);
}

TEST_F(Cli, TrainToyModes) {
    write("t.json", R"({"plan": {"seed": 3, "band": 3, "sigma": 0.5}, "mixing": {"n": 16, "band": 3, "toeplitz": [1.0, -0.5, 0.25]},
                        "trace": {"num_entries": 40, "iterations": 16, "batch_size": 4, "pooling": 2, "zipf_alpha": 1.2, "seed": 2},
                        "d_emb": 3, "threshold": 4, "report": "r.json", "eager_table": "e.bin", "lazy_table": "l.bin"})");
    auto both = run("train-toy -c t.json");
    ASSERT_EQ(both.code, 0) << both.output;
    auto rep = read_json("r.json");
    EXPECT_TRUE(rep["equivalent"].get<bool>());
    EXPECT_LE(rep["max_rel_diff"].get<double>(), 1e-9);
    EXPECT_NE(both.output.find("max relative diff"), std::string::npos);

    ASSERT_EQ(run("train-toy -c t.json --set mode=eager --set eager_table=e2.bin").code, 0);
    EXPECT_EQ(oracle::slurp(path("e.bin")), oracle::slurp(path("e2.bin")));
    EXPECT_EQ(run("train-toy -c t.json --set mode=sideways").code, 1);
}

TEST_F(Cli, TrainToyRefusesForeignStore) {
    const std::string common = R"("mixing": {"n": 16, "band": 3, "toeplitz": [1.0, -0.5, 0.25]},
                        "trace": {"num_entries": 40, "iterations": 16, "batch_size": 4, "pooling": 2, "zipf_alpha": 1.2, "seed": 2},
                        "d_emb": 3)";
    write("p.json", R"({"plan": {"seed": 9, "band": 3}, "store_output": "other.cns", )" + common + "}");
    ASSERT_EQ(run("precompute -c p.json").code, 0);
    write("t.json", R"({"plan": {"seed": 3, "band": 3}, "store": "other.cns", "mode": "lazy", )" + common + "}");
    auto r = run("train-toy -c t.json");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("provenance"), std::string::npos);
    EXPECT_EQ(run("train-toy -c t.json --set plan.seed=9").code, 0);
    EXPECT_EQ(run("train-toy -c t.json --set store=missing.cns").code, 3);
}
