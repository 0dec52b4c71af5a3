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


#include "corrnoise/simulator.hpp"

#include <gtest/gtest.h>

using namespace corrnoise;

namespace {

constexpr std::uint64_t GB = 1'000'000'000ULL;

CostModelConfig with_band(std::uint64_t band, std::uint64_t m = 1'000'000'000ULL) {
    CostModelConfig c;
    c.band = band;
    c.m = m;
    return c;
}

/// Every strategy the config supports.
std::vector<StrategyReport> all_reports(const CostModelConfig& c) {
    return compare_strategies(c).reports;
}

}

TEST(Simulator, DpSgdIsTrainOnly) {
    auto c = with_band(16);
    auto r = simulate_dp_sgd(c);
    EXPECT_DOUBLE_EQ(r.total_s, c.n * c.t_train_s);
    EXPECT_DOUBLE_EQ(r.ratio_vs_dpsgd, 1.0);
    EXPECT_EQ(r.components.gemv_gpu + r.components.gemv_cpu + r.components.gemv_nmp + r.components.transfer_main +
                  r.components.transfer_cxl + r.components.transfer_result,
              0.0);
}

TEST(Simulator, GpuResidentHistoryHasNoTransfer) {
    auto c = with_band(3, 100'000'000);
    auto r = simulate_gpu_gemv(c);
    EXPECT_EQ(r.placement.rows_gpu, 2u);
    EXPECT_EQ(r.components.transfer_main, 0.0);
    EXPECT_DOUBLE_EQ(r.per_iteration_s, c.t_train_s + double(c.history_bytes()) / c.gpu_gemv_Bps);
    EXPECT_TRUE(r.trivial_case);
}

TEST(Simulator, GpuGemvTransferIsLinearInOffloadedRows) {
    auto c = with_band(9);
    c.tiers.gpu_capacity_bytes = 0;
    c.tiers.gpu_training_reserve_bytes = 0;
    auto a = simulate_gpu_gemv(c);
    c.band = 17;
    auto b = simulate_gpu_gemv(c);
    EXPECT_DOUBLE_EQ(b.components.transfer_main, 2.0 * a.components.transfer_main);
}

TEST(Simulator, CpuGemvHidesBehindTraining) {
    auto c = with_band(4, 1'000'000);
    c.t_train_s = 1.0;
    auto r = simulate_cpu_gemv(c);
    EXPECT_DOUBLE_EQ(r.per_iteration_s, 1.0);
    auto zero = with_band(4, 0);
    zero.t_train_s = 0.5;
    EXPECT_DOUBLE_EQ(simulate_cpu_gemv(zero).per_iteration_s, 0.5);
}

TEST(Simulator, CpuContentionKnob) {
    auto c = with_band(16);
    auto full = simulate_cpu_gemv(c);
    c.cpu_core_fraction = 0.07;
    auto starved = simulate_cpu_gemv(c);
    EXPECT_GT(starved.total_s / full.total_s, 1.5);
    c.cpu_core_fraction = 0.0;
    EXPECT_THROW(simulate_cpu_gemv(c), InvalidArgument);
}

TEST(Simulator, NmpWithoutCxlEqualsCpuGemv) {
    for (std::uint64_t band : {2u, 8u, 32u}) {
        auto c = with_band(band);
        auto nmp = simulate_cocoon_nmp(c);
        auto cpu = simulate_cpu_gemv(c);
        ASSERT_EQ(nmp.placement.rows_cxl, 0u);
        EXPECT_EQ(nmp.components.train, cpu.components.train);
        EXPECT_EQ(nmp.components.gemv_gpu, cpu.components.gemv_gpu);
        EXPECT_EQ(nmp.components.gemv_cpu, cpu.components.gemv_cpu);
        EXPECT_EQ(nmp.components.gemv_nmp, cpu.components.gemv_nmp);
        EXPECT_EQ(nmp.components.transfer_main, cpu.components.transfer_main);
        EXPECT_EQ(nmp.components.transfer_cxl, cpu.components.transfer_cxl);
        EXPECT_EQ(nmp.components.transfer_result, cpu.components.transfer_result);
        EXPECT_EQ(nmp.total_s, cpu.total_s);
    }
}

TEST(Simulator, NmpInfiniteThroughputLeavesTransfers) {
    auto c = with_band(16, 10'000'000'000ULL);
    c.nmp_gemv_Bps = 1e300;
    auto r = simulate_cocoon_nmp(c);
    ASSERT_GT(r.placement.rows_cxl, 0u);
    EXPECT_NEAR(r.nmp_track_s, r.components.transfer_cxl, 1e-12);
}

TEST(Simulator, NmpBeatsBaselinesWhenHistorySpills) {
    auto c = with_band(16, 10'000'000'000ULL);
    auto nmp = simulate_cocoon_nmp(c);
    ASSERT_GT(nmp.placement.rows_cxl, 0u);
    EXPECT_LT(nmp.total_s, simulate_cpu_gemv(c).total_s);
    EXPECT_LT(nmp.total_s, simulate_gpu_gemv(c).total_s);
}

TEST(Simulator, EmbNeedsStatsAndTrivialFlag) {
    auto c = with_band(16);
    EXPECT_THROW(simulate_cocoon_emb(c), InvalidArgument);
    auto small = with_band(3, 100'000'000);
    small.emb = EmbStoreStats{10.0, 50'000'000, 16};
    EXPECT_TRUE(simulate_cocoon_emb(small).trivial_case);
    c.emb = EmbStoreStats{10.0, 900'000'000, 16};
    EXPECT_FALSE(simulate_cocoon_emb(c).trivial_case);
    c.emb = EmbStoreStats{10.0, 2'000'000'000, 16};
    EXPECT_THROW(simulate_cocoon_emb(c), InvalidArgument);
}

TEST(Simulator, EmbAllHotReducesToEagerBaselines) {
    auto c = with_band(16);
    c.emb = EmbStoreStats{0.0, 0, 16};
    auto r = simulate_cocoon_emb(c);
    EXPECT_LT(r.precompute_s, 1e-6);
    auto best = std::min(simulate_cpu_gemv(c).per_iteration_s, simulate_gpu_gemv(c).per_iteration_s);
    EXPECT_DOUBLE_EQ(r.per_iteration_s, best);
}

TEST(Simulator, EmbBandOneIsDpSgd) {
    auto c = with_band(1);
    c.emb = EmbStoreStats{100.0, 500'000'000, 16};
    EXPECT_DOUBLE_EQ(simulate_cocoon_emb(c).total_s, simulate_dp_sgd(c).total_s);
}

TEST(Simulator, RegenSmallAndQuadratic) {
    auto c = with_band(16);
    c.n = 1;
    auto r = simulate_regen(c);
    EXPECT_DOUBLE_EQ(r.total_s, c.t_train_s + double(c.history_bytes()) / c.gpu_gemv_Bps);
    c.n = 1000;
    const double a = regen_noise_seconds(c);
    c.n = 2000;
    const double b = regen_noise_seconds(c);
    EXPECT_NEAR(b / a, 4.0, 0.2);
    EXPECT_GT(simulate_regen(c).total_s, 10.0 * simulate_cpu_gemv(c).total_s);
}

TEST(Simulator, BandOneCollapsesEverything) {
    auto c = with_band(1);
    c.emb = EmbStoreStats{5.0, 100'000'000, 16};
    const double base = simulate_dp_sgd(c).total_s;
    for (const auto& r : all_reports(c)) {
        EXPECT_DOUBLE_EQ(r.total_s, base) << r.strategy;
    }
}

TEST(Simulator, TotalsNonDecreasingInBandAndModelSize) {
    const std::vector<std::uint64_t> bands{1, 2, 4, 8, 16, 32, 64, 96, 128};
    const std::vector<std::uint64_t> ms{100'000'000ULL, 1'000'000'000ULL, 3'000'000'000ULL};
    auto run = [](const CostModelConfig& c, const std::string& name) {
        if (name == "gpu-gemv") return simulate_gpu_gemv(c).per_iteration_s;
        if (name == "cpu-gemv") return simulate_cpu_gemv(c).per_iteration_s;
        if (name == "cocoon-nmp") return simulate_cocoon_nmp(c).per_iteration_s;
        return simulate_regen(c).per_iteration_s;
    };
    for (std::string name : {"gpu-gemv", "cpu-gemv", "cocoon-nmp", "regen"}) {
        for (auto m : ms) {
            double prev = 0.0;
            for (auto b : bands) {
                double v;
                try {
                    v = run(with_band(b, m), name);
                } catch (const CapacityExceeded&) {
                    break;
                }
                EXPECT_GE(v, prev) << name << " m=" << m << " band=" << b;
                prev = v;
            }
        }
        for (auto b : bands) {
            double prev = 0.0;
            for (auto m : ms) {
                double v;
                try {
                    v = run(with_band(b, m), name);
                } catch (const CapacityExceeded&) {
                    break;
                }
                EXPECT_GE(v, prev) << name << " m=" << m << " band=" << b;
                prev = v;
            }
        }
    }
}

TEST(Simulator, OverlapRules) {
    auto c = with_band(128);
    auto cpu = simulate_cpu_gemv(c);
    EXPECT_DOUBLE_EQ(cpu.per_iteration_s, std::max(cpu.train_track_s, cpu.host_track_s));
    auto nmp = simulate_cocoon_nmp(c);
    EXPECT_DOUBLE_EQ(nmp.per_iteration_s, std::max({nmp.train_track_s, nmp.host_track_s, nmp.nmp_track_s}));
    auto gpu = simulate_gpu_gemv(c);
    const auto& g = gpu.components;
    EXPECT_DOUBLE_EQ(gpu.per_iteration_s, g.train + g.gemv_gpu + g.transfer_main + g.transfer_cxl);
}

TEST(Simulator, RatiosScaleInvariant) {
    for (std::uint64_t band : {4u, 16u, 128u}) {
        auto c = with_band(band);
        c.emb = EmbStoreStats{1e6, 900'000'000, 64};
        auto scaled = c;
        const double k = 8.0;
        for (double* r : {&scaled.bw_pcie, &scaled.bw_main, &scaled.bw_cxl, &scaled.gpu_gemv_Bps, &scaled.cpu_gemv_Bps, &scaled.nmp_gemv_Bps}) {
            *r *= k;
        }
        scaled.t_train_s /= k;
        auto a = all_reports(c);
        auto b = all_reports(scaled);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_NEAR(a[i].ratio_vs_dpsgd, b[i].ratio_vs_dpsgd, 1e-12 * a[i].ratio_vs_dpsgd) << a[i].strategy;
        }
    }
}

TEST(Simulator, ComparisonRowsAndCsv) {
    auto c = with_band(16);
    auto cmp = compare_strategies(c);
    EXPECT_EQ(cmp.find("cocoon-nmp"), nullptr);
    EXPECT_EQ(cmp.find("cocoon-emb"), nullptr);
    ASSERT_NE(cmp.find("dp-sgd"), nullptr);
    EXPECT_EQ(cmp.find("dp-sgd")->ratio_vs_dpsgd, 1.0);
    EXPECT_NE(cmp.best, "dp-sgd");
    auto big = with_band(128);
    EXPECT_NE(compare_strategies(big).find("cocoon-nmp"), nullptr);

    const std::string header = csv_header();
    EXPECT_EQ(header,
              "strategy,b_hat,m,train_s,gemv_gpu_s,gemv_cpu_s,gemv_nmp_s,transfer_main_s,transfer_cxl_s,transfer_result_s,"
              "precompute_s,per_iteration_s,total_s,ratio_vs_dpsgd");
    for (const auto& r : cmp.reports) {
        auto row = csv_row(r, c);
        EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
        EXPECT_EQ(row.rfind(r.strategy, 0), 0u);
    }
    auto j = to_json(cmp.reports[1]);
    EXPECT_TRUE(j.contains("placement"));
}

TEST(Simulator, ConfigJson) {
    auto c = cost_model_from_json(nlohmann::json{{"band", 32}, {"dtype", "f64"}, {"tiers", {{"main_capacity_bytes", 1000}}}});
    EXPECT_EQ(c.band, 32u);
    EXPECT_EQ(c.width(), 8u);
    EXPECT_EQ(c.tiers.main_capacity_bytes, 1000u);
    EXPECT_EQ(c.tiers.gpu_capacity_bytes, CostModelConfig{}.tiers.gpu_capacity_bytes);
    EXPECT_THROW(cost_model_from_json(nlohmann::json{{"bogus", 1}}), ValidationError);
    auto back = cost_model_from_json(to_json(with_band(8)));
    EXPECT_EQ(back.band, 8u);
    EXPECT_EQ(back.tiers, with_band(8).tiers);
}

TEST(Simulator, Validation) {
    auto c = with_band(16);
    c.bw_pcie = 0.0;
    EXPECT_THROW(simulate_dp_sgd(c), InvalidArgument);
    c = with_band(0);
    EXPECT_THROW(simulate_cpu_gemv(c), InvalidArgument);
    (void)GB;
}
