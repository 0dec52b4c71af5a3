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


#include "corrnoise/noise_engine.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace corrnoise;

namespace {

NoisePlan plan_for(const MixingMatrix& c, std::size_t m, std::uint64_t seed, Dtype dtype = Dtype::f64) {
    NoisePlan p;
    p.seed = seed;
    p.m = m;
    p.n = c.n();
    p.band = c.band();
    p.sigma = 1.3;
    p.dtype = dtype;
    return p;
}

}

TEST(NoisePlan, Validation) {
    NoisePlan p;
    p.m = 4;
    p.n = 4;
    p.band = 2;
    EXPECT_NO_THROW(p.validate());
    p.band = 5;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p.band = 2;
    p.sigma = 0.0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p.sigma = 1.0;
    p.m = 0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p.m = 4;
    EXPECT_THROW(p.check_matrix(banded_toeplitz({1.0, 0.5, 0.1}, 4)), InvalidArgument);
}

TEST(Coordinates, RangeAndList) {
    auto r = Coordinates::range(3, 7);
    EXPECT_EQ(r.size(), 4u);
    EXPECT_EQ(r[0], 3u);
    EXPECT_EQ(r.extent(), 7u);
    auto l = Coordinates::list({1, 5, 9});
    EXPECT_EQ(l[2], 9u);
    EXPECT_EQ(l.extent(), 10u);
    EXPECT_THROW(Coordinates::list({1, 1}), InvalidArgument);
    EXPECT_THROW(Coordinates::range(4, 2), OutOfRange);
}

TEST(RawNoise, ChunkingIsInvariant) {
    auto c = identity_matrix(4);
    auto p = plan_for(c, 100, 9);
    auto whole = sample_raw_noise<double>(p, 2, 0, 100);
    auto a = sample_raw_noise<double>(p, 2, 0, 37);
    auto b = sample_raw_noise<double>(p, 2, 37, 100);
    a.insert(a.end(), b.begin(), b.end());
    EXPECT_EQ(whole, a);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_EQ(whole[i], p.sigma * standard_normal(9, 2, i));
    }
    EXPECT_THROW(sample_raw_noise<double>(p, 2, 0, 101), OutOfRange);
}

TEST(NoiseHistory, RingSlotsAndOrder) {
    NoiseHistory<double> h(4, 2);
    EXPECT_EQ(h.slots(), 3u);
    for (std::size_t s = 0; s < 5; ++s) {
        std::vector<double> v{double(s), -double(s)};
        h.store(s, v);
    }
    EXPECT_EQ(h.filled(), 3u);
    EXPECT_EQ(h.step(4)[0], 4.0);
    EXPECT_EQ(h.slot(4 % 3)[0], 4.0);
    EXPECT_EQ(h.step(2)[1], -2.0);
    EXPECT_THROW(h.step(1), StateError);
    std::vector<double> v{0, 0};
    EXPECT_THROW(h.store(7, v), StateError);
}

TEST(NoiseHistory, BandOneKeepsNoRows) {
    NoiseHistory<float> h(1, 8);
    EXPECT_EQ(h.slots(), 0u);
    EXPECT_TRUE(h.raw().empty());
    std::vector<float> v(8, 1.0f);
    h.store(0, v);
    EXPECT_EQ(h.steps_completed(), 1u);
}

TEST(NoiseHistory, SnapshotRoundTrip) {
    auto c = banded_toeplitz({1.0, 0.4, -0.2}, 10);
    auto p = plan_for(c, 16, 4);
    NoiseStream<double> s(p, c);
    for (int i = 0; i < 6; ++i) {
        s.next();
    }
    std::stringstream buf;
    s.history().export_snapshot(buf);
    EXPECT_EQ(buf.str().size(), 32u + 2 * 16 * sizeof(double));
    auto back = NoiseHistory<double>::import_snapshot(buf);
    EXPECT_EQ(back, s.history());
    std::stringstream again;
    back.export_snapshot(again);
    std::stringstream first;
    s.history().export_snapshot(first);
    EXPECT_EQ(again.str(), first.str());

    std::stringstream wrong(first.str());
    EXPECT_THROW(NoiseHistory<float>::import_snapshot(wrong), ValidationError);
}

TEST(NoiseStream, MatchesDenseForwardSubstitution) {
    for (std::size_t band : {1u, 2u, 3u, 7u}) {
        auto c = oracle::random_banded(24, band, 100 + band);
        auto p = plan_for(c, 40, 17);
        auto z = oracle::raw_noise(17, p.sigma, 24, 40);
        auto expect = oracle::forward_substitute(c, z);
        NoiseStream<double> s(p, c);
        oracle::Matrix got;
        while (!s.done()) {
            got.push_back(oracle::as_double(s.next().values));
        }
        EXPECT_LE(oracle::max_rel_error(got, expect), 1e-12) << "band " << band;
        EXPECT_LE(oracle::max_rel_error(oracle::multiply(c, got), z), 1e-12) << "band " << band;
    }
}

TEST(NoiseStream, BandOneIsRawNoise) {
    auto c = identity_matrix(12);
    auto p = plan_for(c, 33, 8);
    NoiseStream<double> s(p, c);
    for (std::size_t t = 0; t < 12; ++t) {
        EXPECT_EQ(s.next().values, sample_raw_noise<double>(p, t, 0, 33));
    }
}

TEST(NoiseStream, SubsetEqualsSliceOfFullRun) {
    auto c = oracle::random_banded(16, 4, 2);
    auto p = plan_for(c, 50, 21);
    NoiseStream<double> full(p, c);
    std::vector<std::uint64_t> ids{0, 7, 8, 30, 49};
    NoiseStream<double> part(p, c, Coordinates::list(ids));
    while (!full.done()) {
        auto a = full.next();
        auto b = part.next();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            EXPECT_EQ(b.values[k], a.values[ids[k]]);
        }
    }
}

TEST(NoiseStream, RegenOracleBitEqual) {
    auto c = oracle::random_banded(20, 5, 77);
    auto p = plan_for(c, 32, 5);
    NoiseStream<double> s(p, c);
    for (std::size_t t = 0; t < 20; ++t) {
        EXPECT_EQ(s.next().values, regen_oracle<double>(p, c, t).values);
    }
    EXPECT_THROW(regen_oracle<double>(p, c, 20), OutOfRange);
}

TEST(NoiseStream, Float32CloseToFloat64) {
    auto c = oracle::random_banded(20, 4, 3);
    auto p64 = plan_for(c, 64, 1);
    auto p32 = plan_for(c, 64, 1, Dtype::f32);
    NoiseStream<double> a(p64, c);
    NoiseStream<float> b(p32, c);
    oracle::Matrix x, y;
    while (!a.done()) {
        x.push_back(oracle::as_double(a.next().values));
        y.push_back(oracle::as_double(b.next().values));
    }
    EXPECT_LE(oracle::max_rel_error(y, x), 1e-5);
}

TEST(NoiseStream, RejectsMismatches) {
    auto c = banded_toeplitz({1.0, 0.5}, 8);
    auto p = plan_for(c, 10, 1);
    EXPECT_THROW(NoiseStream<float>(p, c), InvalidArgument);
    auto other = banded_toeplitz({1.0, 0.5, 0.2}, 8);
    EXPECT_THROW(NoiseStream<double>(p, other), InvalidArgument);
    EXPECT_THROW(NoiseStream<double>(p, c, Coordinates::range(0, 11)), OutOfRange);
}

TEST(NoiseStream, HistoryHoldsLastBandMinusOneSteps) {
    auto c = oracle::random_banded(12, 4, 8);
    auto p = plan_for(c, 6, 2);
    NoiseStream<double> s(p, c);
    std::vector<std::vector<double> > outs;
    while (!s.done()) {
        outs.push_back(s.next().values);
    }
    const auto& h = s.history();
    EXPECT_EQ(h.filled(), 3u);
    for (std::size_t step = 9; step < 12; ++step) {
        auto row = h.step(step);
        EXPECT_EQ(std::vector<double>(row.begin(), row.end()), outs[step]);
    }
}
