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


#ifndef CORRNOISE_VERIFY_HPP
#define CORRNOISE_VERIFY_HPP

#include "emb.hpp"
#include "mixing.hpp"
#include "noise_engine.hpp"
#include "rng.hpp"
#include "trace.hpp"
#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file verify.hpp
 *
 * @brief Self-check suites run by `corrnoise verify`: factorization, DP-SGD reduction, regeneration oracle,
 * tiling invariance, coalescing conservation and eager/lazy training equivalence.
 */

namespace corrnoise {

/**
 * Random banded matrix with `|diag| in [min_abs_diag, min_abs_diag + 1]` and off-diagonal row mass below
 * `0.9 |diag|`, so the recursion stays bounded over long runs.
 */
inline MixingMatrix random_banded_matrix(std::size_t n, std::size_t band, std::uint64_t seed, double min_abs_diag = 0.5) {
    CounterStream rng(seed, 0xc0ef);
    std::vector<std::vector<double> > coeffs(n);
    std::vector<double> diag(n);
    for (std::size_t t = 0; t < n; ++t) {
        double mag = min_abs_diag + rng.uniform();
        diag[t] = rng.uniform() < 0.5 ? -mag : mag;
        auto len = std::min(t, band - 1);
        std::vector<double> raw(len);
        double total = 0.0;
        for (auto& v : raw) {
            v = 2.0 * rng.uniform() - 1.0;
            total += std::abs(v);
        }
        const double budget = 0.9 * mag * rng.uniform();
        for (auto& v : raw) {
            v = total > 0.0 ? v / total * budget : 0.0;
        }
        coeffs[t] = std::move(raw);
    }
    return MixingMatrix(n, band, std::move(coeffs), std::move(diag));
}

/**
 * Backward error of a stacked noise sequence: for every step, `max_i |sum_tau C[t,t-tau] zhat_{t-tau,i} - z_{t,i}|`
 * over `max_i (sum_tau |C[t,t-tau]| |zhat_{t-tau,i}| + |z_{t,i}|)`, maximised over steps.
 */
template<typename T>
double factorization_error(const MixingMatrix& c, const std::vector<std::vector<T> >& zhat, const std::vector<std::vector<T> >& z) {
    double worst = 0.0;
    for (std::size_t t = 0; t < zhat.size(); ++t) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < zhat[t].size(); ++i) {
            double lhs = c.diag(t) * static_cast<double>(zhat[t][i]);
            double mag = std::abs(lhs) + std::abs(static_cast<double>(z[t][i]));
            auto co = c.coeffs(t);
            for (std::size_t k = 0; k < co.size(); ++k) {
                double term = co[k] * static_cast<double>(zhat[t - 1 - k][i]);
                lhs += term;
                mag += std::abs(term);
            }
            num = std::max(num, std::abs(lhs - static_cast<double>(z[t][i])));
            den = std::max(den, mag);
        }
        worst = std::max(worst, den > 0.0 ? num / den : num);
    }
    return worst;
}

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::uint64_t seed = 7;
    std::size_t n = 24;
    std::size_t m = 96;
    std::size_t band = 4;
    std::uint64_t num_entries = 24;
    std::size_t d_emb = 4;
    std::uint64_t threshold = 6;
    double zipf_alpha = 1.05;
    /// Flip one stored value before the eager/lazy comparison (negative control).
    bool corrupt_store = false;
};

namespace detail {

inline SuiteResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    SuiteResult r;
    r.name = name;
    auto start = std::chrono::steady_clock::now();
    try {
        auto [ok, detail] = body();
        r.passed = ok;
        r.detail = std::move(detail);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline std::string fmt(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

}

inline std::vector<SuiteResult> run_verification(const VerifyOptions& opt) {
    std::vector<SuiteResult> out;
    const std::size_t band = std::max<std::size_t>(1, std::min(opt.band, opt.n));

    out.push_back(detail::timed("factorization", [&] {
        NoisePlan plan{opt.seed, opt.m, opt.n, band, 1.0, Dtype::f64};
        auto c = random_banded_matrix(opt.n, band, opt.seed);
        NoiseStream<double> stream(plan, c);
        std::vector<std::vector<double> > zhat, z;
        for (std::size_t t = 0; t < opt.n; ++t) {
            zhat.push_back(stream.next().values);
            z.push_back(sample_raw_noise<double>(plan, t, 0, opt.m));
        }
        double err = factorization_error(c, zhat, z);
        return std::pair{err <= 1e-9, "max backward error " + detail::fmt(err)};
    }));

    out.push_back(detail::timed("dp-sgd-reduction", [&] {
        NoisePlan plan{opt.seed, opt.m, opt.n, 1, 1.0, Dtype::f64};
        auto c = identity_matrix(opt.n);
        NoiseStream<double> stream(plan, c);
        for (std::size_t t = 0; t < opt.n; ++t) {
            if (stream.next().values != sample_raw_noise<double>(plan, t, 0, opt.m)) {
                return std::pair{false, "step " + std::to_string(t) + " differs from raw noise"};
            }
        }
        return std::pair{true, std::string("band 1 output equals raw noise")};
    }));

    out.push_back(detail::timed("regen-oracle", [&] {
        NoisePlan plan{opt.seed, opt.m, opt.n, band, 1.0, Dtype::f64};
        auto c = random_banded_matrix(opt.n, band, opt.seed + 1);
        NoiseStream<double> stream(plan, c);
        for (std::size_t t = 0; t < opt.n; ++t) {
            if (stream.next().values != regen_oracle<double>(plan, c, t).values) {
                return std::pair{false, "step " + std::to_string(t) + " differs"};
            }
        }
        return std::pair{true, std::string("streaming output bit-equal to regeneration")};
    }));

    TraceConfig tc{opt.num_entries, opt.n, 4, 1, opt.zipf_alpha, opt.seed};
    tc.batch_size = std::max<std::uint64_t>(4, (opt.num_entries + opt.n - 1) / opt.n);
    const auto trace = generate_zipf_trace(tc);
    const auto stats = frequency_histogram(trace);
    const auto split = split_hot_cold(stats, opt.threshold);
    NoisePlan emb_plan{opt.seed, opt.num_entries * opt.d_emb, opt.n, band, 1.0, Dtype::f64};
    const auto emb_c = random_banded_matrix(opt.n, band, opt.seed + 2);
    const auto cold = split.cold_entries().size();

    out.push_back(detail::timed("tiling-invariance", [&] {
        auto whole = precompute_coalesced<double>(emb_plan, emb_c, trace, split, TileSpec::for_tile_count(1, cold, opt.d_emb));
        for (std::size_t k : {std::size_t{2}, std::size_t{5}, std::max<std::size_t>(cold, 1)}) {
            auto tiled = precompute_coalesced<double>(emb_plan, emb_c, trace, split, TileSpec::for_tile_count(k, cold, opt.d_emb));
            if (!(tiled == whole)) {
                return std::pair{false, std::to_string(k) + "-tile store differs from single tile"};
            }
        }
        return std::pair{true, "nnz " + std::to_string(whole.nnz()) + " identical across tilings"};
    }));

    out.push_back(detail::timed("coalescing-conservation", [&] {
        auto store = precompute_coalesced<double>(emb_plan, emb_c, trace, split, TileSpec::for_tile_count(1, cold, opt.d_emb));
        std::vector<double> sums(emb_plan.m, 0.0), expect(emb_plan.m, 0.0);
        for (std::size_t col = 0; col < store.n; ++col) {
            for (auto k = store.col_ptr[col]; k < store.col_ptr[col + 1]; ++k) {
                auto v = store.value(k);
                for (std::size_t j = 0; j < opt.d_emb; ++j) {
                    sums[store.row_idx[k] * opt.d_emb + j] += v[j];
                }
            }
        }
        NoiseStream<double> stream(emb_plan, emb_c);
        for (std::size_t t = 0; t < opt.n; ++t) {
            auto z = stream.next();
            for (std::size_t i = 0; i < emb_plan.m; ++i) {
                expect[i] += z.values[i];
            }
        }
        double worst = 0.0;
        for (auto e : split.cold_entries()) {
            for (std::size_t j = 0; j < opt.d_emb; ++j) {
                auto i = e * opt.d_emb + j;
                worst = std::max(worst, std::abs(sums[i] - expect[i]) / std::max(1.0, std::abs(expect[i])));
            }
        }
        return std::pair{worst <= 1e-9, "max relative deviation " + detail::fmt(worst)};
    }));

    out.push_back(detail::timed("eager-lazy", [&] {
        auto store = precompute_coalesced<double>(emb_plan, emb_c, trace, split, TileSpec::for_tile_count(2, cold, opt.d_emb));
        if (opt.corrupt_store && !store.values.empty()) {
            store.values[store.values.size() / 2] += 1.0;
        }
        auto model = make_toy_model<double>(opt.num_entries, opt.d_emb, 0.05, tc.batch_size, opt.seed + 3);
        auto eager = train_eager(model, emb_plan, emb_c, trace);
        auto lazy = train_lazy(model, emb_plan, emb_c, trace, split, store);
        auto d = compare_runs(eager, lazy);
        bool ok = d.max_rel <= 1e-9 && d.access_max_rel <= 1e-9;
        return std::pair{ok, "max relative table difference " + detail::fmt(d.max_rel) + ", at access points " +
                                 detail::fmt(d.access_max_rel)};
    }));

    return out;
}

}

#endif
