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


#ifndef CORRNOISE_TRAINER_HPP
#define CORRNOISE_TRAINER_HPP

#include "common.hpp"
#include "emb.hpp"
#include "io.hpp"
#include "mixing.hpp"
#include "noise_engine.hpp"
#include "rng.hpp"
#include "trace.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

/**
 * @file trainer.hpp
 *
 * @brief Desk-scale embedding-table training loop with an eager and a lazy (coalesced) noise path.
 *
 * The toy gradient is `tanh(table[e])` for every entry accessed in the iteration and zero elsewhere, so it depends
 * only on the current values of accessed entries. Updates are plain SGD:
 * `table <- table - lr * (grad + noise_coefficient * zhat_t)`.
 */

namespace corrnoise {

template<typename T>
struct ToyModel {
    std::uint64_t num_entries = 0;
    std::size_t d_emb = 1;
    /// Row-major `num_entries x d_emb`.
    std::vector<T> table;
    double learning_rate = 0.1;
    double noise_coefficient = 1.0;

    void validate() const {
        if (d_emb == 0 || table.size() != num_entries * d_emb) {
            throw InvalidArgument("toy model table must be num_entries x d_emb");
        }
        for (auto v : table) {
            if (!std::isfinite(static_cast<double>(v))) {
                throw InvalidArgument("toy model table has non-finite values");
            }
        }
    }
};

/// Table initialised uniformly in [-scale, scale) from `seed`; `noise_coefficient = 1 / batch_size`.
template<typename T>
ToyModel<T> make_toy_model(std::uint64_t num_entries, std::size_t d_emb, double learning_rate, std::uint64_t batch_size,
                           std::uint64_t seed, double scale = 0.5) {
    ToyModel<T> model;
    model.num_entries = num_entries;
    model.d_emb = d_emb;
    model.learning_rate = learning_rate;
    model.noise_coefficient = 1.0 / static_cast<double>(std::max<std::uint64_t>(batch_size, 1));
    model.table.resize(num_entries * d_emb);
    CounterStream rng(seed, 0x7ab1e);
    for (auto& v : model.table) {
        v = static_cast<T>(scale * (2.0 * rng.uniform() - 1.0));
    }
    return model;
}

enum class TrainMode { eager, lazy };

inline const char* mode_name(TrainMode m) {
    return m == TrainMode::eager ? "eager" : "lazy";
}

template<typename T>
struct TrainRun {
    TrainMode mode = TrainMode::eager;
    std::uint64_t num_entries = 0;
    std::size_t d_emb = 1;
    std::vector<T> final_table;
    /// Rows of every accessed entry as seen by the gradient, in (iteration, entry) order.
    std::vector<T> access_values;
    /// Informational only.
    std::vector<double> iteration_seconds;
};

namespace detail {

template<typename T>
void check_run_inputs(const ToyModel<T>& model, const NoisePlan& plan, const MixingMatrix& c, const AccessTrace& trace) {
    model.validate();
    plan.validate();
    plan.check_matrix(c);
    if (trace.num_entries() != model.num_entries) {
        throw ValidationError("trace and model disagree on the entry count");
    }
    if (trace.iterations() != plan.n) {
        throw ValidationError("trace iterations != plan n");
    }
    if (plan.m != model.num_entries * model.d_emb) {
        throw ValidationError("plan m != num_entries * d_emb");
    }
}

/// Records the accessed rows and returns their gradients, row-major in access order.
template<typename T>
std::vector<double> toy_gradient(std::span<const T> table, std::span<const std::uint64_t> ids, std::size_t d_emb,
                                 std::vector<T>& log) {
    std::vector<double> grad(ids.size() * d_emb);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const T* row = table.data() + ids[k] * d_emb;
        for (std::size_t j = 0; j < d_emb; ++j) {
            log.push_back(row[j]);
            grad[k * d_emb + j] = std::tanh(static_cast<double>(row[j]));
        }
    }
    return grad;
}

}

/// Every entry receives the full correlated noise every iteration.
template<typename T>
TrainRun<T> train_eager(const ToyModel<T>& model, const NoisePlan& plan, const MixingMatrix& c, const AccessTrace& trace) {
    detail::check_run_inputs(model, plan, c, trace);
    const std::size_t d = model.d_emb;
    const double lr = model.learning_rate;
    const double coef = model.noise_coefficient;

    TrainRun<T> run;
    run.mode = TrainMode::eager;
    run.num_entries = model.num_entries;
    run.d_emb = d;
    run.final_table = model.table;
    auto& table = run.final_table;

    NoiseStream<T> stream(plan, c);
    std::vector<double> dense_grad(table.size());
    for (std::size_t t = 0; t < plan.n; ++t) {
        auto start = std::chrono::steady_clock::now();
        auto ids = trace.replay(t);
        auto grad = detail::toy_gradient<T>(table, ids, d, run.access_values);
        std::fill(dense_grad.begin(), dense_grad.end(), 0.0);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            std::copy_n(grad.begin() + static_cast<std::ptrdiff_t>(k * d), d, dense_grad.begin() + static_cast<std::ptrdiff_t>(ids[k] * d));
        }
        auto z = stream.next();
        for (std::size_t i = 0; i < table.size(); ++i) {
            table[i] = static_cast<T>(static_cast<double>(table[i]) - lr * (dense_grad[i] + coef * static_cast<double>(z.values[i])));
        }
        run.iteration_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return run;
}

/**
 * Hot entries take the eager path over their own coordinates; cold entries get only their gradient at access time
 * and receive their noise through the coalesced store. The store must have been built from the same
 * plan, matrix, trace and split.
 */
template<typename T>
TrainRun<T> train_lazy(const ToyModel<T>& model, const NoisePlan& plan, const MixingMatrix& c, const AccessTrace& trace,
                       const HotColdSplit& split, const CoalescedNoiseStore<T>& store) {
    detail::check_run_inputs(model, plan, c, trace);
    store.validate();
    if (split.num_entries() != model.num_entries) {
        throw ValidationError("split and model disagree on the entry count");
    }
    if (store.num_entries != model.num_entries || store.n != plan.n || store.d_emb != model.d_emb) {
        throw ValidationError("store shape does not match the run");
    }
    if (store.provenance != store_provenance(plan, c, trace, split, model.d_emb)) {
        throw ValidationError("store provenance mismatch: built from different plan, matrix, trace or split");
    }
    const std::size_t d = model.d_emb;
    const double lr = model.learning_rate;
    const double coef = model.noise_coefficient;

    TrainRun<T> run;
    run.mode = TrainMode::lazy;
    run.num_entries = model.num_entries;
    run.d_emb = d;
    run.final_table = model.table;
    auto& table = run.final_table;

    const auto hot = split.hot_entries();
    std::vector<std::uint64_t> hot_coords;
    hot_coords.reserve(hot.size() * d);
    for (auto e : hot) {
        for (std::size_t j = 0; j < d; ++j) {
            hot_coords.push_back(e * d + j);
        }
    }
    NoiseStream<T> hot_stream(plan, c, Coordinates::list(hot_coords));
    LazyNoiseApplier<T> applier(store, -lr * coef);

    std::vector<double> dense_grad(table.size());
    for (std::size_t t = 0; t < plan.n; ++t) {
        auto start = std::chrono::steady_clock::now();
        applier.apply(table, t);
        auto ids = trace.replay(t);
        auto grad = detail::toy_gradient<T>(table, ids, d, run.access_values);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            std::copy_n(grad.begin() + static_cast<std::ptrdiff_t>(k * d), d, dense_grad.begin() + static_cast<std::ptrdiff_t>(ids[k] * d));
        }
        auto z = hot_stream.next();
        for (std::size_t h = 0; h < hot_coords.size(); ++h) {
            auto i = hot_coords[h];
            table[i] = static_cast<T>(static_cast<double>(table[i]) - lr * (dense_grad[i] + coef * static_cast<double>(z.values[h])));
        }
        for (auto e : ids) {
            if (split.hot[e]) {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                auto i = e * d + j;
                table[i] = static_cast<T>(static_cast<double>(table[i]) - lr * dense_grad[i]);
            }
        }
        for (auto e : ids) {
            std::fill_n(dense_grad.begin() + static_cast<std::ptrdiff_t>(e * d), d, 0.0);
        }
        run.iteration_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    applier.apply(table, plan.n);
    return run;
}

struct TableDiff {
    double max_abs = 0.0;
    /// `max_abs` over the largest magnitude in either table.
    double max_rel = 0.0;
    /// Same pair for the values seen at access points.
    double access_max_abs = 0.0;
    double access_max_rel = 0.0;
};

namespace detail {

template<typename T>
void diff_into(std::span<const T> a, std::span<const T> b, double& max_abs, double& max_rel) {
    double scale = 0.0;
    max_abs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double x = static_cast<double>(a[i]);
        double y = static_cast<double>(b[i]);
        max_abs = std::max(max_abs, std::abs(x - y));
        scale = std::max({scale, std::abs(x), std::abs(y)});
    }
    max_rel = scale > 0.0 ? max_abs / scale : max_abs;
}

}

template<typename T>
TableDiff compare_runs(const TrainRun<T>& a, const TrainRun<T>& b) {
    if (a.final_table.size() != b.final_table.size() || a.d_emb != b.d_emb) {
        throw InvalidArgument("compare_runs: table shapes differ");
    }
    TableDiff d;
    detail::diff_into<T>(a.final_table, b.final_table, d.max_abs, d.max_rel);
    if (a.access_values.size() == b.access_values.size()) {
        detail::diff_into<T>(a.access_values, b.access_values, d.access_max_abs, d.access_max_rel);
    } else {
        d.access_max_abs = d.access_max_rel = std::numeric_limits<double>::infinity();
    }
    return d;
}

/// Table file: 16-byte header `{"CNT1", u32 dtype, u32 rows, u32 cols}` then the row-major values.
template<typename T>
void save_table(std::span<const T> table, std::uint64_t rows, std::size_t cols, const std::filesystem::path& path) {
    if (rows > UINT32_MAX || cols > UINT32_MAX || table.size() != rows * cols) {
        throw InvalidArgument("table shape does not fit the table format");
    }
    io::write_atomic(path, [&](std::ostream& out) {
        io::put_magic(out, "CNT1");
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype_of<T>()));
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(cols));
        io::put_span<T>(out, table);
    });
}

template<typename T>
std::vector<T> load_table(const std::filesystem::path& path, std::uint64_t& rows, std::size_t& cols) {
    auto in = io::open_input(path);
    io::expect_magic(in, "CNT1");
    if (dtype_from_code(io::get<std::uint32_t>(in)) != dtype_of<T>()) {
        throw ValidationError("table dtype mismatch");
    }
    rows = io::get<std::uint32_t>(in);
    cols = io::get<std::uint32_t>(in);
    std::vector<T> values(rows * cols);
    io::get_span<T>(in, std::span<T>(values));
    return values;
}

}

#endif
