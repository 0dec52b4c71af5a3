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


#ifndef CORRNOISE_EMB_HPP
#define CORRNOISE_EMB_HPP

#include "common.hpp"
#include "io.hpp"
#include "mixing.hpp"
#include "noise_engine.hpp"
#include "trace.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

/**
 * @file emb.hpp
 *
 * @brief Pre-computed, coalesced correlated noise for embedding tables.
 *
 * Entries are split into hot (eager noise every iteration) and cold. For a cold entry, the noise owed over
 * iterations it does not touch is summed and applied in one go just before its next access, or after training.
 *
 * Event timing: an entry accessed at iteration `t > 0` receives, at the end of iteration `t - 1`, the sum of
 * `zhat_s` over `s` in `[previous access, t)` (from 0 for the first access). After the last iteration it receives
 * the sum over `[last access, n)`. The noise of an access iteration itself is therefore carried in the *next*
 * event, which keeps the gradient at every access evaluated on exactly the eager-path value.
 * Per entry this is `(accesses at t > 0) + 1` events, and the event ranges partition `[0, n)`.
 *
 * Events are kept in compressed sparse column form with one column per iteration: column `c` holds the events
 * applied at the end of iteration `c`, rows are entry IDs and each value is a `d_emb` vector.
 */

namespace corrnoise {

/// Threshold that classifies no entry as hot.
inline constexpr std::uint64_t never_hot = std::numeric_limits<std::uint64_t>::max();

struct HotColdSplit {
    std::uint64_t threshold = never_hot;
    std::vector<bool> hot;
    std::uint64_t hot_count = 0;

    std::uint64_t num_entries() const noexcept { return hot.size(); }

    double hot_fraction() const noexcept {
        return hot.empty() ? 0.0 : static_cast<double>(hot_count) / static_cast<double>(hot.size());
    }

    std::vector<std::uint64_t> hot_entries() const { return select(true); }

    std::vector<std::uint64_t> cold_entries() const { return select(false); }

    bool operator==(const HotColdSplit&) const = default;

private:
    std::vector<std::uint64_t> select(bool want) const {
        std::vector<std::uint64_t> out;
        for (std::uint64_t e = 0; e < hot.size(); ++e) {
            if (hot[e] == want) {
                out.push_back(e);
            }
        }
        return out;
    }
};

/// `hot(e) <=> counts[e] >= threshold`; `never_hot` keeps every entry cold.
inline HotColdSplit split_hot_cold(const FrequencyStats& stats, std::uint64_t threshold) {
    HotColdSplit split;
    split.threshold = threshold;
    split.hot.resize(stats.counts.size());
    for (std::size_t e = 0; e < stats.counts.size(); ++e) {
        bool h = threshold != never_hot && stats.counts[e] >= threshold;
        split.hot[e] = h;
        split.hot_count += h ? 1 : 0;
    }
    return split;
}

/// One aggregated noise: the sum of `zhat_s` for `s` in `[begin, end)`, applied at the end of iteration `column`.
struct NoiseEvent {
    std::size_t column = 0;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const NoiseEvent&) const = default;
};

struct CoalescingSchedule {
    std::size_t n = 0;
    std::uint64_t num_entries = 0;
    /// Cold entries, ascending.
    std::vector<std::uint64_t> entries;
    /// `events[offsets[i] .. offsets[i+1])` belong to `entries[i]`, in column order.
    std::vector<std::size_t> offsets{0};
    std::vector<NoiseEvent> events;

    std::size_t nnz() const noexcept { return events.size(); }

    std::span<const NoiseEvent> events_of(std::size_t i) const {
        return std::span<const NoiseEvent>(events).subspan(offsets[i], offsets[i + 1] - offsets[i]);
    }
};

inline CoalescingSchedule build_schedule(const AccessTrace& trace, const HotColdSplit& split) {
    if (split.num_entries() != trace.num_entries()) {
        throw InvalidArgument("split and trace disagree on the entry count");
    }
    CoalescingSchedule sched;
    sched.n = trace.iterations();
    sched.num_entries = trace.num_entries();
    if (sched.n == 0) {
        return sched;
    }
    std::vector<std::vector<std::size_t> > accesses(trace.num_entries());
    for (std::size_t t = 0; t < sched.n; ++t) {
        for (auto e : trace.replay(t)) {
            if (!split.hot[e]) {
                accesses[e].push_back(t);
            }
        }
    }
    for (std::uint64_t e = 0; e < trace.num_entries(); ++e) {
        if (split.hot[e]) {
            continue;
        }
        sched.entries.push_back(e);
        std::size_t prev = 0;
        for (auto t : accesses[e]) {
            if (t > 0) {
                sched.events.push_back({t - 1, prev, t});
                prev = t;
            }
        }
        sched.events.push_back({sched.n - 1, prev, sched.n});
        sched.offsets.push_back(sched.events.size());
    }
    return sched;
}

/// Contiguous run of cold-entry noise coordinates processed in one pass.
struct TileSpec {
    std::size_t tile_elems = 0;
    std::size_t d_emb = 1;
    std::size_t cold_elems = 0;

    std::size_t entries_per_tile() const noexcept { return tile_elems / d_emb; }

    std::size_t tile_count() const noexcept { return tile_elems == 0 ? 0 : (cold_elems + tile_elems - 1) / tile_elems; }

    /// Splits `cold_entries` entries into (up to) `tiles` near-equal tiles.
    static TileSpec for_tile_count(std::size_t tiles, std::size_t cold_entries, std::size_t d_emb) {
        if (tiles == 0 || d_emb == 0) {
            throw InvalidArgument("tile count and d_emb must be positive");
        }
        std::size_t per = std::max<std::size_t>(1, (cold_entries + tiles - 1) / tiles);
        return {per * d_emb, d_emb, cold_entries * d_emb};
    }

    void validate() const {
        if (d_emb == 0 || tile_elems < d_emb || tile_elems % d_emb != 0) {
            throw InvalidArgument("tile_elems must be a positive multiple of d_emb");
        }
    }
};

/**
 * Largest tile whose working set fits `budget_bytes`: the `band - 1` resident history rows of the tile
 * plus one raw-noise tile and one output tile, i.e. `(band + 1) * tile_elems * width <= budget`.
 * Never larger than the cold coordinates themselves.
 */
inline TileSpec tile_size_solver(std::uint64_t budget_bytes, std::size_t band, std::size_t cold_elems, std::size_t d_emb,
                                 std::size_t width) {
    if (band == 0 || d_emb == 0 || width == 0) {
        throw InvalidArgument("tile_size_solver needs band, d_emb and width >= 1");
    }
    const std::uint64_t per_elem = static_cast<std::uint64_t>(band + 1) * width;
    const std::uint64_t fit = budget_bytes / per_elem;
    if (fit < d_emb) {
        throw InvalidArgument("infeasible tile: budget " + std::to_string(budget_bytes) + " bytes is below one entry-wide tile (" +
                              std::to_string(per_elem * d_emb) + " bytes)");
    }
    std::size_t tile = static_cast<std::size_t>(fit / d_emb) * d_emb;
    if (cold_elems > 0) {
        tile = std::min(tile, cold_elems);
    }
    return {tile, d_emb, cold_elems};
}

/// Digest tying a store to the inputs that produced it and to its cold-entry map.
inline std::uint64_t store_provenance(const NoisePlan& plan, const MixingMatrix& c, const AccessTrace& trace,
                                      const HotColdSplit& split, std::size_t d_emb) {
    Fnv1a h;
    h.u64(plan.seed);
    h.u64(plan.m);
    h.u64(plan.n);
    h.u64(plan.band);
    h.f64(plan.sigma);
    h.u64(static_cast<std::uint64_t>(plan.dtype));
    h.u64(digest(c));
    h.u64(trace.provenance());
    h.u64(d_emb);
    for (auto e : split.cold_entries()) {
        h.u64(e);
    }
    return h.digest();
}

/**
 * @brief Coalesced noise events in compressed sparse column form.
 *
 * `col_ptr` has `n + 1` offsets; events `col_ptr[c] .. col_ptr[c+1]` are applied at the end of iteration `c`.
 * `row_idx` holds the entry ID of each event (strictly increasing inside a column) and
 * `values` the concatenated `d_emb`-long noise sums.
 */
template<typename T>
struct CoalescedNoiseStore {
    static constexpr std::uint32_t version = 1;
    static constexpr std::uint64_t header_bytes = 4 + 4 + 1 + 8 + 8 + 4 + 8 + 8;

    std::uint64_t num_entries = 0;
    std::uint64_t n = 0;
    std::uint32_t d_emb = 1;
    std::uint64_t provenance = 0;
    std::vector<std::uint64_t> col_ptr{0};
    std::vector<std::uint64_t> row_idx;
    std::vector<T> values;

    std::size_t nnz() const noexcept { return row_idx.size(); }

    std::span<const T> value(std::size_t k) const { return std::span<const T>(values).subspan(k * d_emb, d_emb); }

    /// Bytes of noise values: `nnz * d_emb * width`.
    std::uint64_t payload_bytes() const noexcept { return static_cast<std::uint64_t>(values.size()) * sizeof(T); }

    std::uint64_t index_bytes() const noexcept { return (col_ptr.size() + row_idx.size()) * sizeof(std::uint64_t); }

    std::uint64_t file_bytes() const noexcept { return header_bytes + index_bytes() + payload_bytes(); }

    void validate() const {
        if (d_emb == 0) {
            throw ValidationError("store d_emb is 0");
        }
        if (col_ptr.size() != n + 1 || col_ptr.front() != 0) {
            throw ValidationError("store col_ptr must have n + 1 entries starting at 0");
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (col_ptr[c + 1] < col_ptr[c]) {
                throw ValidationError("store col_ptr decreases at column " + std::to_string(c));
            }
        }
        if (col_ptr.back() != row_idx.size()) {
            throw ValidationError("store col_ptr[n] != nnz");
        }
        if (values.size() != row_idx.size() * d_emb) {
            throw ValidationError("store values size != nnz * d_emb");
        }
        for (std::size_t c = 0; c < n; ++c) {
            for (auto k = col_ptr[c]; k < col_ptr[c + 1]; ++k) {
                if (row_idx[k] >= num_entries) {
                    throw ValidationError("store row index out of range in column " + std::to_string(c));
                }
                if (k > col_ptr[c] && row_idx[k] <= row_idx[k - 1]) {
                    throw ValidationError("store row indices not strictly increasing in column " + std::to_string(c));
                }
            }
        }
    }

    bool operator==(const CoalescedNoiseStore&) const = default;
};

/// Mean coalesced events per iteration, `nnz / n`.
template<typename T>
double avg_noise_entries(const CoalescedNoiseStore<T>& store) {
    return store.n == 0 ? 0.0 : static_cast<double>(store.nnz()) / static_cast<double>(store.n);
}

namespace detail {

template<typename T>
struct TileEvents {
    // Per column: (entry, values) in ascending entry order.
    std::vector<std::vector<std::uint64_t> > entries;
    std::vector<std::vector<T> > values;
};

template<typename T>
TileEvents<T> precompute_tile(const NoisePlan& plan, const MixingMatrix& c, const CoalescingSchedule& sched, std::size_t first,
                              std::size_t last, std::size_t d_emb) {
    std::vector<std::uint64_t> coords;
    coords.reserve((last - first) * d_emb);
    for (auto i = first; i < last; ++i) {
        for (std::size_t j = 0; j < d_emb; ++j) {
            coords.push_back(sched.entries[i] * d_emb + j);
        }
    }
    NoiseStream<T> stream(plan, c, Coordinates::list(std::move(coords)));

    TileEvents<T> out;
    out.entries.resize(sched.n);
    out.values.resize(sched.n);
    const std::size_t count = last - first;
    std::vector<double> acc(count * d_emb, 0.0);
    std::vector<std::size_t> cursor(count, 0);
    for (std::size_t t = 0; t < sched.n; ++t) {
        auto z = stream.next();
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += static_cast<double>(z.values[i]);
        }
        for (std::size_t i = 0; i < count; ++i) {
            auto evs = sched.events_of(first + i);
            if (cursor[i] < evs.size() && evs[cursor[i]].column == t) {
                out.entries[t].push_back(sched.entries[first + i]);
                auto* a = acc.data() + i * d_emb;
                for (std::size_t j = 0; j < d_emb; ++j) {
                    out.values[t].push_back(static_cast<T>(a[j]));
                    a[j] = 0.0;
                }
                ++cursor[i];
            }
        }
    }
    return out;
}

}

/**
 * Runs the correlated recursion tile by tile over the cold-entry coordinates, summing each entry's noise
 * between its flush points. Cold entries are laid out contiguously (ascending ID) before tiling; the
 * element index fed to the generator is always the global coordinate `entry * d_emb + j`.
 * Each tile is independent, and `threads > 1` processes tiles concurrently; the result does not depend
 * on the tiling or on the thread count.
 */
template<typename T>
CoalescedNoiseStore<T> precompute_coalesced(const NoisePlan& plan, const MixingMatrix& c, const AccessTrace& trace,
                                            const HotColdSplit& split, const TileSpec& tiles, unsigned threads = 1) {
    plan.validate();
    plan.check_matrix(c);
    tiles.validate();
    const std::size_t d_emb = tiles.d_emb;
    if (plan.dtype != dtype_of<T>()) {
        throw InvalidArgument("noise plan dtype does not match store element type");
    }
    if (trace.iterations() != plan.n) {
        throw ValidationError("trace has " + std::to_string(trace.iterations()) + " iterations, plan has n=" + std::to_string(plan.n));
    }
    if (plan.m != trace.num_entries() * d_emb) {
        throw ValidationError("plan m=" + std::to_string(plan.m) + " != num_entries * d_emb");
    }
    if (split.num_entries() != trace.num_entries()) {
        throw ValidationError("split and trace disagree on the entry count");
    }
    const auto sched = build_schedule(trace, split);

    CoalescedNoiseStore<T> store;
    store.num_entries = trace.num_entries();
    store.n = plan.n;
    store.d_emb = static_cast<std::uint32_t>(d_emb);
    store.provenance = store_provenance(plan, c, trace, split, d_emb);
    store.col_ptr.assign(plan.n + 1, 0);

    const std::size_t per_tile = tiles.entries_per_tile();
    const std::size_t cold = sched.entries.size();
    const std::size_t ntiles = cold == 0 ? 0 : (cold + per_tile - 1) / per_tile;
    std::vector<detail::TileEvents<T> > parts(ntiles);

    auto run = [&](std::size_t k) {
        auto first = k * per_tile;
        auto last = std::min(cold, first + per_tile);
        parts[k] = detail::precompute_tile<T>(plan, c, sched, first, last, d_emb);
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(ntiles, 1))));
    if (threads == 1) {
        for (std::size_t k = 0; k < ntiles; ++k) {
            run(k);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < ntiles; k = next++) {
                    run(k);
                }
            });
        }
    }

    // Tiles cover ascending, disjoint entry ranges, so concatenating them per column keeps rows sorted.
    store.row_idx.reserve(sched.nnz());
    store.values.reserve(sched.nnz() * d_emb);
    for (std::size_t col = 0; col < plan.n; ++col) {
        for (const auto& part : parts) {
            store.row_idx.insert(store.row_idx.end(), part.entries[col].begin(), part.entries[col].end());
            store.values.insert(store.values.end(), part.values[col].begin(), part.values[col].end());
        }
        store.col_ptr[col + 1] = store.row_idx.size();
    }
    return store;
}

/**
 * Applies coalesced events to a row-major `num_entries x d_emb` table, scaled by `coefficient`
 * (the trainer's `-lr * noise_coefficient`). `apply(table, t)` must be called for `t = 0, 1, ..., n` in order,
 * before iteration `t`'s gradient step; it applies the events of column `t - 1`, and `t = n` applies the
 * end-of-training events.
 */
template<typename T>
class LazyNoiseApplier {
public:
    LazyNoiseApplier(const CoalescedNoiseStore<T>& store, double coefficient) : store_(&store), coefficient_(coefficient) {}

    std::size_t next_step() const noexcept { return next_; }

    void apply(std::span<T> table, std::size_t t) {
        if (t != next_) {
            throw StateError("lazy_apply expects iteration " + std::to_string(next_) + ", got " + std::to_string(t));
        }
        if (t > store_->n) {
            throw StateError("lazy_apply past the end of training");
        }
        const std::size_t d = store_->d_emb;
        if (table.size() != store_->num_entries * d) {
            throw InvalidArgument("table shape does not match store");
        }
        if (t > 0) {
            const auto col = t - 1;
            for (auto k = store_->col_ptr[col]; k < store_->col_ptr[col + 1]; ++k) {
                auto v = store_->value(k);
                auto* row = table.data() + store_->row_idx[k] * d;
                for (std::size_t j = 0; j < d; ++j) {
                    row[j] = static_cast<T>(static_cast<double>(row[j]) + coefficient_ * static_cast<double>(v[j]));
                }
            }
        }
        ++next_;
    }

private:
    const CoalescedNoiseStore<T>* store_;
    double coefficient_;
    std::size_t next_ = 0;
};

/// Stats of one point of a threshold sweep, predicted from the schedule alone.
struct ThresholdPoint {
    std::uint64_t threshold = never_hot;
    double hot_fraction = 0.0;
    std::uint64_t predicted_nnz = 0;
    double avg_noise_entries = 0.0;
};

inline std::vector<ThresholdPoint> sweep_thresholds(const AccessTrace& trace, std::span<const std::uint64_t> thresholds) {
    const auto stats = frequency_histogram(trace);
    std::vector<std::uint64_t> late_accesses(trace.num_entries(), 0);
    for (std::size_t t = 1; t < trace.iterations(); ++t) {
        for (auto e : trace.replay(t)) {
            ++late_accesses[e];
        }
    }
    std::vector<ThresholdPoint> out;
    for (auto th : thresholds) {
        auto split = split_hot_cold(stats, th);
        ThresholdPoint p;
        p.threshold = th;
        p.hot_fraction = split.hot_fraction();
        if (trace.iterations() > 0) {
            for (std::uint64_t e = 0; e < trace.num_entries(); ++e) {
                if (!split.hot[e]) {
                    p.predicted_nnz += late_accesses[e] + 1;
                }
            }
            p.avg_noise_entries = static_cast<double>(p.predicted_nnz) / static_cast<double>(trace.iterations());
        }
        out.push_back(p);
    }
    return out;
}

/**
 * Store file, little-endian: header `{"CNS1", u32 version, u8 dtype, u64 num_entries, u64 n, u32 d_emb, u64 nnz,
 * u64 provenance}` (45 bytes, unpadded), then `col_ptr` (`n + 1` u64), `row_idx` (`nnz` u64) and the values.
 * The provenance digest covers the cold-entry map together with the plan, matrix and trace.
 */
template<typename T>
void write_store(const CoalescedNoiseStore<T>& store, std::ostream& out) {
    io::put_magic(out, "CNS1");
    io::put<std::uint32_t>(out, CoalescedNoiseStore<T>::version);
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
    io::put<std::uint64_t>(out, store.num_entries);
    io::put<std::uint64_t>(out, store.n);
    io::put<std::uint32_t>(out, store.d_emb);
    io::put<std::uint64_t>(out, store.nnz());
    io::put<std::uint64_t>(out, store.provenance);
    io::put_span<std::uint64_t>(out, store.col_ptr);
    io::put_span<std::uint64_t>(out, store.row_idx);
    io::put_span<T>(out, store.values);
}

struct StoreHeader {
    std::uint32_t version = 0;
    Dtype dtype = Dtype::f64;
    std::uint64_t num_entries = 0;
    std::uint64_t n = 0;
    std::uint32_t d_emb = 0;
    std::uint64_t nnz = 0;
    std::uint64_t provenance = 0;
};

inline StoreHeader read_store_header(std::istream& in) {
    io::expect_magic(in, "CNS1");
    StoreHeader h;
    h.version = io::get<std::uint32_t>(in);
    if (h.version != 1) {
        throw ValidationError("unsupported store version " + std::to_string(h.version));
    }
    h.dtype = dtype_from_code(io::get<std::uint8_t>(in));
    h.num_entries = io::get<std::uint64_t>(in);
    h.n = io::get<std::uint64_t>(in);
    h.d_emb = io::get<std::uint32_t>(in);
    h.nnz = io::get<std::uint64_t>(in);
    h.provenance = io::get<std::uint64_t>(in);
    return h;
}

template<typename T>
CoalescedNoiseStore<T> read_store(std::istream& in) {
    auto h = read_store_header(in);
    if (h.dtype != dtype_of<T>()) {
        throw ValidationError("store dtype is " + std::string(dtype_name(h.dtype)));
    }
    CoalescedNoiseStore<T> s;
    s.num_entries = h.num_entries;
    s.n = h.n;
    s.d_emb = h.d_emb;
    s.provenance = h.provenance;
    s.col_ptr.resize(h.n + 1);
    s.row_idx.resize(h.nnz);
    s.values.resize(h.nnz * h.d_emb);
    io::get_span<std::uint64_t>(in, std::span<std::uint64_t>(s.col_ptr));
    io::get_span<std::uint64_t>(in, std::span<std::uint64_t>(s.row_idx));
    io::get_span<T>(in, std::span<T>(s.values));
    s.validate();
    return s;
}

template<typename T>
void save_store(const CoalescedNoiseStore<T>& store, const std::filesystem::path& path) {
    io::write_atomic(path, [&](std::ostream& out) { write_store(store, out); });
}

template<typename T>
CoalescedNoiseStore<T> load_store(const std::filesystem::path& path) {
    auto in = io::open_input(path);
    return read_store<T>(in);
}

inline StoreHeader peek_store_header(const std::filesystem::path& path) {
    auto in = io::open_input(path);
    return read_store_header(in);
}

}

#endif
