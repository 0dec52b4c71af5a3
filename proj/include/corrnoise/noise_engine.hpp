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


#ifndef CORRNOISE_NOISE_ENGINE_HPP
#define CORRNOISE_NOISE_ENGINE_HPP

#include "common.hpp"
#include "io.hpp"
#include "mixing.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

/**
 * @file noise_engine.hpp
 *
 * @brief Raw Gaussian sampling, the ring-buffer noise history, and the banded correlated-noise recursion.
 *
 * The correlated noise of step `t` is
 * `zhat_t = z_t / C[t,t] - sum_{tau=1}^{min(t, band-1)} (C[t,t-tau] / C[t,t]) * zhat_{t-tau}`,
 * evaluated per element with the sum accumulated in `double`, in ascending `tau`.
 * Both the streaming engine and `regen_oracle` follow this exact order, so they agree bit-for-bit in 64-bit mode.
 */

namespace corrnoise {

/// Parameters of one noise sequence.
struct NoisePlan {
    std::uint64_t seed = 0;
    /// Model parameter count (noise vector length).
    std::size_t m = 1;
    /// Total iterations.
    std::size_t n = 1;
    std::size_t band = 1;
    double sigma = 1.0;
    Dtype dtype = Dtype::f64;

    void validate() const {
        if (m == 0) {
            throw InvalidArgument("noise plan needs m >= 1");
        }
        if (n == 0) {
            throw InvalidArgument("noise plan needs n >= 1");
        }
        if (band < 1 || band > n) {
            throw InvalidArgument("noise plan band " + std::to_string(band) + " outside [1, n]");
        }
        if (!(sigma > 0.0) || !std::isfinite(sigma)) {
            throw InvalidArgument("noise plan needs sigma > 0");
        }
    }

    /// Checks that `c` is the matrix this plan was written for.
    void check_matrix(const MixingMatrix& c) const {
        if (c.n() != n || c.band() != band) {
            throw InvalidArgument("mixing matrix (n=" + std::to_string(c.n()) + ", band=" + std::to_string(c.band()) +
                                  ") does not match noise plan (n=" + std::to_string(n) + ", band=" + std::to_string(band) + ")");
        }
    }

    bool operator==(const NoisePlan&) const = default;
};

/**
 * Subset of noise coordinates a computation is restricted to: either a contiguous range or an explicit,
 * strictly increasing list. Elements are always addressed by their global index, so the raw noise of a
 * coordinate is the same no matter which subset it is computed in.
 */
class Coordinates {
public:
    static Coordinates range(std::uint64_t lo, std::uint64_t hi) {
        if (lo > hi) {
            throw OutOfRange("coordinate range has lo > hi");
        }
        Coordinates c;
        c.lo_ = lo;
        c.count_ = hi - lo;
        return c;
    }

    static Coordinates list(std::vector<std::uint64_t> ids) {
        for (std::size_t i = 1; i < ids.size(); ++i) {
            if (ids[i] <= ids[i - 1]) {
                throw InvalidArgument("coordinate list must be strictly increasing");
            }
        }
        Coordinates c;
        c.count_ = ids.size();
        c.ids_ = std::move(ids);
        c.explicit_ = true;
        return c;
    }

    std::size_t size() const noexcept { return count_; }

    std::uint64_t operator[](std::size_t i) const { return explicit_ ? ids_[i] : lo_ + i; }

    /// One past the largest coordinate.
    std::uint64_t extent() const noexcept {
        if (count_ == 0) {
            return 0;
        }
        return explicit_ ? ids_.back() + 1 : lo_ + count_;
    }

private:
    std::uint64_t lo_ = 0;
    std::size_t count_ = 0;
    std::vector<std::uint64_t> ids_;
    bool explicit_ = false;
};

/// Fills `out[i]` with `z_t[coords[i]]`.
template<typename T>
void sample_raw_noise(const NoisePlan& plan, std::size_t t, const Coordinates& coords, std::span<T> out) {
    if (coords.extent() > plan.m) {
        throw OutOfRange("coordinates exceed m=" + std::to_string(plan.m));
    }
    if (out.size() != coords.size()) {
        throw InvalidArgument("output span does not match coordinate count");
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        out[i] = static_cast<T>(plan.sigma * standard_normal(plan.seed, t, coords[i]));
    }
}

/// `z_t[lo, hi)`.
template<typename T>
std::vector<T> sample_raw_noise(const NoisePlan& plan, std::size_t t, std::size_t lo, std::size_t hi) {
    if (lo > hi || hi > plan.m) {
        throw OutOfRange("raw noise range [" + std::to_string(lo) + ", " + std::to_string(hi) + ") outside [0, " +
                         std::to_string(plan.m) + ")");
    }
    std::vector<T> out(hi - lo);
    sample_raw_noise<T>(plan, t, Coordinates::range(lo, hi), std::span<T>(out));
    return out;
}

/**
 * @brief Ring buffer of the last `band - 1` correlated noises.
 *
 * The noise of step `s` lives in slot `s mod (band - 1)`. With `band == 1` there are no slots and
 * storing a step only advances the step counter.
 */
template<typename T>
class NoiseHistory {
public:
    NoiseHistory(std::size_t band, std::size_t width)
        : slots_(band == 0 ? 0 : band - 1), width_(width), data_(slots_ * width_) {
        if (band == 0) {
            throw InvalidArgument("history needs band >= 1");
        }
    }

    std::size_t slots() const noexcept { return slots_; }

    std::size_t width() const noexcept { return width_; }

    std::size_t band() const noexcept { return slots_ + 1; }

    /// Number of slots holding a valid noise.
    std::size_t filled() const noexcept { return steps_ < slots_ ? steps_ : slots_; }

    /// Steps stored so far; the next `store` must be for this step.
    std::size_t steps_completed() const noexcept { return steps_; }

    std::span<const T> slot(std::size_t r) const {
        if (r >= slots_) {
            throw OutOfRange("history slot " + std::to_string(r) + " >= " + std::to_string(slots_));
        }
        return std::span<const T>(data_).subspan(r * width_, width_);
    }

    /// Noise of an earlier step, if it is still held.
    std::span<const T> step(std::size_t s) const {
        if (s >= steps_ || steps_ - s > slots_) {
            throw StateError("step " + std::to_string(s) + " is not in the history");
        }
        return slot(s % slots_);
    }

    void store(std::size_t s, std::span<const T> values) {
        if (s != steps_) {
            throw StateError("history expects step " + std::to_string(steps_) + ", got " + std::to_string(s));
        }
        if (values.size() != width_) {
            throw InvalidArgument("history row width mismatch");
        }
        if (slots_ > 0) {
            std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>((s % slots_) * width_));
        }
        ++steps_;
    }

    std::span<const T> raw() const noexcept { return data_; }

    /**
     * Snapshot: 32-byte header `{"CNH1", u32 dtype code, u64 band, u64 m, u64 head step}` followed by the
     * `(band - 1) x m` slots, row-major, little-endian. The head step is the next step to be produced.
     */
    void export_snapshot(std::ostream& out) const {
        io::put_magic(out, "CNH1");
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype_of<T>()));
        io::put<std::uint64_t>(out, band());
        io::put<std::uint64_t>(out, width_);
        io::put<std::uint64_t>(out, steps_);
        io::put_span<T>(out, data_);
    }

    static NoiseHistory import_snapshot(std::istream& in) {
        io::expect_magic(in, "CNH1");
        auto code = io::get<std::uint32_t>(in);
        if (dtype_from_code(code) != dtype_of<T>()) {
            throw ValidationError("history snapshot dtype does not match");
        }
        auto band = io::get<std::uint64_t>(in);
        auto width = io::get<std::uint64_t>(in);
        auto head = io::get<std::uint64_t>(in);
        if (band == 0) {
            throw ValidationError("history snapshot has band 0");
        }
        NoiseHistory h(band, width);
        h.steps_ = head;
        io::get_span<T>(in, std::span<T>(h.data_));
        return h;
    }

    bool operator==(const NoiseHistory&) const = default;

private:
    std::size_t slots_;
    std::size_t width_;
    std::size_t steps_ = 0;
    std::vector<T> data_;
};

template<typename T>
struct CorrelatedNoise {
    std::size_t t = 0;
    std::vector<T> values;
};

/**
 * History GEMV: `sum_k coeffs[ring_order[k]] * slot(ring_order[k])`, accumulated in `double` in ascending `k`
 * (that is, ascending `tau`). Reads the history only.
 */
template<typename T>
std::vector<double> mix_history(const NoiseHistory<T>& history, const MixingRow& row) {
    if (!row.ring_order) {
        throw StateError("mix_history needs a ring-ordered mixing row");
    }
    const auto& order = *row.ring_order;
    if (order.size() != row.coeffs.size()) {
        throw StateError("ring order does not match coefficient count");
    }
    if (row.coeffs.size() > history.filled()) {
        throw StateError("mixing row needs " + std::to_string(row.coeffs.size()) + " history rows, only " +
                         std::to_string(history.filled()) + " filled");
    }
    std::vector<double> acc(history.width(), 0.0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto r = order[k];
        const double c = row.coeffs[r];
        auto src = history.slot(r);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += c * static_cast<double>(src[i]);
        }
    }
    return acc;
}

/**
 * Produces `zhat_t` over `coords` and stores it into the history.
 * The history must hold exactly steps `0 .. t-1` (the most recent `band - 1` of them).
 */
template<typename T>
CorrelatedNoise<T> next_correlated_noise(const NoisePlan& plan, const MixingMatrix& c, NoiseHistory<T>& history, std::size_t t,
                                         const Coordinates& coords) {
    if (t >= plan.n) {
        throw OutOfRange("step " + std::to_string(t) + " >= n=" + std::to_string(plan.n));
    }
    if (history.steps_completed() != t) {
        throw StateError("history underfilled for step " + std::to_string(t) + " (holds " +
                         std::to_string(history.steps_completed()) + " steps)");
    }
    if (history.band() != c.band() || history.width() != coords.size()) {
        throw StateError("history shape does not match matrix band or coordinate count");
    }
    const auto row = mixing_row(c, t, true, true);
    const double diag = c.diag(t);

    CorrelatedNoise<T> out;
    out.t = t;
    out.values.resize(coords.size());
    sample_raw_noise<T>(plan, t, coords, std::span<T>(out.values));
    if (row.coeffs.empty()) {
        for (auto& v : out.values) {
            v = static_cast<T>(static_cast<double>(v) / diag);
        }
    } else {
        auto mixed = mix_history(history, row);
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] = static_cast<T>(static_cast<double>(out.values[i]) / diag - mixed[i]);
        }
    }
    history.store(t, out.values);
    return out;
}

template<typename T>
CorrelatedNoise<T> next_correlated_noise(const NoisePlan& plan, const MixingMatrix& c, NoiseHistory<T>& history, std::size_t t) {
    return next_correlated_noise(plan, c, history, t, Coordinates::range(0, plan.m));
}

/// Streaming engine over a fixed coordinate subset.
template<typename T>
class NoiseStream {
public:
    NoiseStream(const NoisePlan& plan, const MixingMatrix& c, Coordinates coords)
        : plan_(plan), c_(&c), coords_(std::move(coords)), history_(c.band(), coords_.size()) {
        plan_.validate();
        plan_.check_matrix(c);
        if (plan_.dtype != dtype_of<T>()) {
            throw InvalidArgument("noise plan dtype does not match engine element type");
        }
        if (coords_.extent() > plan_.m) {
            throw OutOfRange("coordinates exceed m");
        }
    }

    NoiseStream(const NoisePlan& plan, const MixingMatrix& c) : NoiseStream(plan, c, Coordinates::range(0, plan.m)) {}

    std::size_t next_step() const noexcept { return history_.steps_completed(); }

    bool done() const noexcept { return next_step() >= plan_.n; }

    CorrelatedNoise<T> next() { return next_correlated_noise(plan_, *c_, history_, next_step(), coords_); }

    const NoiseHistory<T>& history() const noexcept { return history_; }

    const Coordinates& coordinates() const noexcept { return coords_; }

private:
    NoisePlan plan_;
    const MixingMatrix* c_;
    Coordinates coords_;
    NoiseHistory<T> history_;
};

/**
 * Regenerates `zhat_0 .. zhat_t` from the seed alone, keeping every intermediate noise in natural order
 * (no ring buffer). Costs `Theta(t * |coords| * band)`; over a whole run this is the quadratic alternative
 * to keeping a history.
 */
template<typename T>
CorrelatedNoise<T> regen_oracle(const NoisePlan& plan, const MixingMatrix& c, std::size_t t, const Coordinates& coords) {
    plan.validate();
    plan.check_matrix(c);
    if (t >= plan.n) {
        throw OutOfRange("regen_oracle: t >= n");
    }
    const std::size_t width = coords.size();
    std::vector<std::vector<T> > all(t + 1, std::vector<T>(width));
    std::vector<double> acc(width);
    for (std::size_t s = 0; s <= t; ++s) {
        sample_raw_noise<T>(plan, s, coords, std::span<T>(all[s]));
        const auto row = mixing_row(c, s, true, false);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < row.coeffs.size(); ++k) {
            const auto& prev = all[s - 1 - k];
            for (std::size_t i = 0; i < width; ++i) {
                acc[i] += row.coeffs[k] * static_cast<double>(prev[i]);
            }
        }
        const double diag = c.diag(s);
        for (std::size_t i = 0; i < width; ++i) {
            all[s][i] = static_cast<T>(static_cast<double>(all[s][i]) / diag - acc[i]);
        }
    }
    return {t, std::move(all[t])};
}

template<typename T>
CorrelatedNoise<T> regen_oracle(const NoisePlan& plan, const MixingMatrix& c, std::size_t t) {
    return regen_oracle<T>(plan, c, t, Coordinates::range(0, plan.m));
}

}

#endif
