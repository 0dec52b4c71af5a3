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


#ifndef CORRNOISE_MIXING_HPP
#define CORRNOISE_MIXING_HPP

#include "common.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

/**
 * @file mixing.hpp
 *
 * @brief Banded lower-triangular mixing matrices and the per-iteration rows the noise engine consumes.
 */

namespace corrnoise {

/// Smallest diagonal magnitude accepted; division by C[t, t] must stay well conditioned.
inline constexpr double min_abs_diagonal = 1e-12;

/**
 * @brief Lower-triangular banded mixing matrix.
 *
 * Row `t` stores its diagonal `C[t, t]` and the off-diagonal coefficients `C[t, t - tau]` for
 * `tau = 1 .. min(t, band - 1)`, in that (ascending `tau`) order.
 * Entries further than `band - 1` below the diagonal are exactly zero.
 * Instances are immutable once constructed.
 */
class MixingMatrix {
public:
    /**
     * @param n Number of iterations (rows).
     * @param band Band size, counting the diagonal.
     * @param coeffs Per-row off-diagonal coefficients; row `t` must have exactly `min(t, band - 1)` values.
     * @param diag Per-row diagonal values.
     *
     * Throws `ValidationError` naming the offending row if an invariant is violated.
     */
    MixingMatrix(std::size_t n, std::size_t band, std::vector<std::vector<double> > coeffs, std::vector<double> diag)
        : n_(n), band_(band), coeffs_(std::move(coeffs)), diag_(std::move(diag)) {
        if (n_ == 0) {
            throw ValidationError("mixing matrix needs n >= 1");
        }
        if (band_ < 1 || band_ > n_) {
            throw ValidationError("band " + std::to_string(band_) + " outside [1, n=" + std::to_string(n_) + "]");
        }
        if (coeffs_.size() != n_ || diag_.size() != n_) {
            throw ValidationError("expected " + std::to_string(n_) + " rows, got " + std::to_string(coeffs_.size()));
        }
        for (std::size_t t = 0; t < n_; ++t) {
            auto expected = row_length(t);
            if (coeffs_[t].size() > band_ - 1) {
                throw ValidationError("band overflow at row " + std::to_string(t) + ": " + std::to_string(coeffs_[t].size()) +
                                      " coefficients for band " + std::to_string(band_));
            }
            if (coeffs_[t].size() != expected) {
                throw ValidationError("ragged row " + std::to_string(t) + ": expected " + std::to_string(expected) +
                                      " coefficients, got " + std::to_string(coeffs_[t].size()));
            }
            if (!std::isfinite(diag_[t]) || std::abs(diag_[t]) <= min_abs_diagonal) {
                throw ValidationError("zero diagonal at row " + std::to_string(t));
            }
            for (double c : coeffs_[t]) {
                if (!std::isfinite(c)) {
                    throw ValidationError("non-finite coefficient at row " + std::to_string(t));
                }
            }
        }
    }

    std::size_t n() const noexcept { return n_; }

    std::size_t band() const noexcept { return band_; }

    /// Number of off-diagonal coefficients in row `t`.
    std::size_t row_length(std::size_t t) const noexcept { return std::min(t, band_ - 1); }

    std::span<const double> coeffs(std::size_t t) const { return coeffs_.at(t); }

    double diag(std::size_t t) const { return diag_.at(t); }

    /// Dense element access; zero outside the band and above the diagonal.
    double at(std::size_t row, std::size_t col) const {
        if (row >= n_ || col >= n_) {
            throw OutOfRange("matrix index outside n");
        }
        if (col > row) {
            return 0.0;
        }
        if (col == row) {
            return diag_[row];
        }
        auto tau = row - col;
        return tau <= row_length(row) ? coeffs_[row][tau - 1] : 0.0;
    }

    bool operator==(const MixingMatrix&) const = default;

private:
    std::size_t n_;
    std::size_t band_;
    std::vector<std::vector<double> > coeffs_;
    std::vector<double> diag_;
};

/// `C = I` with band 1; the correlated recursion reduces to plain Gaussian noise.
inline MixingMatrix identity_matrix(std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("identity_matrix needs n >= 1");
    }
    return MixingMatrix(n, 1, std::vector<std::vector<double> >(n), std::vector<double>(n, 1.0));
}

/**
 * Toeplitz-banded reference generator: every row has diagonal `coeffs[0]` and `C[t, t - tau] = coeffs[tau]`.
 * The band is `coeffs.size()`.
 */
inline MixingMatrix banded_toeplitz(std::span<const double> coeffs, std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("banded_toeplitz needs n >= 1");
    }
    if (coeffs.empty()) {
        throw InvalidArgument("banded_toeplitz needs at least the diagonal coefficient");
    }
    if (std::abs(coeffs[0]) <= min_abs_diagonal) {
        throw InvalidArgument("zero diagonal: coeffs[0] must be nonzero");
    }
    const std::size_t band = coeffs.size();
    if (band > n) {
        throw InvalidArgument("band " + std::to_string(band) + " exceeds n=" + std::to_string(n));
    }
    std::vector<std::vector<double> > rows(n);
    for (std::size_t t = 0; t < n; ++t) {
        auto len = std::min(t, band - 1);
        rows[t].assign(coeffs.begin() + 1, coeffs.begin() + 1 + static_cast<std::ptrdiff_t>(len));
    }
    return MixingMatrix(n, band, std::move(rows), std::vector<double>(n, coeffs[0]));
}

inline MixingMatrix banded_toeplitz(std::initializer_list<double> coeffs, std::size_t n) {
    return banded_toeplitz(std::span<const double>(coeffs.begin(), coeffs.size()), n);
}

/**
 * Builds a matrix from a JSON document, either
 * `{"n": int, "band": int, "toeplitz": [floats]}` or
 * `{"n": int, "band": int, "rows": [{"coeffs": [...], "diag": f}, ...]}`.
 */
inline MixingMatrix load_matrix(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw ValidationError("mixing document must be an object");
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (it.key() != "n" && it.key() != "band" && it.key() != "toeplitz" && it.key() != "rows") {
            throw ValidationError("unknown key '" + it.key() + "' in mixing document");
        }
    }
    if (!doc.contains("n") || !doc.contains("band")) {
        throw ValidationError("mixing document needs 'n' and 'band'");
    }
    if (!doc["n"].is_number_integer() || !doc["band"].is_number_integer() || doc["n"].get<long long>() < 0 ||
        doc["band"].get<long long>() < 0) {
        throw ValidationError("'n' and 'band' must be positive integers");
    }
    auto n = doc["n"].get<std::size_t>();
    auto band = doc["band"].get<std::size_t>();
    if (n == 0) {
        throw ValidationError("mixing matrix needs n >= 1");
    }
    if (doc.contains("toeplitz") == doc.contains("rows")) {
        throw ValidationError("mixing document needs exactly one of 'toeplitz' or 'rows'");
    }

    if (doc.contains("toeplitz")) {
        auto coeffs = doc["toeplitz"].get<std::vector<double> >();
        if (coeffs.empty()) {
            throw ValidationError("'toeplitz' must hold at least the diagonal");
        }
        if (std::abs(coeffs[0]) <= min_abs_diagonal) {
            throw ValidationError("zero diagonal at row 0");
        }
        if (coeffs.size() != band) {
            throw ValidationError("band overflow: 'toeplitz' has " + std::to_string(coeffs.size()) +
                                  " coefficients but band is " + std::to_string(band));
        }
        if (band > n) {
            throw ValidationError("band " + std::to_string(band) + " exceeds n=" + std::to_string(n));
        }
        return banded_toeplitz(coeffs, n);
    }

    const auto& rows = doc["rows"];
    if (!rows.is_array() || rows.size() != n) {
        throw ValidationError("'rows' must be an array of n rows");
    }
    std::vector<std::vector<double> > coeffs(n);
    std::vector<double> diag(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto& row = rows[t];
        if (!row.is_object() || !row.contains("diag")) {
            throw ValidationError("row " + std::to_string(t) + " needs a 'diag'");
        }
        diag[t] = row["diag"].get<double>();
        if (row.contains("coeffs")) {
            coeffs[t] = row["coeffs"].get<std::vector<double> >();
        }
    }
    return MixingMatrix(n, band, std::move(coeffs), std::move(diag));
}

/// Inverse of `load_matrix`, always in the explicit-rows form.
inline nlohmann::json to_json(const MixingMatrix& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < c.n(); ++t) {
        auto co = c.coeffs(t);
        rows.push_back({{"coeffs", std::vector<double>(co.begin(), co.end())}, {"diag", c.diag(t)}});
    }
    return {{"n", c.n()}, {"band", c.band()}, {"rows", std::move(rows)}};
}

/// Content digest used to tie stores to the matrix that produced them.
inline std::uint64_t digest(const MixingMatrix& c) {
    Fnv1a h;
    h.u64(c.n());
    h.u64(c.band());
    for (std::size_t t = 0; t < c.n(); ++t) {
        h.f64(c.diag(t));
        for (double v : c.coeffs(t)) {
            h.f64(v);
        }
    }
    return h.digest();
}

/**
 * @brief One row of the mixing matrix, in the form used for the history GEMV.
 *
 * Without ring layout, `coeffs[k]` multiplies the noise of step `t - 1 - k`.
 * With ring layout, `coeffs[r]` multiplies ring-buffer row `r` and `ring_order[k]` is the ring row
 * holding step `t - 1 - k`, so iterating `k` ascending keeps the natural summation order.
 */
struct MixingRow {
    std::size_t t = 0;
    std::vector<double> coeffs;
    double diag = 1.0;
    bool prenormalized = false;
    std::optional<std::vector<std::size_t> > ring_order;

    /// Coefficient for the noise of step `t - 1 - k`, whatever the layout.
    double natural(std::size_t k) const {
        return ring_order ? coeffs[(*ring_order)[k]] : coeffs[k];
    }
};

/**
 * Extracts row `t`. With `prenormalize`, every coefficient and the diagonal are divided by `C[t, t]`
 * (so `diag == 1`). With `ring`, coefficients are laid out by ring-buffer row `(t - 1 - k) mod (band - 1)`.
 */
inline MixingRow mixing_row(const MixingMatrix& c, std::size_t t, bool prenormalize, bool ring) {
    if (t >= c.n()) {
        throw OutOfRange("mixing_row: t=" + std::to_string(t) + " >= n=" + std::to_string(c.n()));
    }
    MixingRow row;
    row.t = t;
    auto raw = c.coeffs(t);
    const double d = c.diag(t);
    row.coeffs.assign(raw.begin(), raw.end());
    row.diag = d;
    if (prenormalize) {
        for (auto& v : row.coeffs) {
            v /= d;
        }
        row.diag = 1.0;
        row.prenormalized = true;
    }
    if (ring) {
        const std::size_t len = row.coeffs.size();
        const std::size_t slots = c.band() - 1;
        std::vector<std::size_t> order(len);
        std::vector<double> laid(len);
        for (std::size_t k = 0; k < len; ++k) {
            // Early rows (t < band - 1) only touch slots 0 .. t - 1, so the map stays inside [0, len).
            order[k] = (t - 1 - k) % slots;
            laid[order[k]] = row.coeffs[k];
        }
        row.coeffs = std::move(laid);
        row.ring_order = std::move(order);
    }
    return row;
}

}

#endif
