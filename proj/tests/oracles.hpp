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


// Independent reference computations shared by the unit tests and the acceptance binary.
// Nothing here goes through the ring buffer, prenormalised rows or the streaming engine.

#ifndef CORRNOISE_TESTS_ORACLES_HPP
#define CORRNOISE_TESTS_ORACLES_HPP

#include "corrnoise/mixing.hpp"
#include "corrnoise/noise_engine.hpp"
#include "corrnoise/rng.hpp"
#include "corrnoise/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double> >;

/// Raw Gaussian noise, `n x m`, straight from the counter-based generator.
inline Matrix raw_noise(std::uint64_t seed, double sigma, std::size_t n, std::size_t m) {
    Matrix z(n, std::vector<double>(m));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < m; ++i) {
            z[t][i] = sigma * corrnoise::standard_normal(seed, t, i);
        }
    }
    return z;
}

/// Dense forward substitution of `C * Zhat = Z`, reading `C` through `at()` only.
inline Matrix forward_substitute(const corrnoise::MixingMatrix& c, const Matrix& z) {
    const std::size_t n = c.n();
    Matrix zhat(n, std::vector<double>(z.empty() ? 0 : z[0].size()));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < zhat[t].size(); ++i) {
            double s = z[t][i];
            for (std::size_t k = 0; k < t; ++k) {
                s -= c.at(t, k) * zhat[k][i];
            }
            zhat[t][i] = s / c.at(t, t);
        }
    }
    return zhat;
}

/// `C * X`, dense.
inline Matrix multiply(const corrnoise::MixingMatrix& c, const Matrix& x) {
    const std::size_t n = c.n();
    Matrix out(n, std::vector<double>(x.empty() ? 0 : x[0].size(), 0.0));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k <= t; ++k) {
            const double v = c.at(t, k);
            if (v == 0.0) {
                continue;
            }
            for (std::size_t i = 0; i < out[t].size(); ++i) {
                out[t][i] += v * x[k][i];
            }
        }
    }
    return out;
}

/// `max |a - b| / max |b|`.
inline double max_rel_error(const Matrix& a, const Matrix& b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        for (std::size_t i = 0; i < a[t].size(); ++i) {
            num = std::max(num, std::abs(a[t][i] - b[t][i]));
            den = std::max(den, std::abs(b[t][i]));
        }
    }
    return den > 0.0 ? num / den : num;
}

/// Random lower-banded matrix built directly from a seeded generator, `|diag| >= min_diag`.
/// Off-diagonal mass per row stays below `0.8 |diag|`, so the recursion cannot blow up.
inline corrnoise::MixingMatrix random_banded(std::size_t n, std::size_t band, std::uint64_t seed, double min_diag = 0.5) {
    corrnoise::CounterStream rng(seed, 99);
    std::vector<std::vector<double> > coeffs(n);
    std::vector<double> diag(n);
    const double per = band > 1 ? 0.8 / static_cast<double>(band - 1) : 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double d = min_diag + rng.uniform();
        diag[t] = rng.uniform() < 0.5 ? -d : d;
        coeffs[t].resize(std::min(t, band - 1));
        for (auto& v : coeffs[t]) {
            v = (2.0 * rng.uniform() - 1.0) * per * d;
        }
    }
    return corrnoise::MixingMatrix(n, band, std::move(coeffs), std::move(diag));
}

/// Flattens `CorrelatedNoise` values into a row.
template<typename T>
std::vector<double> as_double(const std::vector<T>& v) {
    return std::vector<double>(v.begin(), v.end());
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Scratch directory unique to one test.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("corrnoise_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// The 3-entry, 4-iteration toy trace (IDs 0..2).
inline corrnoise::AccessTrace toy_trace() {
    return corrnoise::AccessTrace(3, {{1}, {2}, {1}, {0, 2}});
}

}

#endif
