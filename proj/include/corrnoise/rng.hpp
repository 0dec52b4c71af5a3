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


#ifndef CORRNOISE_RNG_HPP
#define CORRNOISE_RNG_HPP

#include <boost/math/special_functions/erf.hpp>

#include <array>
#include <cmath>
#include <cstdint>

/**
 * @file rng.hpp
 *
 * @brief Counter-based random numbers (Philox4x32-10) and the order-independent Gaussian built on them.
 *
 * Every Gaussian is a pure function of `(seed, step, element)`:
 * the Philox key is the seed split into two 32-bit words and the counter is `(step_lo, step_hi, element_lo, element_hi)`.
 * The first two output words form a 52-bit integer `k` (top bits), mapped to `u = (k + 0.5) / 2^52`, which lies strictly
 * inside (0, 1). The standard normal is then `Phi^-1(u) = -sqrt(2) * erfc_inv(2u)`.
 */

namespace corrnoise {

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}

/// Philox4x32 with 10 rounds.
inline PhiloxBlock philox4x32(PhiloxBlock ctr, PhiloxKey key) {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        detail::mulhilo32(m0, ctr[0], hi0, lo0);
        detail::mulhilo32(m1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

inline PhiloxKey philox_key(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

inline PhiloxBlock philox_counter(std::uint64_t a, std::uint64_t b) {
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
            static_cast<std::uint32_t>(b >> 32)};
}

/// Uniform in the open interval (0, 1) from the first two words of a block.
inline double open_unit(const PhiloxBlock& block) {
    std::uint64_t bits = (static_cast<std::uint64_t>(block[0]) << 32) | block[1];
    bits >>= 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Standard normal quantile.
inline double normal_quantile(double u) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

/// Standard normal variate for `(seed, step, element)`.
inline double standard_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t element) {
    return normal_quantile(open_unit(philox4x32(philox_counter(step, element), philox_key(seed))));
}

/**
 * Sequential view over a Philox counter space, for the places (trace generation, shuffles) that
 * consume a stream rather than an indexed lattice. `domain` separates independent streams under one seed.
 */
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t domain) : key_(philox_key(seed)), domain_(domain) {}

    std::uint64_t next_u64() {
        if (lane_ == 2) {
            block_ = philox4x32(philox_counter(domain_, index_++), key_);
            lane_ = 0;
        }
        auto v = (static_cast<std::uint64_t>(block_[2 * lane_]) << 32) | block_[2 * lane_ + 1];
        ++lane_;
        return v;
    }

    /// Uniform in (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Uniform integer in [0, bound) by rejection, no modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) {
            return 0;
        }
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
        for (;;) {
            auto v = next_u64();
            if (v < limit) {
                return v % bound;
            }
        }
    }

private:
    PhiloxKey key_;
    std::uint64_t domain_;
    std::uint64_t index_ = 0;
    PhiloxBlock block_{};
    int lane_ = 2;
};

}

#endif
