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

#ifndef CORRNOISE_COMMON_HPP
#define CORRNOISE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

/**
 * @file common.hpp
 *
 * @brief Error types, element-width codes and hashing shared by every module.
 */

namespace corrnoise {

/// Malformed or out-of-domain argument.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Index outside the valid range of a container or iteration count.
class OutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Operation invoked in a state that cannot satisfy it (underfilled history, out-of-order step).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Structured input violated a documented invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text input could not be parsed; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested allocation does not fit the available memory tiers.
class CapacityExceeded : public std::runtime_error {
public:
    explicit CapacityExceeded(std::uint64_t shortfall_bytes)
        : std::runtime_error("noise history exceeds tier capacity by " + std::to_string(shortfall_bytes) + " bytes"),
          shortfall_(shortfall_bytes) {}

    std::uint64_t shortfall_bytes() const noexcept { return shortfall_; }

private:
    std::uint64_t shortfall_;
};

/// Element width of noise values. Codes are stable on-disk identifiers.
enum class Dtype : std::uint8_t {
    f32 = 1,
    f64 = 2,
};

inline constexpr std::size_t dtype_width(Dtype d) {
    return d == Dtype::f32 ? 4 : 8;
}

template<typename T>
inline constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "noise values are float or double");
    return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

inline Dtype dtype_from_code(std::uint32_t code) {
    if (code == 1) {
        return Dtype::f32;
    }
    if (code == 2) {
        return Dtype::f64;
    }
    throw ValidationError("unknown dtype code " + std::to_string(code));
}

inline Dtype dtype_from_name(const std::string& name) {
    if (name == "f32" || name == "float32" || name == "32") {
        return Dtype::f32;
    }
    if (name == "f64" || name == "float64" || name == "64") {
        return Dtype::f64;
    }
    throw InvalidArgument("unknown dtype '" + name + "' (expected f32 or f64)");
}

inline const char* dtype_name(Dtype d) {
    return d == Dtype::f32 ? "f32" : "f64";
}

/**
 * Incremental 64-bit FNV-1a. Used for provenance digests of traces, matrices and stores;
 * values are hashed through their little-endian byte representation.
 */
class Fnv1a {
public:
    void bytes(const void* data, std::size_t len) {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }

    void u64(std::uint64_t v) {
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) {
            buf[i] = static_cast<unsigned char>(v >> (8 * i));
        }
        bytes(buf, 8);
    }

    void f64(double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        __builtin_memcpy(&bits, &v, sizeof(v));
        u64(bits);
    }

    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}

#endif
