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


#ifndef CORRNOISE_PLACEMENT_HPP
#define CORRNOISE_PLACEMENT_HPP

#include "common.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>

namespace corrnoise {

/// Memory available to the noise history in each tier, per GPU.
struct MemoryTierSpec {
    std::uint64_t gpu_capacity_bytes = 0;
    std::uint64_t main_capacity_bytes = 0;
    std::uint64_t cxl_capacity_bytes = 0;
    /// Part of `gpu_capacity_bytes` the trainer keeps for itself.
    std::uint64_t gpu_training_reserve_bytes = 0;

    std::uint64_t gpu_usable_bytes() const noexcept {
        return gpu_capacity_bytes > gpu_training_reserve_bytes ? gpu_capacity_bytes - gpu_training_reserve_bytes : 0;
    }

    bool operator==(const MemoryTierSpec&) const = default;
};

/// Whole-row split of the noise history across tiers.
struct PlacementPlan {
    std::uint64_t rows_gpu = 0;
    std::uint64_t rows_main = 0;
    std::uint64_t rows_cxl = 0;
    std::uint64_t row_bytes = 0;

    std::uint64_t rows() const noexcept { return rows_gpu + rows_main + rows_cxl; }
    std::uint64_t bytes_gpu() const noexcept { return rows_gpu * row_bytes; }
    std::uint64_t bytes_main() const noexcept { return rows_main * row_bytes; }
    std::uint64_t bytes_cxl() const noexcept { return rows_cxl * row_bytes; }

    bool operator==(const PlacementPlan&) const = default;
};

namespace detail {

// Fills `first`, then `second`, then CXL; the counts land in rows_gpu and rows_main respectively.
inline PlacementPlan fill_tiers(std::uint64_t rows, std::uint64_t row_bytes, std::uint64_t first_bytes, std::uint64_t second_bytes,
                                std::uint64_t cxl_bytes) {
    PlacementPlan plan;
    plan.row_bytes = row_bytes;
    auto left = rows;
    plan.rows_gpu = std::min(left, first_bytes / row_bytes);
    left -= plan.rows_gpu;
    plan.rows_main = std::min(left, second_bytes / row_bytes);
    left -= plan.rows_main;
    auto cxl_rows = cxl_bytes / row_bytes;
    if (left > cxl_rows) {
        throw CapacityExceeded((left - cxl_rows) * row_bytes);
    }
    plan.rows_cxl = left;
    return plan;
}

}

/**
 * Placement heuristic: when the whole history fits in main memory it goes there and the GPU keeps
 * all of its memory for training. Otherwise main memory is filled, the overflow goes to GPU memory, and only
 * what neither can hold spills to CXL memory. Rows are never split across tiers.
 *
 * Throws `CapacityExceeded` (carrying the shortfall in bytes) if even CXL memory cannot take the rest.
 */
inline PlacementPlan plan_placement(std::uint64_t history_rows, std::uint64_t row_bytes, const MemoryTierSpec& tiers) {
    if (row_bytes == 0) {
        throw InvalidArgument("plan_placement needs row_bytes > 0");
    }
    PlacementPlan plan;
    plan.row_bytes = row_bytes;
    if (history_rows <= tiers.main_capacity_bytes / row_bytes) {
        plan.rows_main = history_rows;
        return plan;
    }
    PlacementPlan plan_split = detail::fill_tiers(history_rows, row_bytes, tiers.main_capacity_bytes, tiers.gpu_usable_bytes(),
                                                  tiers.cxl_capacity_bytes);
    std::swap(plan_split.rows_gpu, plan_split.rows_main);
    return plan_split;
}

/// GPU-first fill (GPU, then main, then CXL) used by the GPU-side baseline, which keeps history on the GPU when it can.
inline PlacementPlan plan_gpu_first(std::uint64_t history_rows, std::uint64_t row_bytes, const MemoryTierSpec& tiers) {
    if (row_bytes == 0) {
        throw InvalidArgument("plan_gpu_first needs row_bytes > 0");
    }
    return detail::fill_tiers(history_rows, row_bytes, tiers.gpu_usable_bytes(), tiers.main_capacity_bytes, tiers.cxl_capacity_bytes);
}

inline nlohmann::json to_json(const PlacementPlan& p) {
    return {{"rows_gpu", p.rows_gpu},   {"rows_main", p.rows_main},   {"rows_cxl", p.rows_cxl},
            {"bytes_gpu", p.bytes_gpu()}, {"bytes_main", p.bytes_main()}, {"bytes_cxl", p.bytes_cxl()}};
}

}

#endif
