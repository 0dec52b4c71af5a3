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


#ifndef CORRNOISE_SIMULATOR_HPP
#define CORRNOISE_SIMULATOR_HPP

#include "common.hpp"
#include "placement.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file simulator.hpp
 *
 * @brief Analytic per-iteration latency model of the noise strategies.
 *
 * GEMV is treated as bandwidth bound: every GEMV rate is in bytes of noise history processed per second.
 * Training time per iteration is an input. Tracks that run concurrently combine with `max`; work serialised
 * on the GPU adds up.
 */

namespace corrnoise {

/// Coalesced-store figures the Cocoon-Emb model needs (measured from a store, or scaled from one).
struct EmbStoreStats {
    /// Mean coalesced events per iteration.
    double avg_noise_entries = 0.0;
    /// Embedding coordinates on the coalesced path.
    std::uint64_t cold_elems = 0;
    std::uint32_t d_emb = 1;

    /// Same access pattern on a table `factor` times larger.
    EmbStoreStats scaled(double factor) const {
        return {avg_noise_entries * factor, static_cast<std::uint64_t>(std::llround(static_cast<double>(cold_elems) * factor)), d_emb};
    }
};

struct CostModelConfig {
    double t_train_s = 0.1;
    double bw_pcie = 25e9;
    double bw_main = 100e9;
    double bw_cxl = 20e9;
    double gpu_gemv_Bps = 700e9;
    double cpu_gemv_Bps = 80e9;
    double nmp_gemv_Bps = 48e9;
    double cpu_core_fraction = 1.0;
    /// Relative training slowdown per GB of noise history kept on the GPU (microbatching pressure). 0 disables it.
    double train_slowdown_per_gpu_gb = 0.0;
    Dtype dtype = Dtype::f32;
    std::uint64_t m = 1'000'000'000;
    std::uint64_t n = 1000;
    std::uint64_t band = 16;
    std::uint64_t batch_size = 65536;
    MemoryTierSpec tiers{24'000'000'000ULL, 256'000'000'000ULL, 512'000'000'000ULL, 16'000'000'000ULL};
    /// Extra PCIe traffic of the tiled pre-computation (raw-noise tiles), in bytes.
    std::uint64_t precompute_transfer_bytes = 0;
    std::optional<EmbStoreStats> emb;

    std::uint64_t width() const noexcept { return dtype_width(dtype); }
    std::uint64_t history_rows() const noexcept { return band > 0 ? band - 1 : 0; }
    std::uint64_t row_bytes() const noexcept { return m * width(); }
    std::uint64_t history_bytes() const noexcept { return history_rows() * row_bytes(); }

    void validate() const {
        for (double r : {bw_pcie, bw_main, bw_cxl, gpu_gemv_Bps, cpu_gemv_Bps, nmp_gemv_Bps}) {
            if (!(r > 0.0)) {
                throw InvalidArgument("all bandwidths and GEMV rates must be > 0");
            }
        }
        if (!(cpu_core_fraction > 0.0 && cpu_core_fraction <= 1.0)) {
            throw InvalidArgument("cpu_core_fraction must be in (0, 1]");
        }
        if (!(t_train_s >= 0.0) || !(train_slowdown_per_gpu_gb >= 0.0)) {
            throw InvalidArgument("t_train_s and train_slowdown_per_gpu_gb must be >= 0");
        }
        if (band < 1 || n < 1) {
            throw InvalidArgument("band and n must be >= 1");
        }
    }
};

/// Per-iteration time components, in seconds.
struct CostComponents {
    double train = 0.0;
    double gemv_gpu = 0.0;
    double gemv_cpu = 0.0;
    double gemv_nmp = 0.0;
    double transfer_main = 0.0;
    double transfer_cxl = 0.0;
    double transfer_result = 0.0;

    bool operator==(const CostComponents&) const = default;
};

struct StrategyReport {
    std::string strategy;
    CostComponents components;
    /// GPU-side work (training plus anything serialised with it).
    double train_track_s = 0.0;
    /// CPU-side work running alongside training.
    double host_track_s = 0.0;
    /// Work on the CXL device running alongside training.
    double nmp_track_s = 0.0;
    double per_iteration_s = 0.0;
    double precompute_s = 0.0;
    double total_s = 0.0;
    double ratio_vs_dpsgd = 1.0;
    PlacementPlan placement;
    /// History fits on the GPU, so there is nothing for Cocoon-Emb to gain.
    bool trivial_case = false;
};

namespace detail {

inline double train_time(const CostModelConfig& cfg, const PlacementPlan& p) {
    return cfg.t_train_s * (1.0 + cfg.train_slowdown_per_gpu_gb * static_cast<double>(p.bytes_gpu()) / 1e9);
}

inline PlacementPlan cocoon_placement(const CostModelConfig& cfg) {
    if (cfg.history_rows() == 0 || cfg.row_bytes() == 0) {
        return PlacementPlan{0, 0, 0, cfg.row_bytes()};
    }
    return plan_placement(cfg.history_rows(), cfg.row_bytes(), cfg.tiers);
}

inline void finish(StrategyReport& r, const CostModelConfig& cfg) {
    r.total_s = r.precompute_s + static_cast<double>(cfg.n) * r.per_iteration_s;
    const double base = static_cast<double>(cfg.n) * cfg.t_train_s;
    r.ratio_vs_dpsgd = base > 0.0 ? r.total_s / base : 1.0;
}

}

inline StrategyReport simulate_dp_sgd(const CostModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.strategy = "dp-sgd";
    r.components.train = cfg.t_train_s;
    r.train_track_s = cfg.t_train_s;
    r.per_iteration_s = cfg.t_train_s;
    r.placement.row_bytes = cfg.row_bytes();
    detail::finish(r, cfg);
    return r;
}

/// GEMV on the GPU, history kept GPU-first; off-GPU rows cross PCIe every iteration. Everything is serial.
inline StrategyReport simulate_gpu_gemv(const CostModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.strategy = "gpu-gemv";
    if (cfg.history_rows() > 0 && cfg.row_bytes() > 0) {
        r.placement = plan_gpu_first(cfg.history_rows(), cfg.row_bytes(), cfg.tiers);
    } else {
        r.placement.row_bytes = cfg.row_bytes();
    }
    const auto& p = r.placement;
    auto& c = r.components;
    c.train = detail::train_time(cfg, p);
    c.gemv_gpu = static_cast<double>(cfg.history_bytes()) / cfg.gpu_gemv_Bps;
    c.transfer_main = static_cast<double>(p.bytes_main()) / cfg.bw_pcie;
    c.transfer_cxl = static_cast<double>(p.bytes_cxl()) / cfg.bw_cxl;
    r.train_track_s = c.train + c.gemv_gpu + c.transfer_main + c.transfer_cxl;
    r.per_iteration_s = r.train_track_s;
    r.trivial_case = cfg.history_bytes() <= cfg.tiers.gpu_usable_bytes();
    detail::finish(r, cfg);
    return r;
}

/**
 * GEMV on the CPU over host-resident rows (main memory, plus CXL rows read at CXL bandwidth), in parallel with
 * training; the result crosses PCIe. Rows the placement put on the GPU are reduced there, serialised with training.
 */
inline StrategyReport simulate_cpu_gemv(const CostModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.strategy = "cpu-gemv";
    r.placement = detail::cocoon_placement(cfg);
    const auto& p = r.placement;
    auto& c = r.components;
    const double cpu_rate = cfg.cpu_gemv_Bps * cfg.cpu_core_fraction;
    c.train = detail::train_time(cfg, p);
    c.gemv_gpu = static_cast<double>(p.bytes_gpu()) / cfg.gpu_gemv_Bps;
    c.gemv_cpu = static_cast<double>(p.bytes_main() + p.bytes_cxl()) / cpu_rate;
    c.transfer_cxl = static_cast<double>(p.bytes_cxl()) / cfg.bw_cxl;
    const bool host_rows = p.rows_main + p.rows_cxl > 0;
    c.transfer_result = host_rows ? static_cast<double>(cfg.row_bytes()) / cfg.bw_pcie : 0.0;
    r.train_track_s = c.train + c.gemv_gpu;
    r.host_track_s = c.gemv_cpu + c.transfer_cxl + c.transfer_result;
    r.per_iteration_s = std::max(r.train_track_s, r.host_track_s);
    r.trivial_case = cfg.history_bytes() <= cfg.tiers.gpu_usable_bytes();
    detail::finish(r, cfg);
    return r;
}

/**
 * CXL-resident rows are reduced by the near-memory GEMV engine. The CPU sends the (pre-normalised, ring-ordered)
 * mixing vector, reads back the partial result and sums it with its own main-memory partial at main-memory
 * bandwidth. GPU training, CPU GEMV and device GEMV all overlap. Without CXL rows this is CPU-GEMV.
 */
inline StrategyReport simulate_cocoon_nmp(const CostModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.strategy = "cocoon-nmp";
    r.placement = detail::cocoon_placement(cfg);
    const auto& p = r.placement;
    auto& c = r.components;
    const double cpu_rate = cfg.cpu_gemv_Bps * cfg.cpu_core_fraction;
    const double row = static_cast<double>(cfg.row_bytes());
    c.train = detail::train_time(cfg, p);
    c.gemv_gpu = static_cast<double>(p.bytes_gpu()) / cfg.gpu_gemv_Bps;
    c.gemv_cpu = static_cast<double>(p.bytes_main()) / cpu_rate;
    const bool host_rows = p.rows_main + p.rows_cxl > 0;
    c.transfer_result = host_rows ? row / cfg.bw_pcie : 0.0;
    if (p.rows_cxl > 0) {
        c.gemv_nmp = static_cast<double>(p.bytes_cxl()) / cfg.nmp_gemv_Bps;
        c.transfer_cxl = static_cast<double>(cfg.history_rows() * cfg.width()) / cfg.bw_pcie + row / cfg.bw_pcie;
        c.transfer_main = row / cfg.bw_main;
    }
    r.train_track_s = c.train + c.gemv_gpu;
    r.host_track_s = c.gemv_cpu + c.transfer_result + c.transfer_main;
    r.nmp_track_s = c.gemv_nmp + c.transfer_cxl;
    r.per_iteration_s = std::max({r.train_track_s, r.host_track_s, r.nmp_track_s});
    r.trivial_case = cfg.history_bytes() <= cfg.tiers.gpu_usable_bytes();
    detail::finish(r, cfg);
    return r;
}

/**
 * Noise for cold embedding coordinates is pre-computed on the GPU before training (all `n * (band - 1)` GEMV rows
 * over the cold coordinates, plus writing the store to host memory); each iteration then streams that iteration's
 * coalesced events over PCIe alongside training. Hot and dense coordinates use whichever of CPU-GEMV or GPU-GEMV
 * is faster for them.
 */
inline StrategyReport simulate_cocoon_emb(const CostModelConfig& cfg) {
    cfg.validate();
    if (!cfg.emb) {
        throw InvalidArgument("simulate_cocoon_emb needs store stats");
    }
    const auto& st = *cfg.emb;
    if (st.cold_elems > cfg.m) {
        throw InvalidArgument("store stats have more cold coordinates than the model");
    }
    StrategyReport r;
    r.strategy = "cocoon-emb";
    r.trivial_case = cfg.history_bytes() <= cfg.tiers.gpu_usable_bytes();
    if (cfg.band == 1) {
        // Plain Gaussian noise; nothing to pre-compute or coalesce.
        r = simulate_dp_sgd(cfg);
        r.strategy = "cocoon-emb";
        r.trivial_case = true;
        return r;
    }
    const double w = static_cast<double>(cfg.width());
    const double n = static_cast<double>(cfg.n);
    const double nnz = st.avg_noise_entries * n;
    const double gemv_bytes = n * static_cast<double>(cfg.history_rows()) * static_cast<double>(st.cold_elems) * w;
    const double store_bytes = nnz * static_cast<double>(st.d_emb) * w + (nnz + n + 1.0) * 8.0;
    r.precompute_s = gemv_bytes / cfg.gpu_gemv_Bps + store_bytes / cfg.bw_pcie +
                     static_cast<double>(cfg.precompute_transfer_bytes) / cfg.bw_pcie;
    const double events = st.avg_noise_entries * (static_cast<double>(st.d_emb) * w + 8.0) / cfg.bw_pcie;

    auto eager = cfg;
    eager.m = cfg.m - st.cold_elems;
    eager.emb.reset();
    auto cpu = simulate_cpu_gemv(eager);
    auto gpu = simulate_gpu_gemv(eager);
    const double via_cpu = std::max(cpu.train_track_s + events, cpu.host_track_s);
    const double via_gpu = gpu.per_iteration_s + events;
    const auto& pick = via_cpu <= via_gpu ? cpu : gpu;
    r.components = pick.components;
    r.components.transfer_main += events;
    r.placement = pick.placement;
    r.train_track_s = pick.train_track_s + events;
    r.host_track_s = pick.host_track_s;
    r.per_iteration_s = std::min(via_cpu, via_gpu);
    detail::finish(r, cfg);
    return r;
}

/**
 * No history: every iteration regenerates `zhat_1 .. zhat_t` from the seed on the GPU, each needing a GEMV over
 * `band - 1` rows. Components are run averages; the noise term sums to `n (n + 1) / 2` noise generations.
 */
inline StrategyReport simulate_regen(const CostModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.strategy = "regen";
    r.placement.row_bytes = cfg.row_bytes();
    const double n = static_cast<double>(cfg.n);
    const double one = static_cast<double>(cfg.history_bytes()) / cfg.gpu_gemv_Bps;
    const double noise_total = one * n * (n + 1.0) / 2.0;
    r.components.train = cfg.t_train_s;
    r.components.gemv_gpu = noise_total / n;
    r.train_track_s = r.components.train + r.components.gemv_gpu;
    r.per_iteration_s = r.train_track_s;
    detail::finish(r, cfg);
    return r;
}

/// Total noise-generation time of the regenerate strategy over the run.
inline double regen_noise_seconds(const CostModelConfig& cfg) {
    auto r = simulate_regen(cfg);
    return r.total_s - static_cast<double>(cfg.n) * cfg.t_train_s;
}

struct StrategyComparison {
    std::vector<StrategyReport> reports;
    std::string best;

    const StrategyReport* find(const std::string& name) const {
        for (const auto& r : reports) {
            if (r.strategy == name) {
                return &r;
            }
        }
        return nullptr;
    }
};

/**
 * Evaluates every applicable strategy on one config. Cocoon-NMP appears only when the placement puts rows in CXL
 * memory, Cocoon-Emb only when store stats are present. `best` is the fastest noise strategy.
 */
inline StrategyComparison compare_strategies(const CostModelConfig& cfg) {
    StrategyComparison out;
    out.reports.push_back(simulate_dp_sgd(cfg));
    out.reports.push_back(simulate_gpu_gemv(cfg));
    out.reports.push_back(simulate_cpu_gemv(cfg));
    auto nmp = simulate_cocoon_nmp(cfg);
    if (nmp.placement.rows_cxl > 0) {
        out.reports.push_back(nmp);
    }
    if (cfg.emb) {
        out.reports.push_back(simulate_cocoon_emb(cfg));
    }
    out.reports.push_back(simulate_regen(cfg));
    const StrategyReport* best = nullptr;
    for (const auto& r : out.reports) {
        if (r.strategy == "dp-sgd") {
            continue;
        }
        if (best == nullptr || r.total_s < best->total_s) {
            best = &r;
        }
    }
    out.best = best ? best->strategy : "dp-sgd";
    return out;
}

inline const char* csv_header() {
    return "strategy,b_hat,m,train_s,gemv_gpu_s,gemv_cpu_s,gemv_nmp_s,transfer_main_s,transfer_cxl_s,transfer_result_s,"
           "precompute_s,per_iteration_s,total_s,ratio_vs_dpsgd";
}

inline std::string csv_row(const StrategyReport& r, const CostModelConfig& cfg) {
    std::ostringstream out;
    out.precision(10);
    const auto& c = r.components;
    out << r.strategy << ',' << cfg.band << ',' << cfg.m << ',' << c.train << ',' << c.gemv_gpu << ',' << c.gemv_cpu << ','
        << c.gemv_nmp << ',' << c.transfer_main << ',' << c.transfer_cxl << ',' << c.transfer_result << ',' << r.precompute_s << ','
        << r.per_iteration_s << ',' << r.total_s << ',' << r.ratio_vs_dpsgd;
    return out.str();
}

inline nlohmann::json to_json(const StrategyReport& r) {
    const auto& c = r.components;
    return {{"strategy", r.strategy},
            {"components",
             {{"train", c.train},
              {"gemv_gpu", c.gemv_gpu},
              {"gemv_cpu", c.gemv_cpu},
              {"gemv_nmp", c.gemv_nmp},
              {"transfer_main", c.transfer_main},
              {"transfer_cxl", c.transfer_cxl},
              {"transfer_result", c.transfer_result}}},
            {"train_track_s", r.train_track_s},
            {"host_track_s", r.host_track_s},
            {"nmp_track_s", r.nmp_track_s},
            {"per_iteration_s", r.per_iteration_s},
            {"precompute_s", r.precompute_s},
            {"total_s", r.total_s},
            {"ratio_vs_dpsgd", r.ratio_vs_dpsgd},
            {"trivial_case", r.trivial_case},
            {"placement", to_json(r.placement)}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end()) {
            throw ValidationError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

template<typename V>
void read_if(const nlohmann::json& doc, const char* key, V& out) {
    if (doc.contains(key)) {
        out = doc.at(key).get<V>();
    }
}

}

/// Missing keys keep the values of `base`.
inline MemoryTierSpec tiers_from_json(const nlohmann::json& doc, MemoryTierSpec base = {}) {
    detail::reject_unknown(doc, {"gpu_capacity_bytes", "main_capacity_bytes", "cxl_capacity_bytes", "gpu_training_reserve_bytes"},
                           "tiers");
    MemoryTierSpec t = base;
    detail::read_if(doc, "gpu_capacity_bytes", t.gpu_capacity_bytes);
    detail::read_if(doc, "main_capacity_bytes", t.main_capacity_bytes);
    detail::read_if(doc, "cxl_capacity_bytes", t.cxl_capacity_bytes);
    detail::read_if(doc, "gpu_training_reserve_bytes", t.gpu_training_reserve_bytes);
    return t;
}

inline nlohmann::json to_json(const MemoryTierSpec& t) {
    return {{"gpu_capacity_bytes", t.gpu_capacity_bytes},
            {"main_capacity_bytes", t.main_capacity_bytes},
            {"cxl_capacity_bytes", t.cxl_capacity_bytes},
            {"gpu_training_reserve_bytes", t.gpu_training_reserve_bytes}};
}

/// Reads a cost model document; missing keys keep the defaults, unknown keys are rejected.
inline CostModelConfig cost_model_from_json(const nlohmann::json& doc) {
    detail::reject_unknown(doc,
                           {"t_train_s", "bw_pcie", "bw_main", "bw_cxl", "gpu_gemv_Bps", "cpu_gemv_Bps", "nmp_gemv_Bps",
                            "cpu_core_fraction", "train_slowdown_per_gpu_gb", "dtype", "m", "n", "band", "batch_size", "tiers",
                            "precompute_transfer_bytes", "emb"},
                           "cost model");
    CostModelConfig c;
    detail::read_if(doc, "t_train_s", c.t_train_s);
    detail::read_if(doc, "bw_pcie", c.bw_pcie);
    detail::read_if(doc, "bw_main", c.bw_main);
    detail::read_if(doc, "bw_cxl", c.bw_cxl);
    detail::read_if(doc, "gpu_gemv_Bps", c.gpu_gemv_Bps);
    detail::read_if(doc, "cpu_gemv_Bps", c.cpu_gemv_Bps);
    detail::read_if(doc, "nmp_gemv_Bps", c.nmp_gemv_Bps);
    detail::read_if(doc, "cpu_core_fraction", c.cpu_core_fraction);
    detail::read_if(doc, "train_slowdown_per_gpu_gb", c.train_slowdown_per_gpu_gb);
    if (doc.contains("dtype")) {
        c.dtype = dtype_from_name(doc["dtype"].get<std::string>());
    }
    detail::read_if(doc, "m", c.m);
    detail::read_if(doc, "n", c.n);
    detail::read_if(doc, "band", c.band);
    detail::read_if(doc, "batch_size", c.batch_size);
    if (doc.contains("tiers")) {
        c.tiers = tiers_from_json(doc["tiers"], c.tiers);
    }
    detail::read_if(doc, "precompute_transfer_bytes", c.precompute_transfer_bytes);
    if (doc.contains("emb") && !doc["emb"].is_null()) {
        const auto& e = doc["emb"];
        detail::reject_unknown(e, {"avg_noise_entries", "cold_elems", "d_emb"}, "emb");
        EmbStoreStats s;
        detail::read_if(e, "avg_noise_entries", s.avg_noise_entries);
        detail::read_if(e, "cold_elems", s.cold_elems);
        detail::read_if(e, "d_emb", s.d_emb);
        c.emb = s;
    }
    c.validate();
    return c;
}

inline nlohmann::json to_json(const CostModelConfig& c) {
    nlohmann::json doc = {{"t_train_s", c.t_train_s},
                          {"bw_pcie", c.bw_pcie},
                          {"bw_main", c.bw_main},
                          {"bw_cxl", c.bw_cxl},
                          {"gpu_gemv_Bps", c.gpu_gemv_Bps},
                          {"cpu_gemv_Bps", c.cpu_gemv_Bps},
                          {"nmp_gemv_Bps", c.nmp_gemv_Bps},
                          {"cpu_core_fraction", c.cpu_core_fraction},
                          {"train_slowdown_per_gpu_gb", c.train_slowdown_per_gpu_gb},
                          {"dtype", dtype_name(c.dtype)},
                          {"m", c.m},
                          {"n", c.n},
                          {"band", c.band},
                          {"batch_size", c.batch_size},
                          {"tiers", to_json(c.tiers)},
                          {"precompute_transfer_bytes", c.precompute_transfer_bytes}};
    if (c.emb) {
        doc["emb"] = {{"avg_noise_entries", c.emb->avg_noise_entries}, {"cold_elems", c.emb->cold_elems}, {"d_emb", c.emb->d_emb}};
    }
    return doc;
}

}

#endif
