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


#ifndef CORRNOISE_TRACE_HPP
#define CORRNOISE_TRACE_HPP

#include "common.hpp"
#include "io.hpp"
#include "rng.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

/**
 * @file trace.hpp
 *
 * @brief Embedding access traces: seeded Zipfian generation, text ingest/export and frequency statistics.
 *
 * A trace stores, per iteration, the sorted and deduplicated IDs of the embedding entries touched.
 * Text format: an optional `#entries=E` header line, then one line per iteration `t:id,id,...`
 * with `t` counting up from 0. Files ending in `.gz` are read and written through zlib.
 */

namespace corrnoise {

struct TraceConfig {
    std::uint64_t num_entries = 1;
    std::uint64_t iterations = 1;
    std::uint64_t batch_size = 1;
    /// Entries looked up per sample.
    std::uint64_t pooling = 1;
    double zipf_alpha = 0.0;
    std::uint64_t seed = 0;

    std::uint64_t draws_per_iteration() const noexcept { return batch_size * pooling; }

    void validate() const {
        if (num_entries == 0) {
            throw InvalidArgument("trace needs num_entries >= 1");
        }
        if (iterations == 0) {
            throw InvalidArgument("trace needs iterations >= 1");
        }
        if (draws_per_iteration() == 0) {
            throw InvalidArgument("trace needs batch_size * pooling >= 1");
        }
        if (!(zipf_alpha >= 0.0) || !std::isfinite(zipf_alpha)) {
            throw InvalidArgument("trace needs zipf_alpha >= 0");
        }
        if (num_entries > draws_per_iteration() * iterations) {
            throw InvalidArgument("infeasible trace: num_entries (" + std::to_string(num_entries) +
                                  ") > batch_size * pooling * iterations (" +
                                  std::to_string(draws_per_iteration() * iterations) + "), cannot cover every entry");
        }
    }
};

class AccessTrace {
public:
    AccessTrace() = default;

    /// Sorts and deduplicates each iteration. Throws `ValidationError` for IDs >= `num_entries`.
    AccessTrace(std::uint64_t num_entries, std::vector<std::vector<std::uint64_t> > iterations)
        : num_entries_(num_entries), iterations_(std::move(iterations)) {
        for (std::size_t t = 0; t < iterations_.size(); ++t) {
            auto& ids = iterations_[t];
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            if (!ids.empty() && ids.back() >= num_entries_) {
                throw ValidationError("iteration " + std::to_string(t) + ": entry " + std::to_string(ids.back()) +
                                      " >= num_entries " + std::to_string(num_entries_));
            }
        }
    }

    std::uint64_t num_entries() const noexcept { return num_entries_; }

    std::size_t iterations() const noexcept { return iterations_.size(); }

    /// Entries accessed at iteration `t`.
    std::span<const std::uint64_t> replay(std::size_t t) const {
        if (t >= iterations_.size()) {
            throw OutOfRange("replay: iteration " + std::to_string(t) + " >= " + std::to_string(iterations_.size()));
        }
        return iterations_[t];
    }

    /// Content digest over `num_entries` and every iteration's ID list.
    std::uint64_t provenance() const {
        Fnv1a h;
        h.u64(num_entries_);
        h.u64(iterations_.size());
        for (const auto& ids : iterations_) {
            h.u64(ids.size());
            for (auto id : ids) {
                h.u64(id);
            }
        }
        return h.digest();
    }

    /// Draw multiplicities per entry, when the source recorded them (generated traces do).
    const std::optional<std::vector<std::uint64_t> >& raw_counts() const noexcept { return raw_counts_; }

    void set_raw_counts(std::vector<std::uint64_t> counts) {
        if (counts.size() != num_entries_) {
            throw InvalidArgument("raw counts must have one value per entry");
        }
        raw_counts_ = std::move(counts);
    }

    bool operator==(const AccessTrace& other) const {
        return num_entries_ == other.num_entries_ && iterations_ == other.iterations_;
    }

private:
    std::uint64_t num_entries_ = 0;
    std::vector<std::vector<std::uint64_t> > iterations_;
    std::optional<std::vector<std::uint64_t> > raw_counts_;
};

/// Popularity order used by the generator: `perm[r]` is the entry holding Zipf rank `r + 1`.
inline std::vector<std::uint64_t> zipf_rank_permutation(const TraceConfig& cfg) {
    std::vector<std::uint64_t> perm(cfg.num_entries);
    for (std::uint64_t i = 0; i < cfg.num_entries; ++i) {
        perm[i] = i;
    }
    CounterStream rng(cfg.seed, 1);
    for (std::uint64_t i = cfg.num_entries; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    return perm;
}

/**
 * Synthetic Zipfian trace. Each entry is first placed once in a distinct, uniformly chosen draw slot
 * (slots are `iterations * batch_size * pooling`, `batch_size * pooling` per iteration); every remaining
 * slot draws a rank from `P(r) ~ r^-alpha` over `r = 1..E` and maps it through `zipf_rank_permutation`.
 */
inline AccessTrace generate_zipf_trace(const TraceConfig& cfg) {
    cfg.validate();
    const std::uint64_t per_iter = cfg.draws_per_iteration();
    const std::uint64_t total = per_iter * cfg.iterations;
    const auto perm = zipf_rank_permutation(cfg);

    std::vector<std::vector<std::uint64_t> > iters(cfg.iterations);
    std::vector<std::uint64_t> injected(cfg.iterations, 0);
    std::vector<std::uint64_t> raw(cfg.num_entries, 0);

    // Partial Fisher-Yates over the slot indices, with the swapped-out tail kept sparse.
    CounterStream slot_rng(cfg.seed, 2);
    std::unordered_map<std::uint64_t, std::uint64_t> moved;
    auto at = [&](std::uint64_t i) {
        auto it = moved.find(i);
        return it == moved.end() ? i : it->second;
    };
    for (std::uint64_t e = 0; e < cfg.num_entries; ++e) {
        auto j = e + slot_rng.below(total - e);
        auto slot = at(j);
        moved[j] = at(e);
        auto t = slot / per_iter;
        iters[t].push_back(e);
        ++injected[t];
        ++raw[e];
    }

    std::vector<double> cdf(cfg.num_entries);
    double acc = 0.0;
    for (std::uint64_t r = 0; r < cfg.num_entries; ++r) {
        acc += std::pow(static_cast<double>(r + 1), -cfg.zipf_alpha);
        cdf[r] = acc;
    }
    CounterStream draw_rng(cfg.seed, 3);
    for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
        for (std::uint64_t k = injected[t]; k < per_iter; ++k) {
            double u = draw_rng.uniform() * acc;
            auto r = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            r = std::min(r, cfg.num_entries - 1);
            auto e = perm[r];
            iters[t].push_back(e);
            ++raw[e];
        }
    }

    AccessTrace trace(cfg.num_entries, std::move(iters));
    trace.set_raw_counts(std::move(raw));
    return trace;
}

struct FrequencyStats {
    /// Iterations in which each entry was accessed.
    std::vector<std::uint64_t> counts;
    double mean_unique_per_iteration = 0.0;
    /// Draw multiplicities, when the trace carries them.
    std::optional<std::vector<std::uint64_t> > raw_counts;

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts) {
            s += c;
        }
        return s;
    }
};

inline FrequencyStats frequency_histogram(const AccessTrace& trace) {
    FrequencyStats stats;
    stats.counts.assign(trace.num_entries(), 0);
    std::uint64_t sum = 0;
    for (std::size_t t = 0; t < trace.iterations(); ++t) {
        auto ids = trace.replay(t);
        sum += ids.size();
        for (auto id : ids) {
            ++stats.counts[id];
        }
    }
    if (trace.iterations() > 0) {
        stats.mean_unique_per_iteration = static_cast<double>(sum) / static_cast<double>(trace.iterations());
    }
    stats.raw_counts = trace.raw_counts();
    return stats;
}

/// Text form of a trace, header included.
inline std::string format_trace(const AccessTrace& trace) {
    std::string out = "#entries=" + std::to_string(trace.num_entries()) + "\n";
    for (std::size_t t = 0; t < trace.iterations(); ++t) {
        out += std::to_string(t);
        out += ':';
        auto ids = trace.replay(t);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            out += std::to_string(ids[i]);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::uint64_t parse_u64(std::string_view s, std::size_t line, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
        throw ParseError(line, std::string("bad ") + what + " '" + std::string(s) + "'");
    }
    return v;
}

}

/**
 * Parses the text format. `num_entries` overrides the header; if neither is given, the largest ID plus one is used.
 */
inline AccessTrace parse_trace(std::string_view text, std::optional<std::uint64_t> num_entries = std::nullopt) {
    std::vector<std::vector<std::uint64_t> > iters;
    std::optional<std::uint64_t> header;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        if (line.front() == '#') {
            constexpr std::string_view key = "#entries=";
            if (line.substr(0, key.size()) == key) {
                header = detail::parse_u64(line.substr(key.size()), line_no, "entry count");
            }
            continue;
        }
        auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            throw ParseError(line_no, "missing ':'");
        }
        auto t = detail::parse_u64(line.substr(0, colon), line_no, "iteration");
        if (t != iters.size()) {
            throw ParseError(line_no, "expected iteration " + std::to_string(iters.size()) + ", got " + std::to_string(t));
        }
        std::vector<std::uint64_t> ids;
        auto rest = line.substr(colon + 1);
        while (!rest.empty()) {
            auto comma = rest.find(',');
            auto tok = rest.substr(0, comma);
            ids.push_back(detail::parse_u64(tok, line_no, "entry id"));
            if (comma == std::string_view::npos) {
                break;
            }
            rest = rest.substr(comma + 1);
            if (rest.empty()) {
                throw ParseError(line_no, "trailing ','");
            }
        }
        iters.push_back(std::move(ids));
    }
    std::uint64_t e = 0;
    if (num_entries) {
        e = *num_entries;
    } else if (header) {
        e = *header;
    } else {
        for (const auto& ids : iters) {
            for (auto id : ids) {
                e = std::max(e, id + 1);
            }
        }
    }
    return AccessTrace(e, std::move(iters));
}

namespace detail {

inline bool is_gz(const std::filesystem::path& path) {
    return path.extension() == ".gz";
}

inline std::string read_gz(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) {
        throw IoError("cannot open " + path.string());
    }
    std::string out;
    char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) {
        out.append(buf, static_cast<std::size_t>(got));
    }
    int err = 0;
    const char* msg = gzerror(f, &err);
    gzclose(f);
    if (got < 0 || (err != Z_OK && err != Z_STREAM_END)) {
        throw IoError("gzip read failed for " + path.string() + ": " + msg);
    }
    return out;
}

}

inline AccessTrace ingest_trace_file(const std::filesystem::path& path, std::optional<std::uint64_t> num_entries = std::nullopt) {
    std::string text;
    if (detail::is_gz(path)) {
        text = detail::read_gz(path);
    } else {
        auto bytes = io::read_all(path);
        text.assign(bytes.begin(), bytes.end());
    }
    return parse_trace(text, num_entries);
}

inline void export_trace_file(const AccessTrace& trace, const std::filesystem::path& path) {
    const auto text = format_trace(trace);
    if (!detail::is_gz(path)) {
        io::write_atomic(path, [&](std::ostream& out) { out.write(text.data(), static_cast<std::streamsize>(text.size())); });
        return;
    }
    auto tmp = path;
    tmp += ".tmp";
    gzFile f = gzopen(tmp.c_str(), "wb9");
    if (f == nullptr) {
        throw IoError("cannot open " + tmp.string() + " for writing");
    }
    auto written = text.empty() ? 0 : gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    if (gzclose(f) != Z_OK || written != static_cast<int>(text.size())) {
        throw IoError("gzip write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}

#endif
