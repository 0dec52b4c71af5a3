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


// corrnoise: command-line driver for the correlated-noise engine, the coalesced store pipeline,
// the toy trainer and the strategy cost model.

#include "corrnoise/emb.hpp"
#include "corrnoise/mixing.hpp"
#include "corrnoise/noise_engine.hpp"
#include "corrnoise/simulator.hpp"
#include "corrnoise/trace.hpp"
#include "corrnoise/trainer.hpp"
#include "corrnoise/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_verification = 2;
constexpr int exit_io = 3;

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw corrnoise::IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw corrnoise::ValidationError(path.string() + ": " + e.what());
    }
}

/// `a.b.c=value`; the value is parsed as JSON when it parses, else taken as a string.
void apply_override(json& doc, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw corrnoise::ValidationError("override '" + spec + "' is not key.path=value");
    }
    auto path = spec.substr(0, eq);
    auto raw = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    if (value.is_object() || value.is_array()) {
        throw corrnoise::ValidationError("override '" + path + "' must be a scalar");
    }
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        auto dot = path.find('.', start);
        auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object()) {
            throw corrnoise::ValidationError("override '" + path + "' walks through a non-object");
        }
        if (dot == std::string::npos) {
            if (node->contains(key) && ((*node)[key].is_object() || (*node)[key].is_array())) {
                throw corrnoise::ValidationError("override '" + path + "' targets a non-scalar");
            }
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json doc = path.empty() ? json::object() : read_json_file(path);
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    return doc;
}

void reject_unknown(const json& doc, std::initializer_list<const char*> keys, const std::string& where) {
    if (!doc.is_object()) {
        throw corrnoise::ValidationError(where + " must be a JSON object");
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool known = false;
        for (auto k : keys) {
            known = known || it.key() == k;
        }
        if (!known) {
            throw corrnoise::ValidationError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

template<typename V>
V get_or(const json& doc, const char* key, V fallback) {
    return doc.contains(key) ? doc.at(key).get<V>() : fallback;
}

unsigned default_threads() {
    if (const char* env = std::getenv("CORRNOISE_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) {
            return static_cast<unsigned>(v);
        }
    }
    return 1;
}

void write_text(const fs::path& path, const std::string& text) {
    corrnoise::io::write_atomic(path, [&](std::ostream& out) { out << text; }, false);
}

corrnoise::TraceConfig trace_config_from(const json& doc) {
    reject_unknown(doc, {"num_entries", "iterations", "batch_size", "pooling", "zipf_alpha", "seed", "output"}, "trace config");
    corrnoise::TraceConfig c;
    c.num_entries = get_or<std::uint64_t>(doc, "num_entries", c.num_entries);
    c.iterations = get_or<std::uint64_t>(doc, "iterations", c.iterations);
    c.batch_size = get_or<std::uint64_t>(doc, "batch_size", c.batch_size);
    c.pooling = get_or<std::uint64_t>(doc, "pooling", c.pooling);
    if (doc.contains("zipf_alpha") && doc["zipf_alpha"].is_number()) {
        c.zipf_alpha = doc["zipf_alpha"].get<double>();
    }
    c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
    return c;
}

/// A trace given as a file path (string) or as a generator config (object).
corrnoise::AccessTrace load_trace(const json& node) {
    if (node.is_string()) {
        return corrnoise::ingest_trace_file(node.get<std::string>());
    }
    auto cfg = trace_config_from(node);
    return corrnoise::generate_zipf_trace(cfg);
}

corrnoise::MixingMatrix load_mixing(const json& node) {
    if (node.is_string()) {
        return corrnoise::load_matrix(read_json_file(node.get<std::string>()));
    }
    return corrnoise::load_matrix(node);
}

/// Plan document `{"seed", "band", "sigma", "dtype"}`; `m` and `n` come from the run.
corrnoise::NoisePlan plan_from(const json& doc, std::size_t m, std::size_t n) {
    reject_unknown(doc, {"seed", "band", "sigma", "dtype"}, "plan");
    corrnoise::NoisePlan p;
    p.seed = get_or<std::uint64_t>(doc, "seed", 0);
    p.band = get_or<std::size_t>(doc, "band", 1);
    p.sigma = get_or<double>(doc, "sigma", 1.0);
    p.dtype = corrnoise::dtype_from_name(get_or<std::string>(doc, "dtype", "f64"));
    p.m = m;
    p.n = n;
    p.validate();
    return p;
}

std::uint64_t threshold_from(const json& doc) {
    if (!doc.contains("threshold") || doc["threshold"].is_null()) {
        return corrnoise::never_hot;
    }
    return doc["threshold"].get<std::uint64_t>();
}

// ---------------------------------------------------------------------------------------------------------------------

int cmd_gen_mixing(const json& cfg) {
    reject_unknown(cfg, {"kind", "n", "band", "toeplitz", "seed", "min_abs_diag", "output"}, "gen-mixing config");
    auto kind = get_or<std::string>(cfg, "kind", "toeplitz");
    auto n = get_or<std::size_t>(cfg, "n", 0);
    auto output = get_or<std::string>(cfg, "output", "mixing.json");
    json doc;
    if (kind == "identity") {
        auto c = corrnoise::identity_matrix(n);
        doc = {{"n", c.n()}, {"band", 1}, {"toeplitz", {1.0}}};
    } else if (kind == "toeplitz") {
        auto coeffs = cfg.at("toeplitz").get<std::vector<double> >();
        auto c = corrnoise::banded_toeplitz(coeffs, n);
        doc = {{"n", c.n()}, {"band", c.band()}, {"toeplitz", coeffs}};
    } else if (kind == "random") {
        auto c = corrnoise::random_banded_matrix(n, get_or<std::size_t>(cfg, "band", 1), get_or<std::uint64_t>(cfg, "seed", 0),
                                                 get_or<double>(cfg, "min_abs_diag", 0.5));
        doc = corrnoise::to_json(c);
    } else {
        throw corrnoise::ValidationError("unknown mixing kind '" + kind + "'");
    }
    write_text(output, doc.dump(2) + "\n");
    std::cout << "wrote " << output << "\n";
    return exit_ok;
}

std::string alpha_tag(double alpha) {
    std::ostringstream s;
    s << alpha;
    return s.str();
}

int cmd_gen_trace(const json& cfg) {
    auto base = trace_config_from(cfg);
    fs::path output = get_or<std::string>(cfg, "output", "trace.txt");
    std::vector<double> alphas;
    if (cfg.contains("zipf_alpha") && cfg["zipf_alpha"].is_array()) {
        alphas = cfg["zipf_alpha"].get<std::vector<double> >();
    } else {
        alphas.push_back(base.zipf_alpha);
    }
    const bool sweep = cfg.contains("zipf_alpha") && cfg["zipf_alpha"].is_array();
    for (double a : alphas) {
        auto c = base;
        c.zipf_alpha = a;
        auto trace = corrnoise::generate_zipf_trace(c);
        fs::path path = output;
        if (sweep) {
            auto ext = output.extension().string();
            auto stem = output.stem().string();
            if (ext == ".gz") {
                ext = fs::path(stem).extension().string() + ext;
                stem = fs::path(stem).stem().string();
            }
            path = output.parent_path() / (stem + "_alpha" + alpha_tag(a) + ext);
        }
        corrnoise::export_trace_file(trace, path);
        std::cout << "wrote " << path.string() << " (alpha " << a << ", digest " << std::hex << trace.provenance() << std::dec << ")\n";
    }
    return exit_ok;
}

template<typename T>
int precompute_typed(const json& cfg, const corrnoise::NoisePlan& plan, const corrnoise::MixingMatrix& c,
                     const corrnoise::AccessTrace& trace, std::size_t d_emb) {
    const auto stats = corrnoise::frequency_histogram(trace);
    const auto split = corrnoise::split_hot_cold(stats, threshold_from(cfg));
    const auto cold = split.cold_entries().size();
    corrnoise::TileSpec tiles;
    if (cfg.contains("tile_budget_bytes")) {
        tiles = corrnoise::tile_size_solver(cfg["tile_budget_bytes"].get<std::uint64_t>(), plan.band, cold * d_emb, d_emb, sizeof(T));
    } else {
        tiles = corrnoise::TileSpec::for_tile_count(get_or<std::size_t>(cfg, "tiles", 1), cold, d_emb);
    }
    auto threads = get_or<unsigned>(cfg, "threads", default_threads());
    auto store = corrnoise::precompute_coalesced<T>(plan, c, trace, split, tiles, threads);

    auto store_out = get_or<std::string>(cfg, "store_output", "store.cns");
    corrnoise::save_store(store, store_out);
    if (store.nnz() == 0) {
        std::cerr << "warning: every entry is hot, the coalesced store is empty\n";
    }
    json report = {{"measured",
                    {{"nnz", store.nnz()},
                     {"avg_noise_entries", corrnoise::avg_noise_entries(store)},
                     {"payload_bytes", store.payload_bytes()},
                     {"index_bytes", store.index_bytes()},
                     {"file_bytes", store.file_bytes()},
                     {"hot_fraction", split.hot_fraction()},
                     {"hot_entries", split.hot_count},
                     {"cold_entries", cold},
                     {"tile_elems", tiles.tile_elems},
                     {"tile_count", tiles.tile_count()},
                     {"d_emb", d_emb},
                     {"n", plan.n},
                     {"dtype", corrnoise::dtype_name(plan.dtype)}}},
                   {"metadata", {{"command", "precompute"}, {"store", store_out}, {"trace_digest", trace.provenance()}}}};
    auto stats_out = get_or<std::string>(cfg, "stats_output", "");
    if (!stats_out.empty()) {
        write_text(stats_out, report.dump(2) + "\n");
    }
    std::cout << report["measured"].dump(2) << "\n";
    return exit_ok;
}

int cmd_precompute(const json& cfg) {
    reject_unknown(cfg,
                   {"plan", "mixing", "trace", "d_emb", "threshold", "tile_budget_bytes", "tiles", "threads", "store_output",
                    "stats_output"},
                   "precompute config");
    auto trace = load_trace(cfg.at("trace"));
    auto d_emb = get_or<std::size_t>(cfg, "d_emb", 1);
    auto plan = plan_from(cfg.value("plan", json::object()), trace.num_entries() * d_emb, trace.iterations());
    auto c = load_mixing(cfg.at("mixing"));
    if (plan.dtype == corrnoise::Dtype::f32) {
        return precompute_typed<float>(cfg, plan, c, trace, d_emb);
    }
    return precompute_typed<double>(cfg, plan, c, trace, d_emb);
}

int cmd_verify(const json& cfg) {
    reject_unknown(cfg, {"seed", "n", "m", "band", "num_entries", "d_emb", "threshold", "zipf_alpha", "corrupt_store", "report"},
                   "verify config");
    corrnoise::VerifyOptions opt;
    opt.seed = get_or(cfg, "seed", opt.seed);
    opt.n = get_or(cfg, "n", opt.n);
    opt.m = get_or(cfg, "m", opt.m);
    opt.band = get_or(cfg, "band", opt.band);
    opt.num_entries = get_or(cfg, "num_entries", opt.num_entries);
    opt.d_emb = get_or(cfg, "d_emb", opt.d_emb);
    opt.threshold = threshold_from(cfg) == corrnoise::never_hot && cfg.contains("threshold") ? corrnoise::never_hot
                                                                                              : get_or(cfg, "threshold", opt.threshold);
    opt.zipf_alpha = get_or(cfg, "zipf_alpha", opt.zipf_alpha);
    opt.corrupt_store = get_or(cfg, "corrupt_store", false);

    auto results = corrnoise::run_verification(opt);
    bool all = true;
    json report = json::array();
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        all = all && r.passed;
        report.push_back({{"suite", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    }
    auto out = get_or<std::string>(cfg, "report", "");
    if (!out.empty()) {
        write_text(out, json{{"suites", report}, {"passed", all}}.dump(2) + "\n");
    }
    return all ? exit_ok : exit_verification;
}

/// Stats for the Cocoon-Emb model from a trace, predicted from its coalescing schedule.
corrnoise::EmbStoreStats emb_stats_from(const json& doc) {
    reject_unknown(doc, {"trace", "d_emb", "threshold", "scale"}, "emb_from_trace");
    auto trace = load_trace(doc.at("trace"));
    auto d_emb = get_or<std::uint32_t>(doc, "d_emb", 1);
    std::uint64_t th = threshold_from(doc);
    auto point = corrnoise::sweep_thresholds(trace, std::span<const std::uint64_t>(&th, 1)).front();
    auto split = corrnoise::split_hot_cold(corrnoise::frequency_histogram(trace), th);
    corrnoise::EmbStoreStats s{point.avg_noise_entries, split.cold_entries().size() * d_emb, d_emb};
    return s.scaled(get_or<double>(doc, "scale", 1.0));
}

void expand_sweep(const json& base, const std::vector<std::pair<std::string, json> >& axes, std::size_t i, std::vector<json>& out) {
    if (i == axes.size()) {
        out.push_back(base);
        return;
    }
    for (const auto& v : axes[i].second) {
        json doc = base;
        apply_override(doc, axes[i].first + "=" + v.dump());
        expand_sweep(doc, axes, i + 1, out);
    }
}

int cmd_simulate(const json& cfg) {
    reject_unknown(cfg, {"cost_model", "sweep", "emb_from_trace", "csv_output", "json_output"}, "simulate config");
    json base = {{"cost_model", cfg.value("cost_model", json::object())}};
    if (cfg.contains("emb_from_trace")) {
        base["emb_from_trace"] = cfg["emb_from_trace"];
    }
    std::vector<std::pair<std::string, json> > axes;
    if (cfg.contains("sweep")) {
        for (auto it = cfg["sweep"].begin(); it != cfg["sweep"].end(); ++it) {
            if (!it.value().is_array() || it.value().empty()) {
                throw corrnoise::ValidationError("sweep axis '" + it.key() + "' must be a non-empty array");
            }
            axes.emplace_back(it.key(), it.value());
        }
    }
    std::vector<json> points;
    expand_sweep(base, axes, 0, points);

    std::string csv = std::string(corrnoise::csv_header()) + "\n";
    json modeled = json::array();
    for (const auto& point : points) {
        auto model = corrnoise::cost_model_from_json(point["cost_model"]);
        if (point.contains("emb_from_trace")) {
            model.emb = emb_stats_from(point["emb_from_trace"]);
        }
        auto cmp = corrnoise::compare_strategies(model);
        json reports = json::array();
        for (const auto& r : cmp.reports) {
            csv += corrnoise::csv_row(r, model) + "\n";
            reports.push_back(corrnoise::to_json(r));
        }
        modeled.push_back({{"config", corrnoise::to_json(model)}, {"best", cmp.best}, {"reports", reports}});
    }
    auto csv_out = get_or<std::string>(cfg, "csv_output", "");
    auto json_out = get_or<std::string>(cfg, "json_output", "");
    if (!csv_out.empty()) {
        write_text(csv_out, csv);
    } else {
        std::cout << csv;
    }
    if (!json_out.empty()) {
        write_text(json_out, json{{"modeled", modeled}, {"metadata", {{"command", "simulate"}, {"points", points.size()}}}}.dump(2) + "\n");
    }
    return exit_ok;
}

template<typename T>
int train_typed(const json& cfg, const corrnoise::NoisePlan& plan, const corrnoise::MixingMatrix& c, const corrnoise::AccessTrace& trace,
                std::size_t d_emb) {
    auto mode = get_or<std::string>(cfg, "mode", "both");
    if (mode != "both" && mode != "eager" && mode != "lazy") {
        throw corrnoise::ValidationError("mode must be eager, lazy or both");
    }
    auto model = corrnoise::make_toy_model<T>(trace.num_entries(), d_emb, get_or<double>(cfg, "learning_rate", 0.05),
                                              get_or<std::uint64_t>(cfg, "batch_size", 1), get_or<std::uint64_t>(cfg, "init_seed", 1));
    json report = {{"mode", mode}};
    std::optional<corrnoise::TrainRun<T> > eager, lazy;
    if (mode != "lazy") {
        eager = corrnoise::train_eager(model, plan, c, trace);
        if (cfg.contains("eager_table")) {
            corrnoise::save_table<T>(eager->final_table, trace.num_entries(), d_emb, cfg["eager_table"].get<std::string>());
        }
    }
    if (mode != "eager") {
        const auto split = corrnoise::split_hot_cold(corrnoise::frequency_histogram(trace), threshold_from(cfg));
        corrnoise::CoalescedNoiseStore<T> store;
        if (cfg.contains("store")) {
            store = corrnoise::load_store<T>(cfg["store"].get<std::string>());
        } else {
            auto cold = split.cold_entries().size();
            store = corrnoise::precompute_coalesced<T>(plan, c, trace, split, corrnoise::TileSpec::for_tile_count(1, cold, d_emb),
                                                       default_threads());
        }
        lazy = corrnoise::train_lazy(model, plan, c, trace, split, store);
        if (cfg.contains("lazy_table")) {
            corrnoise::save_table<T>(lazy->final_table, trace.num_entries(), d_emb, cfg["lazy_table"].get<std::string>());
        }
        report["hot_fraction"] = split.hot_fraction();
        report["nnz"] = store.nnz();
    }
    int rc = exit_ok;
    if (eager && lazy) {
        auto d = corrnoise::compare_runs(*eager, *lazy);
        const double tol = plan.dtype == corrnoise::Dtype::f64 ? 1e-9 : 1e-4;
        report["max_abs_diff"] = d.max_abs;
        report["max_rel_diff"] = d.max_rel;
        report["access_max_rel_diff"] = d.access_max_rel;
        report["tolerance"] = tol;
        report["equivalent"] = d.max_rel <= tol && d.access_max_rel <= tol;
        std::cout << "eager vs lazy: max relative diff " << d.max_rel << " (access points " << d.access_max_rel << ")\n";
        if (!report["equivalent"].get<bool>()) {
            rc = exit_verification;
        }
    }
    if (cfg.contains("report")) {
        write_text(cfg["report"].get<std::string>(), report.dump(2) + "\n");
    }
    return rc;
}

int cmd_train_toy(const json& cfg) {
    reject_unknown(cfg,
                   {"plan", "mixing", "trace", "d_emb", "threshold", "learning_rate", "batch_size", "init_seed", "mode", "store",
                    "eager_table", "lazy_table", "report"},
                   "train-toy config");
    auto trace = load_trace(cfg.at("trace"));
    auto d_emb = get_or<std::size_t>(cfg, "d_emb", 1);
    auto plan = plan_from(cfg.value("plan", json::object()), trace.num_entries() * d_emb, trace.iterations());
    auto c = load_mixing(cfg.at("mixing"));
    if (plan.dtype == corrnoise::Dtype::f32) {
        return train_typed<float>(cfg, plan, c, trace, d_emb);
    }
    return train_typed<double>(cfg, plan, c, trace, d_emb);
}

}

int main(int argc, char** argv) {
    CLI::App app{"corrnoise: correlated-noise engine, coalesced noise store and strategy cost model"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    struct Command {
        const char* name;
        const char* help;
        int (*run)(const json&);
    };
    const Command commands[] = {
        {"gen-mixing", "write a mixing matrix document", cmd_gen_mixing},
        {"gen-trace", "generate Zipfian access traces", cmd_gen_trace},
        {"precompute", "pre-compute and coalesce cold-entry noise into a store", cmd_precompute},
        {"verify", "run the self-check suites", cmd_verify},
        {"simulate", "evaluate the strategy cost model over a sweep", cmd_simulate},
        {"train-toy", "train the toy embedding model eagerly and lazily and compare", cmd_train_toy},
    };
    std::vector<std::pair<CLI::App*, const Command*> > subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("-c,--config", config, "JSON config file");
        sub->add_option("--set", overrides, "override a scalar config leaf, key.path=value");
        subs.emplace_back(sub, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_validation;
    }

    try {
        for (auto [sub, cmd] : subs) {
            if (sub->parsed()) {
                return cmd->run(load_config(config, overrides));
            }
        }
    } catch (const corrnoise::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }
    return exit_validation;
}
