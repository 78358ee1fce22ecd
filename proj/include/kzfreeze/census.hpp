// Copyright 2026 The kzfreeze Authors
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

#pragma once

/// Spin-type census over all symmetry classes, with cached grids.

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "kzfreeze/io.hpp"
#include "kzfreeze/transitions.hpp"

namespace kzfreeze {

struct CensusOptions {
    GridSpec grid = GridSpec::standard();
    std::optional<std::filesystem::path> cache_dir;
    bool trace = false;   // also trace zero curves
    bool refine = false;  // refine traced vertices on the continuous m
    OriginAnalysisOptions origin;
    int jobs = 1;
    std::function<void(int done, int total)> progress;
};

struct ClassResult {
    int class_id = -1;
    std::array<SpinTypeRecord, kSites> records;
    std::array<InfinitesimalDeltaSign, kSites> origin;
    std::optional<TransitionSet> transitions;
    bool grid_cached = false;
};

struct CensusResult {
    std::vector<ClassResult> classes;
    TypeCensus counts;
    int cache_hits = 0;
    int cache_misses = 0;
    std::vector<std::string> warnings;

    std::vector<SpinTypeRecord> records() const {
        std::vector<SpinTypeRecord> out;
        for (const auto& c : classes) out.insert(out.end(), c.records.begin(), c.records.end());
        return out;
    }

    const SpinTypeRecord& record(int class_id, int spin) const {
        for (const auto& c : classes)
            if (c.class_id == class_id) return c.records[spin];
        throw std::out_of_range("class not in census");
    }
};

/// The magnetization grid of `x`, read from the cache when possible.
inline MagnetizationGrid cached_magnetization_grid(const SquareLatticeInstance& x, const GridSpec& grid,
                                                   const std::optional<ResultCache>& cache, bool* hit = nullptr,
                                                   std::string* warning = nullptr) {
    if (cache) {
        if (auto g = cache->load_grid(x, grid, warning)) {
            if (hit) *hit = true;
            return std::move(*g);
        }
    }
    if (hit) *hit = false;
    auto g = magnetization_grid(x, grid);
    if (cache) cache->store_grid(x, g);
    return g;
}

inline ClassResult analyze_class(int class_id, const SquareLatticeInstance& x, const CensusOptions& opt,
                                 const std::optional<ResultCache>& cache, std::string* warning = nullptr) {
    ClassResult r;
    r.class_id = class_id;
    auto grid = cached_magnetization_grid(x, opt.grid, cache, &r.grid_cached, warning);
    if (opt.trace) {
        MagnetizationFunction m;
        std::optional<MagnetizationEvaluator> ev;
        if (opt.refine) {
            ev.emplace(x);
            m = as_function(*ev);
        }
        r.transitions = trace_transitions(grid, m);
    }
    r.origin = infinitesimal_delta_signs(x, opt.origin);
    auto signs = SignMap::from_grid(grid);
    auto gm = classical_ground_manifold(x);
    for (int i = 0; i < kSites; ++i) {
        ClassificationInputs in;
        in.class_id = class_id;
        in.spin = i;
        in.balance = gm.balance[i];
        in.infinitesimal_sign = r.origin[i].sign;
        in.has_transition = signs.has_sign_change(i);
        in.n_transitions = r.transitions ? int(r.transitions->spins[i].polylines.size()) : 0;
        r.records[i] = classify_spin(in);
    }
    return r;
}

/// Classifies every spin of the given classes. Work is spread over
/// `opt.jobs` threads; results come back in class order.
inline CensusResult run_census(const std::vector<SquareLatticeInstance>& classes, const CensusOptions& opt = {},
                               const std::vector<int>& subset = {}) {
    std::vector<int> ids = subset;
    if (ids.empty())
        for (int k = 0; k < int(classes.size()); ++k) ids.push_back(k);
    std::optional<ResultCache> cache;
    if (opt.cache_dir) cache.emplace(*opt.cache_dir);

    CensusResult out;
    out.classes.resize(ids.size());
    std::atomic<std::size_t> next{0};
    std::atomic<int> done{0};
    std::mutex mu;
    std::exception_ptr error;
    auto worker = [&] {
        while (true) {
            std::size_t k = next++;
            if (k >= ids.size()) return;
            try {
                std::string warning;
                out.classes[k] = analyze_class(ids[k], classes.at(std::size_t(ids[k])), opt, cache, &warning);
                std::lock_guard lock(mu);
                if (!warning.empty()) out.warnings.push_back(warning);
                int d = ++done;
                if (opt.progress) opt.progress(d, int(ids.size()));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                next = ids.size();
            }
        }
    };
    const int jobs = std::max(1, opt.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    for (const auto& c : out.classes) (c.grid_cached ? out.cache_hits : out.cache_misses)++;
    out.counts = tally(out.records());
    return out;
}

inline std::string census_to_csv(const CensusResult& c, std::string_view config_hash) {
    std::string out = provenance_comment(config_hash);
    out += "class_id,spin,type,n_transitions,origin_flag,count_up,count_down,infinitesimal_sign\n";
    for (const auto& cls : c.classes)
        for (const auto& r : cls.records)
            out += std::to_string(r.class_id) + "," + std::to_string(r.spin) + "," + to_string(r.type) + "," +
                   std::to_string(r.n_transitions) + "," + (r.origin_transition ? "1" : "0") + "," +
                   std::to_string(r.balance.up) + "," + std::to_string(r.balance.down) + "," +
                   std::to_string(int(r.infinitesimal_sign)) + "\n";
    return out;
}

/// One JSON line per (class_id, spin) with that spin's polylines.
inline std::string transitions_to_jsonl(const CensusResult& c, std::string_view config_hash) {
    std::string out;
    for (const auto& cls : c.classes) {
        if (!cls.transitions) continue;
        for (int i = 0; i < kSites; ++i) {
            nlohmann::json lines = nlohmann::json::array();
            for (const auto& p : cls.transitions->spins[i].polylines) {
                nlohmann::json pts = nlohmann::json::array();
                for (const auto& v : p.points) pts.push_back({v.temperature, v.delta});
                lines.push_back({{"closed", p.closed}, {"points", pts}});
            }
            nlohmann::json rec = {{"class_id", cls.class_id},
                                  {"spin", i},
                                  {"type", to_string(cls.records[i].type)},
                                  {"polylines", lines},
                                  {"ambiguous_cells", cls.transitions->spins[i].ambiguous.size()},
                                  {"config_hash", config_hash},
                                  {"version", kToolVersion}};
            out += rec.dump() + "\n";
        }
    }
    return out;
}

}  // namespace kzfreeze
