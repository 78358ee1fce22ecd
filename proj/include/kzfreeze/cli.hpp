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

// Run configuration and the subcommands of the kzfreeze tool. The binary in
// tools/ only parses flags and maps exceptions to exit codes.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kzfreeze/analysis.hpp"
#include "kzfreeze/census.hpp"
#include "kzfreeze/dynamics.hpp"
#include "kzfreeze/sampler.hpp"

namespace kzfreeze::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

// ---------------------------------------------------------------------------
// Configuration: "[section]" headers and "key = value" lines. Values are
// normalized when set, so equal settings always hash equally.

enum class KeyKind { Int, Double, Bool, String, DoubleList, IntList };

struct KeySpec {
    const char* name;  // section.key
    KeyKind kind;
    const char* fallback;
    bool semantic;  // part of the config hash
};

inline const std::vector<KeySpec>& config_keys() {
    static const std::vector<KeySpec> keys = {
        {"grid.t_points", KeyKind::Int, "101", true},
        {"grid.d_points", KeyKind::Int, "101", true},
        {"grid.t_max", KeyKind::Double, "5", true},
        {"grid.d_max", KeyKind::Double, "5", true},
        {"census.trace", KeyKind::Bool, "true", true},
        {"census.ed_check", KeyKind::Bool, "true", true},
        {"census.density_bins", KeyKind::Int, "50", true},
        {"model.alpha", KeyKind::Double, "0.25", true},
        {"model.alpha_s", KeyKind::Double, "1", true},
        {"model.cell_mode", KeyKind::String, "truncated4", true},
        {"model.internal", KeyKind::String, "average", true},
        {"model.include_fields", KeyKind::Bool, "true", true},
        {"schedule.path", KeyKind::String, "", true},
        {"schedule.t_f", KeyKind::DoubleList, "20,200,990", true},
        {"bath.eta", KeyKind::Double, "0.08", true},
        {"bath.omega_c", KeyKind::Double, "80", true},
        {"bath.temperature_mk", KeyKind::Double, "17", true},
        {"freeze.points", KeyKind::Int, "200", true},
        {"freeze.s_min", KeyKind::Double, "0.005", true},
        {"freeze.s_max", KeyKind::Double, "0.999", true},
        {"freeze.ds", KeyKind::Double, "0.001", true},
        {"freeze.class_id", KeyKind::Int, "-1", true},
        {"sample.generator", KeyKind::String, "kz_frozen", true},
        {"sample.classes", KeyKind::IntList, "", true},
        {"sample.reads", KeyKind::Int, "1000", true},
        {"sample.seed", KeyKind::Int, "1", true},
        {"sample.flip_noise", KeyKind::Double, "0", true},
        {"sample.randomize_frames", KeyKind::Bool, "true", true},
        {"sample.t_star", KeyKind::Double, "-1", true},
        {"sample.delta_star", KeyKind::Double, "-1", true},
        {"sample.freeze_t_f", KeyKind::Double, "20", true},
        {"sample.sweeps", KeyKind::Int, "1000", true},
        {"analyze.mode", KeyKind::String, "majority", true},
        {"analyze.slack", KeyKind::Int, "3", true},
        {"export.class_id", KeyKind::Int, "0", true},
        {"paths.out", KeyKind::String, "kzfreeze_out", false},
        {"paths.cache", KeyKind::String, "", false},
        {"paths.samples", KeyKind::String, "", false},
        {"run.jobs", KeyKind::Int, "1", false},
    };
    return keys;
}

inline const KeySpec& key_spec(const std::string& key) {
    for (const auto& k : config_keys())
        if (key == k.name) return k;
    throw std::invalid_argument("unknown config key '" + key + "'");
}

inline std::string trim(std::string s) {
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(d))
        throw std::invalid_argument("config key '" + key + "' expects a number, got '" + v + "'");
    return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long n = 0;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw std::invalid_argument("config key '" + key + "' expects an integer, got '" + v + "'");
    return n;
}

inline std::string normalize_value(const KeySpec& k, const std::string& raw) {
    const std::string v = trim(raw);
    switch (k.kind) {
        case KeyKind::Int: return std::to_string(parse_int(k.name, v));
        case KeyKind::Double: return csv_number(parse_double(k.name, v));
        case KeyKind::Bool:
            if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
            if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
            throw std::invalid_argument("config key '" + std::string(k.name) + "' expects true/false");
        case KeyKind::String: return v;
        case KeyKind::DoubleList:
        case KeyKind::IntList: {
            std::string out;
            for (const auto& item : split(v, ',')) {
                if (!out.empty()) out += ",";
                out += k.kind == KeyKind::IntList ? std::to_string(parse_int(k.name, item))
                                                  : csv_number(parse_double(k.name, item));
            }
            return out;
        }
    }
    return v;
}

class RunConfig {
  public:
    RunConfig() {
        for (const auto& k : config_keys()) values_[k.name] = normalize_value(k, k.fallback);
    }

    void set(const std::string& key, const std::string& value) {
        const auto& spec = key_spec(key);
        values_[key] = normalize_value(spec, value);
    }

    /// "section.key=value", as given on the command line.
    void set_assignment(const std::string& text) {
        auto eq = text.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + text + "'");
        set(trim(text.substr(0, eq)), text.substr(eq + 1));
    }

    void merge_text(const std::string& text) {
        std::istringstream in(text);
        std::string line, section;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw std::invalid_argument("config line " + std::to_string(n) + ": bad section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos || section.empty())
                throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
            set(section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
        }
    }

    static RunConfig from_text(const std::string& text) {
        RunConfig c;
        c.merge_text(text);
        return c;
    }

    std::string to_text() const {
        std::string out, section;
        for (const auto& k : config_keys()) {
            std::string name = k.name;
            auto dot = name.find('.');
            if (name.substr(0, dot) != section) {
                section = name.substr(0, dot);
                out += (out.empty() ? "[" : "\n[") + section + "]\n";
            }
            out += name.substr(dot + 1) + " = " + values_.at(name) + "\n";
        }
        return out;
    }

    /// Hash over semantically relevant keys only (paths and job counts excluded).
    std::string hash() const {
        ContentHash h;
        h.text("kzfreeze-config");
        for (const auto& k : config_keys())
            if (k.semantic) h.text(k.name).text(values_.at(k.name));
        return h.hex();
    }

    const std::string& str(const std::string& key) const {
        key_spec(key);
        return values_.at(key);
    }
    double num(const std::string& key) const { return std::stod(str(key)); }
    long long integer(const std::string& key) const { return std::stoll(str(key)); }
    bool flag(const std::string& key) const { return str(key) == "true"; }
    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (const auto& s : split(str(key), ',')) out.push_back(std::stod(s));
        return out;
    }
    std::vector<int> integers(const std::string& key) const {
        std::vector<int> out;
        for (const auto& s : split(str(key), ',')) out.push_back(std::stoi(s));
        return out;
    }

    bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  private:
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Derived settings.

struct Console {
    std::ostream& out = std::cout;
    std::ostream& err = std::cerr;
    std::vector<std::string> warnings;

    void warn(const std::string& w) {
        warnings.push_back(w);
        err << "warning: " << w << "\n";
    }
};

inline fs::path out_dir(const RunConfig& c) { return c.str("paths.out"); }

/// paths.cache, then $KZFREEZE_CACHE, then <out>/cache.
inline fs::path cache_root(const RunConfig& c) {
    if (!c.str("paths.cache").empty()) return c.str("paths.cache");
    if (const char* env = std::getenv("KZFREEZE_CACHE"); env && *env) return env;
    return out_dir(c) / "cache";
}

inline fs::path samples_dir(const RunConfig& c) {
    return c.str("paths.samples").empty() ? out_dir(c) / "samples" : fs::path(c.str("paths.samples"));
}

inline GridSpec grid_spec(const RunConfig& c) {
    auto nt = c.integer("grid.t_points"), nd = c.integer("grid.d_points");
    if (nt < 2 || nd < 2 || nt > 100000 || nd > 100000) throw std::invalid_argument("grid needs 2 or more points per axis");
    if (!(c.num("grid.t_max") > 0) || !(c.num("grid.d_max") > 0)) throw std::invalid_argument("grid window must be positive");
    return {Axis::uniform(int(nt), 0.0, c.num("grid.t_max")), Axis::uniform(int(nd), 0.0, c.num("grid.d_max"))};
}

inline CellMode cell_mode(const RunConfig& c) { return parse_cell_mode(c.str("model.cell_mode")); }

inline K4Options k4_options(const RunConfig& c) {
    K4Options o;
    o.alpha = c.num("model.alpha");
    o.alpha_s = c.num("model.alpha_s");
    const auto& internal = c.str("model.internal");
    if (internal == "average")
        o.internal = InternalCoupling::Average;
    else if (internal == "full")
        o.internal = InternalCoupling::Full;
    else
        throw std::invalid_argument("model.internal must be 'average' or 'full'");
    o.include_fields = c.flag("model.include_fields");
    return o;
}

inline Bath bath(const RunConfig& c) {
    Bath b;
    b.eta = c.num("bath.eta");
    b.omega_c = c.num("bath.omega_c");
    b.temperature = c.num("bath.temperature_mk") * 1e-3 * kGHzPerKelvin;
    b.validate();
    return b;
}

/// The configured schedule file, or the built-in surrogate with a warning
/// when no file is configured or it cannot be read.
inline Schedule load_schedule(const RunConfig& c, Console& con) {
    const auto& path = c.str("schedule.path");
    if (path.empty()) {
        con.warn("no schedule file configured; using the DEFAULT SURROGATE schedule (not device data)");
        return Schedule::default_surrogate();
    }
    if (!fs::exists(path)) {
        con.warn("schedule file '" + path + "' not found; using the DEFAULT SURROGATE schedule (not device data)");
        return Schedule::default_surrogate();
    }
    return Schedule::from_csv(read_file(path), 20.0);
}

inline int jobs(const RunConfig& c) {
    auto j = c.integer("run.jobs");
    if (j < 1) throw std::invalid_argument("--jobs must be at least 1");
    return int(j);
}

template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr error;
    auto worker = [&] {
        for (int k = next++; k < n; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
}

inline void write_output(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    atomic_write_file(path, content);
}

// ---------------------------------------------------------------------------
// Commands. Each writes its files under paths.out and returns a summary.

/// Class list, cached under <cache>/classes.json with a checksum.
inline std::vector<SquareLatticeInstance> load_classes(const RunConfig& c, Console& con) {
    const auto path = cache_root(c) / "classes.json";
    if (fs::exists(path)) {
        try {
            auto j = nlohmann::json::parse(read_file(path));
            auto body = j.at("classes").dump();
            if (j.at("checksum").get<std::string>() != ContentHash().text(body).hex())
                throw std::invalid_argument("checksum mismatch");
            std::vector<SquareLatticeInstance> out;
            for (const auto& e : j.at("classes")) {
                if (e.at("class_id").get<std::size_t>() != out.size()) throw std::invalid_argument("class ids out of order");
                out.push_back(instance_from_json(e));
            }
            if (out.empty()) throw std::invalid_argument("empty class list");
            return out;
        } catch (const std::exception& e) {
            con.warn("ignoring corrupt cache entry " + path.string() + " (" + e.what() + "); recomputing");
        }
    }
    auto classes = enumerate_classes();
    auto list = class_list_to_json(classes);
    nlohmann::json j = {{"checksum", ContentHash().text(list.dump()).hex()}, {"classes", list}};
    write_output(path, j.dump());
    return classes;
}

inline nlohmann::json cmd_enumerate(const RunConfig& c, Console& con) {
    auto classes = load_classes(c, con);
    nlohmann::json j = {{"version", kToolVersion},
                        {"config_hash", c.hash()},
                        {"count", classes.size()},
                        {"classes", class_list_to_json(classes)}};
    write_output(out_dir(c) / "classes.json", j.dump(1) + "\n");
    con.out << classes.size() << " classes\n";
    return {{"count", classes.size()}};
}

inline CensusOptions census_options(const RunConfig& c, Console& con) {
    CensusOptions opt;
    opt.grid = grid_spec(c);
    opt.cache_dir = cache_root(c);
    opt.trace = c.flag("census.trace");
    opt.origin.ed_check = c.flag("census.ed_check");
    opt.jobs = jobs(c);
    opt.progress = [&con](int done, int total) {
        if (done % 50 == 0 || done == total) con.err << "census: " << done << "/" << total << "\n";
    };
    return opt;
}

inline nlohmann::json census_counts_json(const TypeCensus& t) {
    return {{"type0", t.counts[0]}, {"typeI", t.counts[1]},   {"typeII", t.counts[2]},
            {"typeIII", t.counts[3]}, {"total", t.total()}, {"transitioning", t.transitioning()}};
}

inline nlohmann::json cmd_census(const RunConfig& c, Console& con) {
    auto classes = load_classes(c, con);
    auto census = run_census(classes, census_options(c, con));
    for (const auto& w : census.warnings) con.warn(w);
    const auto hash = c.hash();
    write_output(out_dir(c) / "census.csv", census_to_csv(census, hash));
    if (c.flag("census.trace")) {
        write_output(out_dir(c) / "transitions.jsonl", transitions_to_jsonl(census, hash));
        std::vector<TypedTransitions> typed;
        for (const auto& cls : census.classes)
            for (int i = 0; i < kSites; ++i) typed.push_back({cls.records[i].type, &cls.transitions->spins[i]});
        const int bins = int(c.integer("census.density_bins"));
        auto d = transition_density(typed, c.num("grid.t_max"), c.num("grid.d_max"), bins, bins);
        std::string csv = provenance_comment(hash) + "type,T,delta,count\n";
        for (int t = 0; t < 4; ++t)
            for (int a = 0; a < bins; ++a)
                for (int b = 0; b < bins; ++b) {
                    auto n = d.counts[std::size_t(t)][std::size_t(a) * std::size_t(bins) + std::size_t(b)];
                    if (n == 0) continue;
                    csv += to_string(SpinType(t)) + "," + csv_number((a + 0.5) * d.window_t / bins) + "," +
                           csv_number((b + 0.5) * d.window_d / bins) + "," + std::to_string(n) + "\n";
                }
        write_output(out_dir(c) / "transition_density.csv", csv);
    }
    nlohmann::json summary = census_counts_json(census.counts);
    summary["cache_hits"] = census.cache_hits;
    summary["cache_misses"] = census.cache_misses;
    summary["config_hash"] = hash;
    summary["version"] = kToolVersion;
    write_output(out_dir(c) / "census_summary.json", summary.dump(1) + "\n");
    con.out << "Type 0 " << census.counts.counts[0] << ", Type I " << census.counts.counts[1] << ", Type II "
            << census.counts.counts[2] << ", Type III " << census.counts.counts[3] << " (total "
            << census.counts.total() << ", transitioning " << census.counts.transitioning() << ")\n";
    return summary;
}

struct FreezeSummaryRow {
    double t_f = 0, s_star = 0, temperature = 0, delta = 0;
    std::string regime;
};

inline std::vector<FreezeSummaryRow> read_freeze_summary(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<FreezeSummaryRow> out;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        auto f = split(line, ',');
        if (f.size() != 5) throw IoError("malformed freeze summary row '" + line + "'");
        try {
            out.push_back({std::stod(f[0]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), f[1]});
        } catch (const std::exception&) {
            throw IoError("malformed freeze summary row '" + line + "'");
        }
    }
    return out;
}

inline nlohmann::json cmd_freeze(const RunConfig& c, Console& con) {
    FreezeRequest req;
    req.schedule = load_schedule(c, con);
    req.bath = bath(c);
    req.k4 = k4_options(c);
    req.cell_mode = cell_mode(c);
    req.sweep.points = int(c.integer("freeze.points"));
    req.sweep.s_min = c.num("freeze.s_min");
    req.sweep.s_max = c.num("freeze.s_max");
    req.sweep.ds = c.num("freeze.ds");
    if (auto id = c.integer("freeze.class_id"); id >= 0) req.instance = load_classes(c, con).at(std::size_t(id));
    const auto t_f = c.numbers("schedule.t_f");
    if (t_f.empty()) throw std::invalid_argument("schedule.t_f needs at least one anneal time");
    auto est = freeze_times(req, t_f);

    const auto hash = c.hash();
    std::string banner = provenance_comment(hash);
    if (req.schedule.surrogate) banner += "# WARNING: default surrogate schedule, not device data\n";
    std::string curves = banner + "t_f,s,inv_quench_rate,relaxation_time,gap,overlap\n";
    std::string summary = banner + "t_f,regime,s_star,T_eff,delta_eff\n";
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : est) {
        auto one = freeze_curves_to_csv(e, hash);
        curves += one.substr(one.find('\n', one.find('\n') + 1) + 1);  // drop comment and header
        summary += csv_number(e.t_f) + "," + to_string(e.regime) + "," + csv_number(e.s_star) + "," +
                   csv_number(e.temperature) + "," + csv_number(e.delta) + "\n";
        j.push_back({{"t_f", e.t_f},
                     {"regime", to_string(e.regime)},
                     {"s_star", e.s_star},
                     {"T_eff", e.temperature},
                     {"delta_eff", e.delta}});
        con.out << "t_f = " << e.t_f << " us: t*/t_f = " << e.s_star << " (" << to_string(e.regime)
                << "), T* = " << e.temperature << ", delta* = " << e.delta << "\n";
    }
    write_output(out_dir(c) / "freeze_curves.csv", curves);
    write_output(out_dir(c) / "freeze_summary.csv", summary);
    return {{"points", j}, {"surrogate_schedule", req.schedule.surrogate}};
}

inline std::vector<int> selected_classes(const RunConfig& c, std::size_t count) {
    auto ids = c.integers("sample.classes");
    if (ids.empty())
        for (int k = 0; k < int(count); ++k) ids.push_back(k);
    for (int id : ids)
        if (id < 0 || std::size_t(id) >= count) throw std::invalid_argument("class id " + std::to_string(id) + " out of range");
    return ids;
}

inline std::string sample_file_name(int class_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%04d.csv", class_id);
    return buf;
}

inline nlohmann::json cmd_sample(const RunConfig& c, Console& con) {
    auto classes = load_classes(c, con);
    auto ids = selected_classes(c, classes.size());
    const auto generator = c.str("sample.generator");
    const int reads = int(c.integer("sample.reads"));
    const auto seed = std::uint64_t(c.integer("sample.seed"));
    if (reads < 1) throw std::invalid_argument("sample.reads must be positive");

    double t_star = c.num("sample.t_star"), delta_star = c.num("sample.delta_star");
    if (generator == "kz_frozen" && (t_star < 0 || delta_star < 0)) {
        const auto path = out_dir(c) / "freeze_summary.csv";
        if (!fs::exists(path))
            throw std::invalid_argument("kz_frozen sampling needs sample.t_star/delta_star or a freeze summary in " +
                                        out_dir(c).string());
        bool found = false;
        for (const auto& row : read_freeze_summary(path))
            if (std::abs(row.t_f - c.num("sample.freeze_t_f")) < 1e-9) {
                t_star = row.temperature;
                delta_star = row.delta;
                found = true;
            }
        if (!found) throw std::invalid_argument("freeze summary has no row for sample.freeze_t_f");
    }

    Schedule schedule;
    if (generator == "svmc") schedule = load_schedule(c, con);
    const auto t_f_list = c.numbers("schedule.t_f");
    if (!t_f_list.empty()) schedule = schedule.with_anneal_time(t_f_list.front());
    const auto mode = cell_mode(c);
    const double alpha = c.num("model.alpha"), alpha_s = c.num("model.alpha_s");
    const long sweeps = long(c.integer("sample.sweeps"));
    const auto temp = bath(c).temperature;
    const auto hash = c.hash();
    const auto dir = samples_dir(c);

    parallel_for(int(ids.size()), jobs(c), [&](int k) {
        const int id = ids[std::size_t(k)];
        const auto& x = classes[std::size_t(id)];
        SampleSet s;
        if (generator == "kz_frozen") {
            FrozenSampleOptions opt;
            opt.reads = reads;
            opt.seed = seed;
            opt.flip_noise = c.num("sample.flip_noise");
            opt.randomize_frames = c.flag("sample.randomize_frames");
            s = kz_frozen_sample(id, x, t_star, delta_star, opt);
        } else if (generator == "svmc") {
            s = sample_with_frames(id, x, mode, alpha, alpha_s, reads, seed, [&](const ChimeraIsing& h, int r) {
                SvmcOptions o;
                o.sweeps = sweeps;
                o.reads = 1;
                o.temperature = temp;
                o.seed = seed * 1000003ull + std::uint64_t(r);
                return svmc_anneal(h, schedule, o, id);
            });
        } else if (generator == "metropolis") {
            s = sample_with_frames(id, x, mode, alpha, alpha_s, reads, seed, [&](const ChimeraIsing& h, int r) {
                MetropolisOptions o;
                o.sweeps = sweeps;
                o.reads = 1;
                o.seed = seed * 1000003ull + std::uint64_t(r);
                return metropolis_anneal(h, o, id);
            });
        } else {
            throw std::invalid_argument("unknown sample.generator '" + generator + "'");
        }
        write_output(dir / sample_file_name(id), sample_set_to_text(s, hash));
    });
    con.out << ids.size() << " sample sets written to " << dir.string() << "\n";
    return {{"classes", ids.size()}, {"T_star", t_star}, {"delta_star", delta_star}, {"generator", generator}};
}

inline std::map<int, SampleSet> load_samples(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("sample directory " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().rfind("class_", 0) == 0 && e.path().extension() == ".csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::map<int, SampleSet> out;
    for (const auto& f : files) {
        try {
            auto s = sample_set_from_text(read_file(f));
            out[s.class_id] = std::move(s);
        } catch (const std::invalid_argument& e) {
            throw IoError("cannot read " + f.string() + ": " + e.what());
        }
    }
    if (out.empty()) throw IoError("no sample files in " + dir.string());
    return out;
}

inline nlohmann::json cmd_analyze(const RunConfig& c, Console& con) {
    auto classes = load_classes(c, con);
    auto samples = load_samples(samples_dir(c));
    std::vector<int> ids = c.integers("sample.classes");
    if (ids.empty())
        for (const auto& [id, s] : samples) ids.push_back(id);
    for (int id : ids)
        if (id < 0 || std::size_t(id) >= classes.size()) throw std::invalid_argument("class id out of range");

    auto opt = census_options(c, con);
    opt.trace = false;
    auto census = run_census(classes, opt, ids);
    for (const auto& w : census.warnings) con.warn(w);
    std::optional<ResultCache> cache;
    cache.emplace(cache_root(c));
    std::vector<MagnetizationGrid> grids;
    for (int id : ids) grids.push_back(cached_magnetization_grid(classes[std::size_t(id)], opt.grid, cache));

    const auto& mode_name = c.str("analyze.mode");
    CompareMode mode;
    if (mode_name == "majority")
        mode = CompareMode::Majority;
    else if (mode_name == "per_read")
        mode = CompareMode::PerRead;
    else
        throw std::invalid_argument("analyze.mode must be 'majority' or 'per_read'");

    std::vector<ClassData> data;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        auto it = samples.find(ids[k]);
        data.push_back({ids[k], &grids[k], &census.classes[k].records, it == samples.end() ? nullptr : &it->second});
    }
    auto g = disagreement_grid(data, mode);
    for (const auto& w : g.warnings) con.warn(w);

    const long slack = long(c.integer("analyze.slack"));
    auto region = best_agreement_region(g, slack);
    auto centroid = region_centroid(g, region);
    auto [bt, bd] = g.argmin();
    const double t_best = g.grid.temperature.values[std::size_t(bt)], d_best = g.grid.delta.values[std::size_t(bd)];

    HeatmapOptions hm;
    hm.slack = slack;
    hm.title = "spin-sign disagreement";
    const auto& meta = samples.begin()->second.metadata;
    if (meta.contains("T_star") && meta.contains("delta_star"))
        hm.marker = TransitionPoint{meta["T_star"].get<double>(), meta["delta_star"].get<double>()};
    const auto hash = c.hash();
    write_output(out_dir(c) / "disagreement.csv", disagreement_to_csv(g, hash));
    write_output(out_dir(c) / "disagreement.svg", disagreement_svg(g, hm, hash));

    // Defects against the final equilibrium signs.
    auto schedule = load_schedule(c, con);
    const double t_final =
        default_final_temperature(schedule, c.num("model.alpha"), c.num("model.alpha_s"), cell_mode(c), bath(c).temperature);
    DefectReport total;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (!data[k].samples) continue;
        total += count_defects(*data[k].samples, final_equilibrium_signs(classes[std::size_t(ids[k])], t_final),
                               census.classes[k].records);
    }
    std::string defects = provenance_comment(hash) + "type,defects,spin_reads,rate\n";
    for (int t = 0; t < 4; ++t)
        defects += to_string(SpinType(t)) + "," + std::to_string(total.defects[std::size_t(t)]) + "," +
                   std::to_string(total.spin_reads[std::size_t(t)]) + "," + csv_number(total.rate(SpinType(t))) + "\n";
    write_output(out_dir(c) / "defects.csv", defects);

    nlohmann::json summary = {{"argmin", {{"T", t_best}, {"delta", d_best}}},
                              {"min_count", g.min_count()},
                              {"denominator", g.denominator},
                              {"missing_classes", g.missing_classes},
                              {"region_centroid", {{"T", centroid.temperature}, {"delta", centroid.delta}}},
                              {"slack", slack},
                              {"type_i_defect_rate", total.type_i_rate()},
                              {"config_hash", hash},
                              {"version", kToolVersion}};
    write_output(out_dir(c) / "analysis_summary.json", summary.dump(1) + "\n");
    con.out << "best agreement at T = " << t_best << ", delta = " << d_best << " (" << g.min_count()
            << " disagreements)\n";
    return summary;
}

inline nlohmann::json cmd_export(const RunConfig& c, Console& con) {
    auto classes = load_classes(c, con);
    const auto id = c.integer("export.class_id");
    if (id < 0 || std::size_t(id) >= classes.size()) throw std::invalid_argument("export.class_id out of range");
    std::optional<ResultCache> cache;
    cache.emplace(cache_root(c));
    bool hit = false;
    std::string warning;
    auto g = cached_magnetization_grid(classes[std::size_t(id)], grid_spec(c), cache, &hit, &warning);
    if (!warning.empty()) con.warn(warning);
    const auto path = out_dir(c) / ("grid_" + sample_file_name(int(id)));
    write_output(path, grid_to_csv(g, c.hash()));
    con.out << "wrote " << path.string() << (hit ? " (cached)" : "") << "\n";
    return {{"path", path.string()}, {"cached", hit}};
}

}  // namespace kzfreeze::cli
