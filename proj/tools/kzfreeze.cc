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

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kzfreeze/cli.hpp"

namespace {

using kzfreeze::cli::Console;
using kzfreeze::cli::RunConfig;

// A flag that writes into a config key when given.
struct Override {
    std::string key;
    std::string value;
};

void add_override(CLI::App* cmd, std::vector<Override>& out, const std::string& flag, const std::string& key,
                  const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&out, key](const std::string& v) { out.push_back({key, v}); }, help + " (" + key + ")");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kzfreeze: spin-sign transitions and freeze-point analysis on 3x3 superspin lattices"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kzfreeze::kToolVersion));

    std::string config_path;
    std::vector<std::string> assignments;
    std::vector<Override> overrides;
    bool dump_config = false;
    app.add_option("-c,--config", config_path, "key=value config file with [section] headers")->check(CLI::ExistingFile);
    app.add_option("--set", assignments, "override any config key, e.g. --set model.alpha=0.3");
    app.add_flag("--dump-config", dump_config, "print the effective config and its hash before running");
    add_override(&app, overrides, "-o,--out", "paths.out", "output directory");
    add_override(&app, overrides, "--cache", "paths.cache", "cache root (default $KZFREEZE_CACHE or <out>/cache)");
    add_override(&app, overrides, "-j,--jobs", "run.jobs", "worker threads");

    auto* enumerate = app.add_subcommand("enumerate", "write the symmetry-class list");
    auto* census = app.add_subcommand("census", "classify every spin of every class");
    census->add_option_function<std::string>(
        "--grid",
        [&overrides](const std::string& v) {
            overrides.push_back({"grid.t_points", v});
            overrides.push_back({"grid.d_points", v});
        },
        "points per axis (grid.t_points, grid.d_points)");
    std::optional<std::string> window;
    census->add_option("--window", window, "grid window [0, W) on both axes");
    add_override(census, overrides, "--trace", "census.trace", "trace transition curves (true/false)");

    auto* freeze = app.add_subcommand("freeze", "freeze points for a list of anneal times");
    add_override(freeze, overrides, "--t-f", "schedule.t_f", "comma-separated anneal times in us");
    add_override(freeze, overrides, "--schedule", "schedule.path", "CSV schedule file with s,A,B columns");
    add_override(freeze, overrides, "--points", "freeze.points", "sweep points in s");

    auto* sample = app.add_subcommand("sample", "draw sample sets for the selected classes");
    add_override(sample, overrides, "--generator", "sample.generator", "kz_frozen, svmc or metropolis");
    add_override(sample, overrides, "--reads", "sample.reads", "reads per class");
    add_override(sample, overrides, "--seed", "sample.seed", "random seed");
    add_override(sample, overrides, "--flip-noise", "sample.flip_noise", "independent flip probability");
    add_override(sample, overrides, "--t-star", "sample.t_star", "freeze temperature");
    add_override(sample, overrides, "--delta-star", "sample.delta_star", "freeze transverse field");
    add_override(sample, overrides, "--classes", "sample.classes", "comma-separated class ids (default all)");
    add_override(sample, overrides, "--sweeps", "sample.sweeps", "Monte Carlo sweeps per read");

    auto* analyze = app.add_subcommand("analyze", "disagreement map, best-agreement region and defect counts");
    add_override(analyze, overrides, "--mode", "analyze.mode", "majority or per_read");
    add_override(analyze, overrides, "--slack", "analyze.slack", "best-agreement slack in disagreements");
    add_override(analyze, overrides, "--classes", "sample.classes", "restrict to these class ids");

    auto* exporter = app.add_subcommand("export", "write one cached magnetization grid as CSV");
    add_override(exporter, overrides, "--class", "export.class_id", "class id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kzfreeze::cli::kOk : kzfreeze::cli::kUsage;
    }

    Console con;
    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg.merge_text(kzfreeze::read_file(config_path));
        for (const auto& a : assignments) cfg.set_assignment(a);
        for (const auto& o : overrides) cfg.set(o.key, o.value);
        if (window) {
            cfg.set("grid.t_max", *window);
            cfg.set("grid.d_max", *window);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kzfreeze::cli::kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kzfreeze::cli::kIo;
    }
    if (dump_config) std::cout << cfg.to_text() << "# config_hash = " << cfg.hash() << "\n";

    const std::vector<std::pair<CLI::App*, std::function<nlohmann::json(const RunConfig&, Console&)>>> commands = {
        {enumerate, kzfreeze::cli::cmd_enumerate}, {census, kzfreeze::cli::cmd_census},
        {freeze, kzfreeze::cli::cmd_freeze},       {sample, kzfreeze::cli::cmd_sample},
        {analyze, kzfreeze::cli::cmd_analyze},     {exporter, kzfreeze::cli::cmd_export},
    };
    try {
        for (const auto& [sub, run] : commands)
            if (sub->parsed()) run(cfg, con);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kzfreeze::cli::kUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kzfreeze::cli::kUsage;
    } catch (const kzfreeze::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kzfreeze::cli::kNumerical;
    } catch (const kzfreeze::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kzfreeze::cli::kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kzfreeze::cli::kIo;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kzfreeze::cli::kNumerical;
    }
    return kzfreeze::cli::kOk;
}
