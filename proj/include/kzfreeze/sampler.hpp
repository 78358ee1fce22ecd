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

/// Synthetic annealer read-outs: a frozen-equilibrium sampler and two
/// classical annealers on the embedded spin-level Hamiltonian.

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kzfreeze/chimera.hpp"
#include "kzfreeze/dynamics.hpp"
#include "kzfreeze/ed.hpp"
#include "kzfreeze/io.hpp"
#include "kzfreeze/lattice.hpp"
#include "kzfreeze/transitions.hpp"

namespace kzfreeze {

using SuperspinRead = std::array<Sign, kSites>;  // 0 marks a tied cell vote

struct SampleSet {
    int class_id = -1;
    nlohmann::json metadata = nlohmann::json::object();  // generator, seed, t_f, alpha, ...
    std::vector<SuperspinRead> reads;                     // canonical frame
    std::vector<SymmetryElement> frames;                  // element applied to each read

    int size() const { return int(reads.size()); }

    long indeterminate() const {
        long n = 0;
        for (const auto& r : reads)
            for (auto s : r) n += s == 0;
        return n;
    }

    /// Per-spin sum of read signs.
    std::array<long, kSites> sign_sums() const {
        std::array<long, kSites> out{};
        for (const auto& r : reads)
            for (int i = 0; i < kSites; ++i) out[i] += r[i];
        return out;
    }
};

// ---------------------------------------------------------------------------
// Frames.

/// Read in the frame of apply(g, x) corresponding to canonical read `s`.
inline SuperspinRead randomize_frame(const SuperspinRead& s, const SymmetryElement& g) { return transform_sites(g, s); }

/// Inverse of randomize_frame.
inline SuperspinRead restore_frame(const SuperspinRead& s, const SymmetryElement& g) {
    return transform_sites(g.inverse(), s);
}

inline SymmetryElement random_element(std::mt19937_64& rng) {
    return SymmetryElement::from_index(int(rng() % std::uint64_t(kSymmetryOrder)));
}

/// Independent stream for read `read` of a run seeded with `seed`.
inline std::mt19937_64 read_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t read) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32),
                      std::uint32_t(read), std::uint32_t(read >> 32)};
    return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// Frozen-equilibrium sampler.

struct FrozenSampleOptions {
    int reads = 1000;
    double flip_noise = 0.0;
    std::uint64_t seed = 1;
    bool randomize_frames = true;
};

/// Reads drawn from magnetizations `m` (canonical frame): each spin reports
/// sign(m_i), flipped with probability flip_noise; |m_i| below the zero
/// tolerance gives a fair coin.
inline SampleSet frozen_sample_from_magnetization(int class_id, const std::array<double, kSites>& m,
                                                  const FrozenSampleOptions& opt) {
    if (opt.reads < 0) throw std::invalid_argument("read count must be nonnegative");
    if (!(opt.flip_noise >= 0.0 && opt.flip_noise < 0.5 + 1e-15))
        throw std::invalid_argument("flip_noise must lie in [0, 0.5]");
    SampleSet out;
    out.class_id = class_id;
    out.metadata = {{"generator", "kz_frozen"}, {"seed", opt.seed}, {"flip_noise", opt.flip_noise},
                    {"randomize_frames", opt.randomize_frames}};
    out.reads.reserve(std::size_t(opt.reads));
    out.frames.reserve(std::size_t(opt.reads));
    std::bernoulli_distribution flip(opt.flip_noise), coin(0.5);
    // One stream per class; reads are cheap enough that per-read seeding dominates.
    auto rng = read_stream(opt.seed, std::uint64_t(class_id), 0);
    for (int r = 0; r < opt.reads; ++r) {
        SymmetryElement g = opt.randomize_frames ? random_element(rng) : SymmetryElement::identity();
        // The transformed instance has magnetizations transform_sites(g, m).
        auto mg = transform_sites(g, m);
        SuperspinRead read{};
        for (int i = 0; i < kSites; ++i) {
            Sign s = sign_of(mg[i]);
            if (s == 0) s = coin(rng) ? 1 : -1;
            if (flip(rng)) s = Sign(-s);
            read[i] = s;
        }
        out.reads.push_back(restore_frame(read, g));
        out.frames.push_back(g);
    }
    return out;
}

/// Samples frozen at (T*, delta*): signs of the thermal magnetization from ED.
inline SampleSet kz_frozen_sample(int class_id, const SquareLatticeInstance& x, double t_star, double delta_star,
                                  const FrozenSampleOptions& opt = {}) {
    if (!(t_star >= 0) || !(delta_star >= 0)) throw std::invalid_argument("freeze point must be nonnegative");
    auto spec = diagonalize(make_problem(x, delta_star));
    auto mv = thermal_magnetization(spec, t_star);
    std::array<double, kSites> m{};
    std::copy(mv.begin(), mv.end(), m.begin());
    auto out = frozen_sample_from_magnetization(class_id, m, opt);
    out.metadata["T_star"] = t_star;
    out.metadata["delta_star"] = delta_star;
    return out;
}

// ---------------------------------------------------------------------------
// Cell readout.

/// Majority sign of each cell's members; 0 for a tie.
inline SuperspinRead cell_majority(const ChimeraIsing& h, std::span<const Sign> spins) {
    std::array<int, kSites> sum{};
    for (int i = 0; i < h.num_spins(); ++i) sum[std::size_t(h.cell_of[std::size_t(i)])] += spins[std::size_t(i)];
    SuperspinRead r{};
    for (int c = 0; c < kSites; ++c) r[c] = sum[c] > 0 ? Sign(1) : (sum[c] < 0 ? Sign(-1) : Sign(0));
    return r;
}

// ---------------------------------------------------------------------------
// Metropolis annealer.

struct MetropolisOptions {
    double t_start = 3.0;  // energy units of the spin-level Hamiltonian
    double t_end = 0.05;
    long sweeps = 1000;
    int reads = 100;
    std::uint64_t seed = 1;
};

namespace detail {

struct SpinGraph {
    std::vector<double> field;
    std::vector<int> offset;  // CSR adjacency
    std::vector<int> neighbor;
    std::vector<double> coupling;

    explicit SpinGraph(const ChimeraIsing& h) : field(h.fields) {
        NeighborList nb(h);
        offset.push_back(0);
        for (const auto& row : nb.adj) {
            for (auto [j, v] : row) {
                neighbor.push_back(j);
                coupling.push_back(v);
            }
            offset.push_back(int(neighbor.size()));
        }
    }
    int size() const { return int(field.size()); }

    // -dE/ds_i: the effective field on spin i.
    template <class S>
    double local(const S& s, int i) const {
        double l = -field[std::size_t(i)];
        for (int k = offset[std::size_t(i)]; k < offset[std::size_t(i) + 1]; ++k)
            l += coupling[std::size_t(k)] * s[std::size_t(neighbor[std::size_t(k)])];
        return l;
    }
};

inline std::vector<Sign> metropolis_read(const SpinGraph& g, const MetropolisOptions& opt, std::mt19937_64& rng,
                                         std::vector<Sign> s = {}) {
    const int n = g.size();
    if (s.empty()) {
        s.resize(std::size_t(n));
        for (auto& v : s) v = rng() & 1 ? Sign(1) : Sign(-1);
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double ratio = opt.sweeps > 1 ? std::pow(opt.t_end / opt.t_start, 1.0 / double(opt.sweeps - 1)) : 1.0;
    double temp = opt.sweeps > 1 ? opt.t_start : opt.t_end;
    for (long sweep = 0; sweep < opt.sweeps; ++sweep, temp *= ratio) {
        const double beta = temp > 0 ? 1.0 / temp : std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double de = 2.0 * s[std::size_t(i)] * g.local(s, i);
            if (de <= 0.0 || (std::isfinite(beta) && u(rng) < std::exp(-beta * de))) s[std::size_t(i)] = Sign(-s[std::size_t(i)]);
        }
    }
    return s;
}

}  // namespace detail

/// Single-spin-flip Metropolis with geometric cooling from t_start to t_end;
/// each read records the cell-majority signs of its final configuration.
inline SampleSet metropolis_anneal(const ChimeraIsing& h, const MetropolisOptions& opt, int class_id = -1) {
    if (opt.sweeps <= 0) throw std::invalid_argument("sweep count must be positive");
    if (!(opt.t_start > 0) || !(opt.t_end >= 0) || opt.t_end > opt.t_start)
        throw std::invalid_argument("invalid temperature schedule");
    detail::SpinGraph g(h);
    SampleSet out;
    out.class_id = class_id;
    out.metadata = {{"generator", "metropolis"}, {"seed", opt.seed}, {"sweeps", opt.sweeps},
                    {"t_start", opt.t_start}, {"t_end", opt.t_end}, {"alpha", h.alpha},
                    {"alpha_s", h.alpha_s}, {"cell_mode", to_string(h.cell_mode)}};
    for (int r = 0; r < opt.reads; ++r) {
        auto rng = read_stream(opt.seed, std::uint64_t(class_id), std::uint64_t(r));
        auto s = detail::metropolis_read(g, opt, rng);
        out.reads.push_back(cell_majority(h, s));
        out.frames.push_back(SymmetryElement::identity());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spin-vector (rotor) annealer.

struct SvmcOptions {
    long sweeps = 1000;
    int reads = 100;
    double temperature = 0.017 * kGHzPerKelvin;  // GHz, same units as the schedule
    std::uint64_t seed = 1;
    int angle_bins = 4096;  // proposals drawn from a fixed table of angles in [0, pi]
};

/// Classical rotors theta_i in [0, pi] with energy
///   -A(s) sum sin(theta_i) + B(s) E_Ising(cos(theta)),
/// annealed by Metropolis angle updates while s runs from 0 to 1.
/// Final signs are sign(cos theta_i), reported as cell majorities.
inline SampleSet svmc_anneal(const ChimeraIsing& h, const Schedule& schedule, const SvmcOptions& opt,
                             int class_id = -1) {
    if (opt.sweeps <= 0) throw std::invalid_argument("sweep count must be positive");
    if (!(opt.temperature > 0) || opt.angle_bins < 2) throw std::invalid_argument("invalid rotor options");
    detail::SpinGraph g(h);
    const int n = g.size();
    std::vector<double> tab_cos(std::size_t(opt.angle_bins)), tab_sin(std::size_t(opt.angle_bins));
    for (int k = 0; k < opt.angle_bins; ++k) {
        double theta = std::numbers::pi * (k + 0.5) / opt.angle_bins;
        tab_cos[std::size_t(k)] = std::cos(theta);
        tab_sin[std::size_t(k)] = std::sin(theta);
    }
    SampleSet out;
    out.class_id = class_id;
    out.metadata = {{"generator", "svmc"},       {"seed", opt.seed},       {"sweeps", opt.sweeps},
                    {"temperature", opt.temperature}, {"t_f", schedule.t_f}, {"alpha", h.alpha},
                    {"alpha_s", h.alpha_s},      {"cell_mode", to_string(h.cell_mode)}};
    const double beta = 1.0 / opt.temperature;
    std::vector<int> state(static_cast<std::size_t>(n));
    std::vector<double> c(static_cast<std::size_t>(n));
    for (int r = 0; r < opt.reads; ++r) {
        auto rng = read_stream(opt.seed, std::uint64_t(class_id), std::uint64_t(r));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<int> pick(0, opt.angle_bins - 1);
        for (int i = 0; i < n; ++i) {
            state[std::size_t(i)] = pick(rng);
            c[std::size_t(i)] = tab_cos[std::size_t(state[std::size_t(i)])];
        }
        for (long sweep = 0; sweep < opt.sweeps; ++sweep) {
            const double s = opt.sweeps > 1 ? double(sweep) / double(opt.sweeps - 1) : 1.0;
            const double a = schedule.A(s), b = schedule.B(s);
            for (int i = 0; i < n; ++i) {
                const int k = pick(rng);
                const int old = state[std::size_t(i)];
                // E = -A sin + B (field * cos - sum J cos cos)
                const double de = -a * (tab_sin[std::size_t(k)] - tab_sin[std::size_t(old)]) -
                                  b * g.local(c, i) * (tab_cos[std::size_t(k)] - tab_cos[std::size_t(old)]);
                if (de <= 0.0 || u(rng) < std::exp(-beta * de)) {
                    state[std::size_t(i)] = k;
                    c[std::size_t(i)] = tab_cos[std::size_t(k)];
                }
            }
        }
        std::vector<Sign> spins(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) spins[std::size_t(i)] = c[std::size_t(i)] > 0 ? Sign(1) : Sign(-1);
        out.reads.push_back(cell_majority(h, spins));
        out.frames.push_back(SymmetryElement::identity());
    }
    return out;
}

/// Runs a spin-level sampler once per read on a randomly transformed copy of
/// the instance and maps every read back to the canonical frame.
template <class Sampler>
SampleSet sample_with_frames(int class_id, const SquareLatticeInstance& x, CellMode mode, double alpha,
                             double alpha_s, int reads, std::uint64_t seed, Sampler&& one_read) {
    SampleSet out;
    out.class_id = class_id;
    for (int r = 0; r < reads; ++r) {
        auto rng = read_stream(seed ^ 0x9e3779b97f4a7c15ull, std::uint64_t(class_id), std::uint64_t(r));
        auto g = random_element(rng);
        auto h = embed_superspin(apply(g, x), mode, alpha, alpha_s);
        SampleSet one = one_read(h, r);
        if (one.reads.size() != 1) throw std::logic_error("frame sampler must return one read");
        if (out.metadata.empty()) out.metadata = one.metadata;
        out.reads.push_back(restore_frame(one.reads[0], g));
        out.frames.push_back(g);
    }
    out.metadata["randomize_frames"] = true;
    return out;
}

// ---------------------------------------------------------------------------
// Files: one JSON header line, then CSV rows read_id,frame,s0..s8.

inline std::string sample_set_to_text(const SampleSet& s, std::string_view config_hash) {
    nlohmann::json header = s.metadata;
    header["class_id"] = s.class_id;
    header["reads"] = s.size();
    header["frame"] = "canonical";
    header["config_hash"] = config_hash;
    header["version"] = kToolVersion;
    std::string out = header.dump() + "\n";
    out += "read_id,frame";
    for (int i = 0; i < kSites; ++i) out += ",s" + std::to_string(i);
    out += "\n";
    for (int r = 0; r < s.size(); ++r) {
        out += std::to_string(r) + "," + std::to_string(s.frames[std::size_t(r)].index());
        for (auto v : s.reads[std::size_t(r)]) out += "," + std::to_string(int(v));
        out += "\n";
    }
    return out;
}

inline SampleSet sample_set_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty sample file");
    SampleSet s;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
        s.class_id = header.at("class_id").get<int>();
        if (header.value("frame", std::string("canonical")) != "canonical")
            throw std::invalid_argument("sample file is not in the canonical frame");
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed sample header: ") + e.what());
    }
    for (const char* k : {"class_id", "reads", "frame", "config_hash", "version"}) header.erase(k);
    s.metadata = header;
    if (!std::getline(in, line) || line.rfind("read_id,frame", 0) != 0)
        throw std::invalid_argument("sample file lacks its column header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        int id, frame;
        if (!(row >> id >> frame) || id != s.size() || frame < 0 || frame >= kSymmetryOrder)
            throw std::invalid_argument("malformed sample row");
        SuperspinRead r{};
        for (int i = 0; i < kSites; ++i) {
            int v;
            if (!(row >> v) || v < -1 || v > 1) throw std::invalid_argument("malformed sample row");
            r[i] = Sign(v);
        }
        s.reads.push_back(r);
        s.frames.push_back(SymmetryElement::from_index(frame));
    }
    return s;
}

}  // namespace kzfreeze
