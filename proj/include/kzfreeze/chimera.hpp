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

/// Superspin embedding of 3x3 instances onto Chimera unit cells.
///
/// A Chimera cell has 8 qubits: indices 0-3 are the vertical side (coupled
/// to the same index in the cells above and below), 4-7 the horizontal side
/// (coupled left and right). Inside a cell every vertical qubit couples to
/// every horizontal qubit, K(4,4). The truncated cell keeps 2 qubits of each
/// side, K(2,2).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kzfreeze/lattice.hpp"

namespace kzfreeze {

enum class CellMode { Full8, Truncated4 };

inline std::string to_string(CellMode m) { return m == CellMode::Full8 ? "full8" : "truncated4"; }

inline CellMode parse_cell_mode(const std::string& s) {
    if (s == "full8" || s == "Full8") return CellMode::Full8;
    if (s == "truncated4" || s == "Truncated4") return CellMode::Truncated4;
    throw std::invalid_argument("unknown cell mode '" + s + "'");
}

inline int cell_size(CellMode m) { return m == CellMode::Full8 ? 8 : 4; }

/// Superspin scale |h_s| = |J_s| in units where the overall annealer scale is 1.
inline double superspin_scale(CellMode m, double alpha, double alpha_s) {
    return (m == CellMode::Full8 ? 4.0 : 2.0) * alpha * alpha_s;
}

struct ChimeraCoupler {
    int u;
    int v;
    double value;  // enters the energy as -value * s_u * s_v
    bool internal;
};

struct ChimeraIsing {
    CellMode cell_mode = CellMode::Full8;
    double alpha = 1.0;
    double alpha_s = 1.0;
    std::vector<double> fields;              // enters the energy as +field * s
    std::vector<ChimeraCoupler> couplers;
    std::vector<int> cell_of;                // spin -> superspin site
    std::vector<int> chimera_index;          // spin -> qubit index 0..7 within its cell

    int num_spins() const { return int(fields.size()); }

    std::vector<int> cell_members(int cell) const {
        std::vector<int> out;
        for (int i = 0; i < num_spins(); ++i)
            if (cell_of[i] == cell) out.push_back(i);
        return out;
    }
};

/// Qubits of a truncated cell; must hold two vertical (0-3) and two
/// horizontal (4-7) indices.
using TruncatedCellMap = std::array<int, 4>;
inline constexpr TruncatedCellMap kDefaultTruncatedCell = {0, 1, 4, 5};

inline ChimeraIsing embed_superspin(const SquareLatticeInstance& x, CellMode mode, double alpha, double alpha_s,
                                    const TruncatedCellMap& truncated = kDefaultTruncatedCell) {
    x.validate();
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(alpha_s >= 0.0)) throw std::invalid_argument("alpha_s must be nonnegative");

    std::vector<int> kept;
    if (mode == CellMode::Full8) {
        kept = {0, 1, 2, 3, 4, 5, 6, 7};
    } else {
        int vertical = 0;
        for (int q : truncated) {
            if (q < 0 || q > 7) throw std::invalid_argument("truncated cell index out of range");
            vertical += q < 4;
        }
        if (vertical != 2) throw std::invalid_argument("truncated cell needs two qubits per side");
        kept.assign(truncated.begin(), truncated.end());
    }
    const int n = int(kept.size());

    ChimeraIsing h;
    h.cell_mode = mode;
    h.alpha = alpha;
    h.alpha_s = alpha_s;
    h.fields.resize(kSites * n);
    h.cell_of.resize(kSites * n);
    h.chimera_index.resize(kSites * n);
    auto spin = [n](int cell, int pos) { return cell * n + pos; };

    for (int c = 0; c < kSites; ++c) {
        for (int p = 0; p < n; ++p) {
            h.cell_of[spin(c, p)] = c;
            h.chimera_index[spin(c, p)] = kept[p];
            h.fields[spin(c, p)] = 0.5 * alpha * alpha_s * x.field_magnitude * x.fields[c];
        }
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                if ((kept[p] < 4) != (kept[q] < 4)) h.couplers.push_back({spin(c, p), spin(c, q), alpha, true});
    }
    for (int e = 0; e < kEdges; ++e) {
        const auto& ed = kGridEdges[e];
        const bool horizontal_side = is_horizontal_edge(e);
        for (int p = 0; p < n; ++p) {
            if ((kept[p] >= 4) != horizontal_side) continue;
            h.couplers.push_back({spin(ed.u, p), spin(ed.v, p), alpha * alpha_s * x.couplers[e], false});
        }
    }
    return h;
}

inline double classical_energy(const ChimeraIsing& h, std::span<const Sign> config) {
    if (int(config.size()) != h.num_spins())
        throw std::invalid_argument("configuration does not cover all spins");
    double e = 0.0;
    for (int i = 0; i < h.num_spins(); ++i) e += h.fields[i] * config[i];
    for (const auto& c : h.couplers) e -= c.value * config[c.u] * config[c.v];
    return e;
}

/// Spin configuration with every member of cell c set to superspin[c].
inline std::vector<Sign> aligned_config(const ChimeraIsing& h, const std::array<Sign, kSites>& superspin) {
    std::vector<Sign> s(h.num_spins());
    for (int i = 0; i < h.num_spins(); ++i) s[i] = superspin[h.cell_of[i]];
    return s;
}

struct NeighborList {
    std::vector<std::vector<std::pair<int, double>>> adj;

    explicit NeighborList(const ChimeraIsing& h) : adj(h.num_spins()) {
        for (const auto& c : h.couplers) {
            adj[c.u].push_back({c.v, c.value});
            adj[c.v].push_back({c.u, c.value});
        }
    }

    /// Energy change from flipping spin i.
    double flip_delta(const ChimeraIsing& h, std::span<const Sign> s, int i) const {
        double local = -h.fields[i];
        for (auto [j, J] : adj[i]) local += J * s[j];
        return 2.0 * s[i] * local;
    }
};

struct LocalMinimumViolation {
    std::uint16_t superspin_state;  // bit c set means cell c is -1
    int spin;
    double delta_energy;
};

struct LocalMinimaReport {
    bool all_local_minima = true;
    std::vector<LocalMinimumViolation> counterexamples;
};

/// Checks that all 2^9 cell-aligned configurations are (weak) local minima
/// under single spin flips.
inline LocalMinimaReport verify_local_minima(const ChimeraIsing& h, double tol = 1e-12) {
    LocalMinimaReport report;
    NeighborList nb(h);
    for (unsigned b = 0; b < (1u << kSites); ++b) {
        auto s = aligned_config(h, config_from_index(b));
        for (int i = 0; i < h.num_spins(); ++i) {
            double d = nb.flip_delta(h, s, i);
            if (d < -tol) {
                report.all_local_minima = false;
                report.counterexamples.push_back({std::uint16_t(b), i, d});
            }
        }
    }
    return report;
}

/// Minimax single-flip path energy from all-up to all-down for an isolated
/// ferromagnetic cluster with unit bonds. Exact integer result in bond units
/// (each broken bond costs 2 units). n <= 20.
inline std::int64_t min_flip_barrier_units(int n, std::span<const Edge> bonds) {
    if (n <= 0 || n > 20) throw std::invalid_argument("cluster size out of range");
    const std::uint32_t N = 1u << n;
    auto energy = [&](std::uint32_t state) {
        std::int64_t e = 0;
        for (const auto& b : bonds) e += (((state >> b.u) ^ (state >> b.v)) & 1u) ? 1 : -1;
        return e;
    };
    const std::int64_t e0 = energy(0);
    std::vector<std::int64_t> best(N, std::numeric_limits<std::int64_t>::max());
    using Item = std::pair<std::int64_t, std::uint32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    best[0] = 0;
    pq.push({0, 0});
    while (!pq.empty()) {
        auto [cost, u] = pq.top();
        pq.pop();
        if (cost != best[u]) continue;
        if (u == N - 1) return cost;
        for (int i = 0; i < n; ++i) {
            std::uint32_t v = u ^ (1u << i);
            std::int64_t c = std::max(cost, energy(v) - e0);
            if (c < best[v]) {
                best[v] = c;
                pq.push({c, v});
            }
        }
    }
    return best[N - 1];
}

struct FlipBarrier {
    std::int64_t units;  // multiples of alpha
    double alpha;
    double energy() const { return double(units) * alpha; }
};

inline FlipBarrier min_flip_barrier(CellMode mode, double alpha,
                                    const TruncatedCellMap& truncated = kDefaultTruncatedCell) {
    SquareLatticeInstance dummy;
    auto cell = embed_superspin(dummy, mode, 1.0, 0.0, truncated);
    std::vector<Edge> bonds;
    const int n = cell_size(mode);
    for (const auto& c : cell.couplers)
        if (c.internal && c.u < n && c.v < n) bonds.push_back({c.u, c.v});
    return {min_flip_barrier_units(n, bonds), alpha};
}

}  // namespace kzfreeze
