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

/// 3x3 square-lattice Ising instances and their dihedral x gauge symmetry.
///
/// Sites are numbered row-major, site = 3 * row + col. The 12 grid edges are
/// ordered horizontal edges first (row-major), then vertical edges
/// (row-major). An instance is serialized as the 21-symbol sequence
/// [h_0 .. h_8, J_0 .. J_11] where each symbol is 0 for +1 and 1 for -1;
/// the first symbol is the most significant bit of `key()`. Canonical forms
/// are lexicographic minima of that sequence over the symmetry group.

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kzfreeze {

using Sign = std::int8_t;

inline constexpr int kSites = 9;
inline constexpr int kEdges = 12;
inline constexpr int kDihedralOrder = 8;
inline constexpr int kGaugeCount = 1 << kSites;
inline constexpr int kSymmetryOrder = kDihedralOrder * kGaugeCount;

struct Edge {
    int u;
    int v;
};

inline constexpr std::array<Edge, kEdges> kGridEdges = {{
    {0, 1}, {1, 2}, {3, 4}, {4, 5}, {6, 7}, {7, 8},  // horizontal
    {0, 3}, {1, 4}, {2, 5}, {3, 6}, {4, 7}, {5, 8},  // vertical
}};

inline constexpr bool is_horizontal_edge(int e) { return e < 6; }

inline int edge_index(int a, int b) {
    for (int e = 0; e < kEdges; ++e) {
        const auto& ed = kGridEdges[e];
        if ((ed.u == a && ed.v == b) || (ed.u == b && ed.v == a)) return e;
    }
    return -1;
}

/// Signed couplers and fields of the effective superspin model
///   H = sum_i h_i s_i - sum_<ij> J_ij s_i s_j,
/// with J = +1 ferromagnetic and h = +1 favouring s = -1.
struct SquareLatticeInstance {
    std::array<Sign, kEdges> couplers = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    std::array<Sign, kSites> fields = {1, 1, 1, 1, 1, 1, 1, 1, 1};
    double field_magnitude = 1.0;

    /// Fields fixed to +1; bit (11 - e) of `bits` set means J_e = -1.
    static SquareLatticeInstance from_coupler_bits(std::uint32_t bits) {
        SquareLatticeInstance x;
        for (int e = 0; e < kEdges; ++e) x.couplers[e] = ((bits >> (kEdges - 1 - e)) & 1u) ? -1 : 1;
        return x;
    }

    static SquareLatticeInstance from_key(std::uint32_t key) {
        SquareLatticeInstance x;
        for (int i = 0; i < kSites; ++i) x.fields[i] = ((key >> (20 - i)) & 1u) ? -1 : 1;
        for (int e = 0; e < kEdges; ++e) x.couplers[e] = ((key >> (11 - e)) & 1u) ? -1 : 1;
        return x;
    }

    std::uint32_t key() const {
        std::uint32_t k = 0;
        for (int i = 0; i < kSites; ++i) k = (k << 1) | (fields[i] < 0 ? 1u : 0u);
        for (int e = 0; e < kEdges; ++e) k = (k << 1) | (couplers[e] < 0 ? 1u : 0u);
        return k;
    }

    void validate() const {
        for (auto j : couplers)
            if (j != 1 && j != -1) throw std::invalid_argument("coupler sign must be +1 or -1");
        for (auto h : fields)
            if (h != 1 && h != -1) throw std::invalid_argument("field sign must be +1 or -1");
        if (!(field_magnitude >= 0.0)) throw std::invalid_argument("field_magnitude must be nonnegative");
    }

    bool operator==(const SquareLatticeInstance& o) const {
        return couplers == o.couplers && fields == o.fields && field_magnitude == o.field_magnitude;
    }
};

/// Effective superspin energy of a +/-1 configuration.
inline double superspin_energy(const SquareLatticeInstance& x, const std::array<Sign, kSites>& s) {
    double e = 0.0;
    for (int i = 0; i < kSites; ++i) e += x.field_magnitude * x.fields[i] * s[i];
    for (int k = 0; k < kEdges; ++k) e -= double(x.couplers[k]) * s[kGridEdges[k].u] * s[kGridEdges[k].v];
    return e;
}

/// Configuration for basis index b: bit i set means s_i = -1.
inline std::array<Sign, kSites> config_from_index(unsigned b) {
    std::array<Sign, kSites> s{};
    for (int i = 0; i < kSites; ++i) s[i] = ((b >> i) & 1u) ? -1 : 1;
    return s;
}

namespace detail {

struct DihedralTables {
    std::array<std::array<int, kSites>, kDihedralOrder> site{};
    std::array<std::array<int, kEdges>, kDihedralOrder> edge{};
    std::array<int, kDihedralOrder> inverse{};
    std::array<std::array<int, kDihedralOrder>, kDihedralOrder> compose{};  // compose[a][b] = a after b
};

inline const DihedralTables& dihedral_tables() {
    static const DihedralTables tables = [] {
        DihedralTables t;
        auto map = [](int k, int r, int c) -> std::pair<int, int> {
            switch (k) {
                case 0: return {r, c};
                case 1: return {c, 2 - r};
                case 2: return {2 - r, 2 - c};
                case 3: return {2 - c, r};
                case 4: return {2 - r, c};
                case 5: return {r, 2 - c};
                case 6: return {c, r};
                default: return {2 - c, 2 - r};
            }
        };
        for (int k = 0; k < kDihedralOrder; ++k) {
            for (int s = 0; s < kSites; ++s) {
                auto [r, c] = map(k, s / 3, s % 3);
                t.site[k][s] = 3 * r + c;
            }
            for (int e = 0; e < kEdges; ++e)
                t.edge[k][e] = edge_index(t.site[k][kGridEdges[e].u], t.site[k][kGridEdges[e].v]);
        }
        for (int a = 0; a < kDihedralOrder; ++a)
            for (int b = 0; b < kDihedralOrder; ++b) {
                std::array<int, kSites> ab{};
                for (int s = 0; s < kSites; ++s) ab[s] = t.site[a][t.site[b][s]];
                for (int c = 0; c < kDihedralOrder; ++c)
                    if (t.site[c] == ab) t.compose[a][b] = c;
                if (ab == t.site[0]) t.inverse[a] = b;
            }
        return t;
    }();
    return tables;
}

inline std::uint16_t permute_mask(int spatial, std::uint16_t mask) {
    const auto& t = dihedral_tables();
    std::uint16_t out = 0;
    for (int s = 0; s < kSites; ++s)
        if ((mask >> s) & 1u) out |= std::uint16_t(1u << t.site[spatial][s]);
    return out;
}

}  // namespace detail

inline const std::array<int, kSites>& dihedral_site_map(int spatial) {
    return detail::dihedral_tables().site.at(spatial);
}

/// A symmetry of the instance space: flip the spins in `gauge` (bit i =
/// site i), then apply dihedral transformation `spatial` to the sites.
struct SymmetryElement {
    std::uint8_t spatial = 0;
    std::uint16_t gauge = 0;

    static SymmetryElement identity() { return {}; }
    static SymmetryElement from_index(int index) {
        return {std::uint8_t(index / kGaugeCount), std::uint16_t(index % kGaugeCount)};
    }
    int index() const { return int(spatial) * kGaugeCount + gauge; }

    void validate() const {
        if (spatial >= kDihedralOrder || gauge >= kGaugeCount)
            throw std::invalid_argument("invalid symmetry element");
    }

    /// (*this) after `first`.
    SymmetryElement compose(const SymmetryElement& first) const {
        const auto& t = detail::dihedral_tables();
        SymmetryElement r;
        r.spatial = std::uint8_t(t.compose[spatial][first.spatial]);
        r.gauge = std::uint16_t(first.gauge ^ detail::permute_mask(t.inverse[first.spatial], gauge));
        return r;
    }

    SymmetryElement inverse() const {
        const auto& t = detail::dihedral_tables();
        return {std::uint8_t(t.inverse[spatial]), detail::permute_mask(spatial, gauge)};
    }

    bool operator==(const SymmetryElement&) const = default;
};

inline SquareLatticeInstance apply(const SymmetryElement& g, const SquareLatticeInstance& x) {
    const auto& t = detail::dihedral_tables();
    SquareLatticeInstance y;
    y.field_magnitude = x.field_magnitude;
    for (int s = 0; s < kSites; ++s) {
        Sign h = ((g.gauge >> s) & 1u) ? Sign(-x.fields[s]) : x.fields[s];
        y.fields[t.site[g.spatial][s]] = h;
    }
    for (int e = 0; e < kEdges; ++e) {
        const auto& ed = kGridEdges[e];
        bool flip = (((g.gauge >> ed.u) ^ (g.gauge >> ed.v)) & 1u) != 0;
        y.couplers[t.edge[g.spatial][e]] = flip ? Sign(-x.couplers[e]) : x.couplers[e];
    }
    return y;
}

/// Transforms a site-indexed quantity that is odd under a gauge flip
/// (fields, spin configurations, magnetizations).
template <class T>
std::array<T, kSites> transform_sites(const SymmetryElement& g, const std::array<T, kSites>& v) {
    const auto& t = detail::dihedral_tables();
    std::array<T, kSites> out{};
    for (int s = 0; s < kSites; ++s) out[t.site[g.spatial][s]] = ((g.gauge >> s) & 1u) ? T(-v[s]) : v[s];
    return out;
}

struct CanonicalForm {
    SquareLatticeInstance form;
    SymmetryElement element;  // form == apply(element, input)
};

/// Lexicographically minimal serialization over all 8 x 2^9 symmetry
/// elements. Fields precede couplers in the serialization and for each
/// spatial map exactly one gauge makes every field +1, so only 8 candidates
/// need comparing.
inline CanonicalForm canonicalize(const SquareLatticeInstance& x) {
    x.validate();
    CanonicalForm best{x, {}};
    std::uint32_t best_key = ~0u;
    for (int k = 0; k < kDihedralOrder; ++k) {
        std::uint16_t gauge = 0;
        for (int s = 0; s < kSites; ++s)
            if (x.fields[s] < 0) gauge |= std::uint16_t(1u << s);
        SymmetryElement g{std::uint8_t(k), gauge};
        auto y = apply(g, x);
        auto key = y.key();
        if (key < best_key) {
            best_key = key;
            best = {y, g};
        }
    }
    return best;
}

inline std::uint32_t canonical_key(const SquareLatticeInstance& x) { return canonicalize(x).form.key(); }

/// One representative per class, ordered by ascending canonical key; the
/// position in the returned list is the stable class id.
inline std::vector<SquareLatticeInstance> enumerate_classes() {
    std::vector<std::uint32_t> keys;
    keys.reserve(1u << kEdges);
    for (std::uint32_t b = 0; b < (1u << kEdges); ++b)
        keys.push_back(canonical_key(SquareLatticeInstance::from_coupler_bits(b)));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::vector<SquareLatticeInstance> out;
    out.reserve(keys.size());
    for (auto k : keys) out.push_back(SquareLatticeInstance::from_key(k));
    return out;
}

/// Class id of `x` within `classes` (as returned by enumerate_classes), or -1.
inline int find_class(const std::vector<SquareLatticeInstance>& classes, const SquareLatticeInstance& x) {
    auto key = canonical_key(x);
    auto it = std::lower_bound(classes.begin(), classes.end(), key,
                               [](const SquareLatticeInstance& c, std::uint32_t k) { return c.key() < k; });
    if (it == classes.end() || it->key() != key) return -1;
    return int(it - classes.begin());
}

inline std::string to_string(const SquareLatticeInstance& x) {
    std::string s = "h=";
    for (auto h : x.fields) s += h > 0 ? '+' : '-';
    s += " J=";
    for (auto j : x.couplers) s += j > 0 ? '+' : '-';
    return s;
}

}  // namespace kzfreeze
