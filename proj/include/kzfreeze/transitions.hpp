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

/// Spin-sign transitions: zero curves of m_i(T, delta), and the Type 0/I/II/III
/// classification of spins.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kzfreeze/ed.hpp"
#include "kzfreeze/lattice.hpp"

namespace kzfreeze {

inline constexpr double kZeroTolerance = 1e-8;

inline Sign sign_of(double m, double tol = kZeroTolerance) { return m > tol ? Sign(1) : (m < -tol ? Sign(-1) : Sign(0)); }

/// sign(m_i) over the grid; 0 marks entries with |m| below the zero tolerance.
struct SignMap {
    int nt = 0;
    int nd = 0;
    std::vector<Sign> values;  // [spin][T][delta]

    static SignMap from_grid(const MagnetizationGrid& g, double tol = kZeroTolerance) {
        SignMap s{g.nt(), g.nd(), std::vector<Sign>(g.values.size())};
        for (std::size_t k = 0; k < g.values.size(); ++k) s.values[k] = sign_of(g.values[k], tol);
        return s;
    }

    Sign at(int spin, int t, int d) const {
        return values[(std::size_t(spin) * std::size_t(nt) + std::size_t(t)) * std::size_t(nd) + std::size_t(d)];
    }

    /// True when both signs occur among determinate entries of the spin.
    bool has_sign_change(int spin) const {
        bool pos = false, neg = false;
        const std::size_t base = std::size_t(spin) * std::size_t(nt) * std::size_t(nd);
        for (std::size_t k = 0; k < std::size_t(nt) * std::size_t(nd); ++k) {
            pos |= values[base + k] > 0;
            neg |= values[base + k] < 0;
        }
        return pos && neg;
    }
};

// ---------------------------------------------------------------------------
// Continuous evaluation of m_i(T, delta) for refinement.

/// Evaluates m(T, delta) for one instance, caching spectra per delta.
class MagnetizationEvaluator {
  public:
    explicit MagnetizationEvaluator(SquareLatticeInstance x, std::size_t max_cached = 64)
        : instance_(std::move(x)), max_cached_(max_cached) {}

    std::vector<double> operator()(double temperature, double delta) {
        return thermal_magnetization(spectrum(delta), temperature);
    }

    double at(int spin, double temperature, double delta) { return (*this)(temperature, delta)[spin]; }

    const SpectralData& spectrum(double delta) {
        auto it = cache_.find(delta);
        if (it != cache_.end()) return it->second;
        if (cache_.size() >= max_cached_) cache_.clear();
        ++diagonalizations_;
        return cache_.emplace(delta, diagonalize(make_problem(instance_, delta), {.check_residuals = false}))
            .first->second;
    }

    long diagonalizations() const { return diagonalizations_; }
    const SquareLatticeInstance& instance() const { return instance_; }

  private:
    SquareLatticeInstance instance_;
    std::size_t max_cached_;
    std::map<double, SpectralData> cache_;
    long diagonalizations_ = 0;
};

/// Bracketed root of f on [a, b] (f(a), f(b) of opposite sign) by the
/// Illinois variant of false position; stops when |f| <= tol.
inline double refine_root(const std::function<double(double)>& f, double a, double b, double fa, double fb,
                          double tol = kZeroTolerance, int max_iterations = 80) {
    int side = 0;
    double x = a;
    for (int it = 0; it < max_iterations; ++it) {
        x = (a * fb - b * fa) / (fb - fa);
        if (!(x > std::min(a, b) && x < std::max(a, b))) x = 0.5 * (a + b);
        double fx = f(x);
        if (std::abs(fx) <= tol || std::abs(b - a) < 1e-14 * std::max(1.0, std::abs(a))) return x;
        if ((fx > 0) == (fb > 0)) {
            b = x;
            fb = fx;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = x;
            fa = fx;
            if (side == 1) fb *= 0.5;
            side = 1;
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Tracing.

struct TransitionPoint {
    double temperature;
    double delta;
};

struct Polyline {
    std::vector<TransitionPoint> points;
    bool closed = false;
};

struct AmbiguousCell {
    int t;
    int d;
};

struct SpinTransitions {
    std::vector<Polyline> polylines;
    std::vector<std::uint8_t> cell_crossings;  // crossings on the boundary of each cell, (nt-1) x (nd-1)
    std::vector<AmbiguousCell> ambiguous;
    double max_vertex_residual = 0.0;          // max |m| at emitted vertices (refined runs)
};

struct TransitionSet {
    int nt = 0;
    int nd = 0;
    std::vector<SpinTransitions> spins;
};

/// Continuous m_spin(T, delta) used to refine crossings.
using MagnetizationFunction = std::function<double(int spin, double temperature, double delta)>;

inline MagnetizationFunction as_function(MagnetizationEvaluator& e) {
    return [&e](int spin, double t, double d) { return e.at(spin, t, d); };
}

struct TraceOptions {
    bool refine = true;
    double zero_tolerance = kZeroTolerance;
};

namespace detail {

struct Crossing {
    TransitionPoint point;
    double residual = 0.0;
};

// Edge ids: along T from node (t, d) -> 2 * node; along delta -> 2 * node + 1.
inline long edge_id_t(int t, int d, int nd) { return 2L * (long(t) * nd + d); }
inline long edge_id_d(int t, int d, int nd) { return 2L * (long(t) * nd + d) + 1; }

inline std::vector<Polyline> link_segments(const std::vector<std::pair<long, long>>& segments,
                                           const std::unordered_map<long, Crossing>& crossings) {
    std::unordered_map<long, std::vector<std::size_t>> incident;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        incident[segments[s].first].push_back(s);
        incident[segments[s].second].push_back(s);
    }
    std::vector<bool> used(segments.size(), false);
    std::vector<Polyline> out;
    auto walk = [&](long start, std::size_t first_segment) {
        Polyline line;
        line.points.push_back(crossings.at(start).point);
        long at = start;
        std::size_t seg = first_segment;
        while (true) {
            used[seg] = true;
            long next = segments[seg].first == at ? segments[seg].second : segments[seg].first;
            line.points.push_back(crossings.at(next).point);
            at = next;
            if (at == start) {
                line.closed = true;
                break;
            }
            std::optional<std::size_t> cont;
            for (auto s2 : incident[at])
                if (!used[s2]) cont = s2;
            if (!cont) break;
            seg = *cont;
        }
        return line;
    };
    std::vector<long> ends;
    for (auto& [id, segs] : incident)
        if (segs.size() == 1) ends.push_back(id);
    std::sort(ends.begin(), ends.end());
    for (long id : ends)
        if (!used[incident[id][0]]) out.push_back(walk(id, incident[id][0]));
    for (std::size_t s = 0; s < segments.size(); ++s)
        if (!used[s]) out.push_back(walk(segments[s].first, s));
    return out;
}

}  // namespace detail

/// Zero curves of every spin's magnetization by marching squares over the
/// grid. With a continuous `m` and `refine`, each edge crossing is refined
/// until |m| <= zero_tolerance; otherwise crossings are linearly
/// interpolated. A cell with four crossings is split by the sign of m at its
/// center and reported as ambiguous if that value is itself a zero.
inline TransitionSet trace_transitions(const MagnetizationGrid& g, const MagnetizationFunction& m = {},
                                       const TraceOptions& opt = {}) {
    const int nt = g.nt(), nd = g.nd();
    const int n_spins = nt * nd > 0 ? int(g.values.size() / (std::size_t(nt) * std::size_t(nd))) : 0;
    const auto& T = g.grid.temperature.values;
    const auto& D = g.grid.delta.values;
    TransitionSet out;
    out.nt = nt;
    out.nd = nd;
    out.spins.resize(std::size_t(n_spins));
    const bool refine = opt.refine && bool(m);
    auto positive = [&](int spin, int t, int d) { return g.at(spin, t, d) >= 0.0; };

    for (int spin = 0; spin < n_spins; ++spin) {
        SpinTransitions& st = out.spins[spin];
        std::unordered_map<long, detail::Crossing> crossings;

        auto crossing_t = [&](int t, int d) -> long {
            long id = detail::edge_id_t(t, d, nd);
            if (crossings.count(id)) return id;
            double fa = g.at(spin, t, d), fb = g.at(spin, t + 1, d);
            detail::Crossing c;
            if (refine) {
                auto f = [&](double temp) { return m(spin, temp, D[d]); };
                double x = refine_root(f, T[t], T[t + 1], fa, fb, opt.zero_tolerance);
                c.point = {x, D[d]};
                c.residual = std::abs(f(x));
            } else {
                double w = fa / (fa - fb);
                c.point = {T[t] + w * (T[t + 1] - T[t]), D[d]};
            }
            crossings.emplace(id, c);
            return id;
        };
        auto crossing_d = [&](int t, int d) -> long {
            long id = detail::edge_id_d(t, d, nd);
            if (crossings.count(id)) return id;
            double fa = g.at(spin, t, d), fb = g.at(spin, t, d + 1);
            detail::Crossing c;
            if (refine) {
                auto f = [&](double delta) { return m(spin, T[t], delta); };
                double x = refine_root(f, D[d], D[d + 1], fa, fb, opt.zero_tolerance);
                c.point = {T[t], x};
                c.residual = std::abs(f(x));
            } else {
                double w = fa / (fa - fb);
                c.point = {T[t], D[d] + w * (D[d + 1] - D[d])};
            }
            crossings.emplace(id, c);
            return id;
        };

        std::vector<std::pair<long, long>> segments;
        st.cell_crossings.assign(std::size_t(std::max(0, nt - 1)) * std::size_t(std::max(0, nd - 1)), 0);
        for (int t = 0; t + 1 < nt; ++t) {
            for (int d = 0; d + 1 < nd; ++d) {
                const bool p00 = positive(spin, t, d), p10 = positive(spin, t + 1, d);
                const bool p11 = positive(spin, t + 1, d + 1), p01 = positive(spin, t, d + 1);
                std::vector<long> ids;  // counter-clockwise: bottom, right, top, left
                if (p00 != p10) ids.push_back(crossing_t(t, d));
                if (p10 != p11) ids.push_back(crossing_d(t + 1, d));
                if (p01 != p11) ids.push_back(crossing_t(t, d + 1));
                if (p00 != p01) ids.push_back(crossing_d(t, d));
                st.cell_crossings[std::size_t(t) * std::size_t(nd - 1) + std::size_t(d)] = std::uint8_t(ids.size());
                if (ids.size() == 2) {
                    segments.push_back({ids[0], ids[1]});
                } else if (ids.size() == 4) {
                    double center;
                    if (m) {
                        center = m(spin, 0.5 * (T[t] + T[t + 1]), 0.5 * (D[d] + D[d + 1]));
                    } else {
                        center = 0.25 * (g.at(spin, t, d) + g.at(spin, t + 1, d) + g.at(spin, t + 1, d + 1) +
                                         g.at(spin, t, d + 1));
                    }
                    if (std::abs(center) <= opt.zero_tolerance) st.ambiguous.push_back({t, d});
                    // The center joins the corners of its own sign; p00 and p11 share a sign here.
                    if ((center >= 0.0) == p00) {
                        segments.push_back({ids[0], ids[1]});
                        segments.push_back({ids[2], ids[3]});
                    } else {
                        segments.push_back({ids[3], ids[0]});
                        segments.push_back({ids[1], ids[2]});
                    }
                }
            }
        }
        for (auto& [id, c] : crossings) st.max_vertex_residual = std::max(st.max_vertex_residual, c.residual);
        st.polylines = detail::link_segments(segments, crossings);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Origin diagnostics.

struct ManifoldBalance {
    int up = 0;
    int down = 0;
};

struct ClassicalGroundManifold {
    double energy = 0.0;
    std::vector<std::size_t> states;
    std::array<ManifoldBalance, kSites> balance{};
};

inline ClassicalGroundManifold classical_ground_manifold(const SquareLatticeInstance& x) {
    auto e = classical_energies(make_problem(x, 0.0));
    ClassicalGroundManifold gm;
    gm.energy = e.minCoeff();
    for (Eigen::Index b = 0; b < e.size(); ++b) {
        if (e[b] - gm.energy > 1e-9) continue;
        gm.states.push_back(std::size_t(b));
        for (int i = 0; i < kSites; ++i) {
            if (spin_z(std::size_t(b), i) > 0)
                ++gm.balance[i].up;
            else
                ++gm.balance[i].down;
        }
    }
    return gm;
}

inline ManifoldBalance ground_manifold_balance(const SquareLatticeInstance& x, int spin) {
    if (spin < 0 || spin >= kSites) throw std::invalid_argument("spin index out of range");
    return classical_ground_manifold(x).balance[spin];
}

/// T = 0 orientation for delta -> 0+.
struct InfinitesimalDeltaSign {
    Sign sign = 0;
    Sign classical_sign = 0;    // sign of the unweighted ground-manifold average
    int lifting_order = 0;      // PT order that isolates the limiting state: 0 unique, 1, 2, or 3 (higher)
    int limit_degeneracy = 1;   // dimension of the limiting ground space
    double m_probe = 0.0;       // <Z> in the resolvent ground state at the probe field
    double m_limit = 0.0;       // <Z> of the limiting (delta -> 0) state
    Sign ed_sign = 0;           // dense ED at the check field; 0 if ED cannot resolve it
    bool ed_conclusive = false;
    bool ed_agrees = true;      // ED sign matches the resolvent at the same field, when conclusive
    bool probe_consistent = true;  // same sign at the probe and confirm fields
};

struct OriginAnalysisOptions {
    double probe_delta = 1e-4;
    double confirm_delta = 1e-3;
    // Dense ED resolves the lowest states only to ~1e-14 * width / gap, so
    // the check runs where that is usually far below |m|; unresolved spins
    // are reported inconclusive rather than compared.
    double ed_check_delta = 1e-3;
    bool ed_check = true;
    double sign_floor = 1e-15;  // |m| below this at the probe field counts as zero
};

namespace detail {

struct ResolventGroundState {
    std::array<double, kSites> m{};
    std::array<double, kSites> m_limit{};
    int degeneracy = 1;
    double gap = 0.0;  // to the next effective level above the ground group
};

/// Ground state of H = H0 - delta X by Brillouin-Wigner partitioning onto the
/// classical ground manifold P: solves E = lowest eigenvalue of
///   H_eff(E) = P H P + P H Q (E - Q H Q)^-1 Q H P
/// self-consistently. Working relative to E0 keeps the tiny high-order
/// splittings resolvable; extended precision keeps the O(delta^2)
/// polarization above the eigenvector mixing error when the lowest pair is
/// split only at third order or beyond.
inline ResolventGroundState resolvent_ground_state(const Eigen::VectorXd& energies,
                                                   const std::vector<std::size_t>& ground, double delta_in) {
    using Real = long double;
    using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const Real delta = delta_in;
    const Eigen::Index dim = energies.size();
    const double e0 = energies.minCoeff();
    std::vector<Eigen::Index> pos(std::size_t(dim), -1);
    std::vector<std::size_t> excited;
    for (std::size_t k = 0; k < ground.size(); ++k) pos[ground[k]] = Eigen::Index(k);
    for (Eigen::Index b = 0; b < dim; ++b)
        if (pos[std::size_t(b)] < 0) {
            pos[std::size_t(b)] = Eigen::Index(excited.size());
            excited.push_back(std::size_t(b));
        }
    std::vector<bool> in_ground(std::size_t(dim), false);
    for (auto b : ground) in_ground[b] = true;

    const auto np = Eigen::Index(ground.size()), nq = Eigen::Index(excited.size());
    Matrix pxp = Matrix::Zero(np, np), qxp = Matrix::Zero(nq, np), qxq = Matrix::Zero(nq, nq);
    int n = 0;
    while ((Eigen::Index(1) << n) < dim) ++n;
    for (Eigen::Index b = 0; b < dim; ++b)
        for (int i = 0; i < n; ++i) {
            Eigen::Index c = b ^ (Eigen::Index(1) << i);
            bool gb = in_ground[std::size_t(b)], gc = in_ground[std::size_t(c)];
            if (gb && gc) pxp(pos[std::size_t(b)], pos[std::size_t(c)]) = 1;
            else if (!gb && gc) qxp(pos[std::size_t(b)], pos[std::size_t(c)]) = 1;
            else if (!gb && !gc) qxq(pos[std::size_t(b)], pos[std::size_t(c)]) = 1;
        }

    Real eps = 0;
    Matrix rq;  // (eps + E0 - QH0Q + delta QXQ)^-1 QXP
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    for (int it = 0; it < 100; ++it) {
        Matrix a = delta * qxq;
        for (Eigen::Index k = 0; k < nq; ++k) a(k, k) = eps + Real(e0) - Real(energies[Eigen::Index(excited[std::size_t(k)])]);
        rq = a.partialPivLu().solve(qxp);
        Matrix heff = -delta * pxp + delta * delta * (qxp.transpose() * rq);
        es.compute(heff);
        Real next = es.eigenvalues()[0];
        bool done = std::abs(next - eps) <= 1e-17L * std::max(delta, std::abs(next));
        eps = next;
        if (done) break;
    }
    const auto& w = es.eigenvalues();
    const Real scale = std::max(w.cwiseAbs().maxCoeff(), delta * delta);
    ResolventGroundState out;
    out.degeneracy = 0;
    for (Eigen::Index k = 0; k < np; ++k) {
        if (w[k] - w[0] > 1e-13L * scale) {
            if (out.gap == 0.0) out.gap = double(w[k] - w[0]);
            continue;
        }
        ++out.degeneracy;
        Vector pv = es.eigenvectors().col(k);
        Vector qv = -delta * (rq * pv);
        const Real pnorm = pv.squaredNorm(), norm = pnorm + qv.squaredNorm();
        for (int i = 0; i < kSites && i < n; ++i) {
            Real mp = 0, mq = 0;
            for (Eigen::Index a = 0; a < np; ++a) mp += pv[a] * pv[a] * Real(spin_z(ground[std::size_t(a)], i));
            for (Eigen::Index a = 0; a < nq; ++a) mq += qv[a] * qv[a] * Real(spin_z(excited[std::size_t(a)], i));
            out.m[i] += double((mp + mq) / norm);
            out.m_limit[i] += double(mp / pnorm);
        }
    }
    for (int i = 0; i < kSites; ++i) {
        out.m[i] /= out.degeneracy;
        out.m_limit[i] /= out.degeneracy;
    }
    return out;
}

/// Order of degenerate perturbation theory in -sum X that first leaves a
/// nondegenerate lowest level (3 means beyond second order).
inline int lifting_order(const Eigen::VectorXd& energies, const std::vector<std::size_t>& ground, int n) {
    if (ground.size() == 1) return 0;
    const auto np = Eigen::Index(ground.size());
    std::map<std::size_t, Eigen::Index> pos;
    for (Eigen::Index k = 0; k < np; ++k) pos[ground[std::size_t(k)]] = k;
    Eigen::MatrixXd v1 = Eigen::MatrixXd::Zero(np, np);
    for (Eigen::Index a = 0; a < np; ++a)
        for (int i = 0; i < n; ++i) {
            auto it = pos.find(ground[std::size_t(a)] ^ (std::size_t(1) << i));
            if (it != pos.end()) v1(a, it->second) = -1.0;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(v1);
    std::vector<Eigen::Index> low;
    for (Eigen::Index k = 0; k < np; ++k)
        if (es1.eigenvalues()[k] - es1.eigenvalues()[0] <= 1e-9) low.push_back(k);
    if (low.size() == 1) return 1;
    const double e0 = energies.minCoeff();
    Eigen::MatrixXd v2 = Eigen::MatrixXd::Zero(np, np);
    for (Eigen::Index a = 0; a < np; ++a)
        for (int i = 0; i < n; ++i) {
            std::size_t x = ground[std::size_t(a)] ^ (std::size_t(1) << i);
            if (pos.count(x)) continue;
            double denom = e0 - energies[Eigen::Index(x)];
            for (int j = 0; j < n; ++j) {
                auto it = pos.find(x ^ (std::size_t(1) << j));
                if (it != pos.end()) v2(a, it->second) += 1.0 / denom;
            }
        }
    Eigen::MatrixXd basis(np, Eigen::Index(low.size()));
    for (std::size_t k = 0; k < low.size(); ++k) basis.col(Eigen::Index(k)) = es1.eigenvectors().col(low[k]);
    Eigen::MatrixXd block = basis.transpose() * v2 * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(block);
    int count = 0;
    for (Eigen::Index k = 0; k < block.rows(); ++k)
        if (es2.eigenvalues()[k] - es2.eigenvalues()[0] <= 1e-9) ++count;
    return count == 1 ? 2 : 3;
}

}  // namespace detail

/// Sign of <Z_spin> in the T = 0 state as delta -> 0+, for all sites.
///
/// Degenerate perturbation theory within the classical ground manifold,
/// summed to all orders through the partitioned resolvent, evaluated at two
/// small probe fields. The sign is that of the leading nonvanishing term,
/// so a limiting state with zero polarization is still signed by its O(delta)
/// correction.
inline std::array<InfinitesimalDeltaSign, kSites> infinitesimal_delta_signs(const SquareLatticeInstance& x,
                                                                            const OriginAnalysisOptions& opt = {}) {
    const auto p0 = make_problem(x, 0.0);
    const auto energies = classical_energies(p0);
    const auto gm = classical_ground_manifold(x);
    std::array<InfinitesimalDeltaSign, kSites> out{};
    const int order = detail::lifting_order(energies, gm.states, kSites);

    auto probe = detail::resolvent_ground_state(energies, gm.states, opt.probe_delta);
    auto confirm = detail::resolvent_ground_state(energies, gm.states, opt.confirm_delta);

    const bool ed_same_field = opt.ed_check_delta == opt.confirm_delta;
    auto at_check = ed_same_field ? confirm : detail::resolvent_ground_state(energies, gm.states, opt.ed_check_delta);
    std::optional<std::vector<double>> ed_m;
    double ed_noise = 0.0;
    if (opt.ed_check) {
        auto spec = diagonalize(make_problem(x, opt.ed_check_delta), {.check_residuals = false});
        const Eigen::Index deg = at_check.degeneracy;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(spec.eigenvalues.size());
        for (Eigen::Index k = 0; k < deg; ++k) w[k] = 1.0 / double(deg);
        Eigen::VectorXd m = spec.sz.transpose() * w;
        ed_m = std::vector<double>(m.data(), m.data() + m.size());
        const double width = spec.eigenvalues[spec.eigenvalues.size() - 1] - spec.eigenvalues[0];
        const double gap = deg < spec.eigenvalues.size() ? spec.eigenvalues[deg] - spec.eigenvalues[deg - 1] : width;
        ed_noise = 1e-14 * width / std::max(gap, 1e-300);
    }

    for (int i = 0; i < kSites; ++i) {
        auto& r = out[i];
        const auto& b = gm.balance[i];
        r.classical_sign = b.up > b.down ? Sign(1) : (b.up < b.down ? Sign(-1) : Sign(0));
        r.lifting_order = order;
        r.limit_degeneracy = probe.degeneracy;
        r.m_probe = probe.m[i];
        r.m_limit = probe.m_limit[i];
        Sign s_probe = sign_of(probe.m[i], opt.sign_floor);
        Sign s_confirm = sign_of(confirm.m[i], opt.sign_floor);
        r.sign = s_probe;
        r.probe_consistent = s_probe == s_confirm;
        if (gm.states.size() == 1) r.sign = r.classical_sign;
        if (ed_m) {
            double v = (*ed_m)[i];
            r.ed_conclusive = std::abs(v) > 100.0 * ed_noise && std::abs(at_check.m[i]) > 100.0 * ed_noise;
            r.ed_sign = r.ed_conclusive ? sign_of(v, opt.sign_floor) : Sign(0);
            if (r.ed_conclusive) r.ed_agrees = r.ed_sign == sign_of(at_check.m[i], opt.sign_floor);
        }
    }
    return out;
}

inline InfinitesimalDeltaSign infinitesimal_delta_sign(const SquareLatticeInstance& x, int spin,
                                                       const OriginAnalysisOptions& opt = {}) {
    if (spin < 0 || spin >= kSites) throw std::invalid_argument("spin index out of range");
    return infinitesimal_delta_signs(x, opt)[spin];
}

// ---------------------------------------------------------------------------
// Classification.

enum class SpinType { Type0 = 0, TypeI = 1, TypeII = 2, TypeIII = 3 };

inline std::string to_string(SpinType t) {
    switch (t) {
        case SpinType::Type0: return "0";
        case SpinType::TypeI: return "I";
        case SpinType::TypeII: return "II";
        default: return "III";
    }
}

inline SpinType parse_spin_type(const std::string& s) {
    if (s == "0") return SpinType::Type0;
    if (s == "I") return SpinType::TypeI;
    if (s == "II") return SpinType::TypeII;
    if (s == "III") return SpinType::TypeIII;
    throw std::invalid_argument("unknown spin type '" + s + "'");
}

struct SpinTypeRecord {
    int class_id = -1;
    int spin = 0;
    SpinType type = SpinType::Type0;
    ManifoldBalance balance;
    Sign infinitesimal_sign = 0;
    bool origin_transition = false;
    bool has_transition = false;
    int n_transitions = 0;
};

struct ClassificationInputs {
    int class_id = -1;
    int spin = 0;
    ManifoldBalance balance;
    Sign infinitesimal_sign = 0;
    bool has_transition = false;  // any sign change of m in the window
    int n_transitions = 0;
};

/// II: balanced classical ground manifold. III: definite classical
/// orientation reversed at infinitesimal delta. 0: no transition in the
/// window. I: everything else.
inline SpinTypeRecord classify_spin(const ClassificationInputs& in) {
    SpinTypeRecord r;
    r.class_id = in.class_id;
    r.spin = in.spin;
    r.balance = in.balance;
    r.infinitesimal_sign = in.infinitesimal_sign;
    r.n_transitions = in.n_transitions;
    const Sign classical = in.balance.up > in.balance.down ? Sign(1) : (in.balance.up < in.balance.down ? Sign(-1) : Sign(0));
    if (classical == 0) {
        r.type = SpinType::TypeII;
        r.origin_transition = true;
    } else if (in.infinitesimal_sign == -classical) {
        r.type = SpinType::TypeIII;
        r.origin_transition = true;
    } else if (!in.has_transition) {
        r.type = SpinType::Type0;
    } else {
        r.type = SpinType::TypeI;
    }
    r.has_transition = in.has_transition || r.origin_transition;
    return r;
}

struct TypeCensus {
    std::array<long, 4> counts{};
    long total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
    long transitioning() const { return counts[1] + counts[2] + counts[3]; }
    long operator[](SpinType t) const { return counts[std::size_t(t)]; }
};

inline TypeCensus tally(const std::vector<SpinTypeRecord>& records) {
    TypeCensus c;
    for (const auto& r : records) ++c.counts[std::size_t(r.type)];
    return c;
}

/// Classifies the 9 spins of one instance from its magnetization grid.
inline std::array<SpinTypeRecord, kSites> classify_instance(int class_id, const SquareLatticeInstance& x,
                                                            const MagnetizationGrid& grid,
                                                            const TransitionSet* traced = nullptr,
                                                            const OriginAnalysisOptions& opt = {}) {
    auto signs = SignMap::from_grid(grid);
    auto gm = classical_ground_manifold(x);
    auto inf = infinitesimal_delta_signs(x, opt);
    std::array<SpinTypeRecord, kSites> out;
    for (int i = 0; i < kSites; ++i) {
        ClassificationInputs in;
        in.class_id = class_id;
        in.spin = i;
        in.balance = gm.balance[i];
        in.infinitesimal_sign = inf[i].sign;
        in.has_transition = signs.has_sign_change(i);
        in.n_transitions = traced ? int(traced->spins[i].polylines.size()) : 0;
        out[i] = classify_spin(in);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Density of transitions.

struct TransitionDensity {
    int bins_t = 0;
    int bins_d = 0;
    double window_t = 5.0;
    double window_d = 5.0;
    std::array<std::vector<long>, 4> counts;  // per spin type, [t][d]

    long total(SpinType type) const {
        long s = 0;
        for (auto c : counts[std::size_t(type)]) s += c;
        return s;
    }
};

struct TypedTransitions {
    SpinType type;
    const SpinTransitions* transitions;
};

/// Histogram of polyline vertices over (T, delta), split by spin type.
inline TransitionDensity transition_density(const std::vector<TypedTransitions>& input, double window_t,
                                            double window_d, int bins_t, int bins_d) {
    if (bins_t <= 0 || bins_d <= 0 || !(window_t > 0) || !(window_d > 0))
        throw std::invalid_argument("invalid histogram window");
    TransitionDensity h;
    h.bins_t = bins_t;
    h.bins_d = bins_d;
    h.window_t = window_t;
    h.window_d = window_d;
    for (auto& c : h.counts) c.assign(std::size_t(bins_t) * std::size_t(bins_d), 0);
    for (const auto& item : input) {
        for (const auto& line : item.transitions->polylines)
            for (const auto& p : line.points) {
                int bt = int(p.temperature / window_t * bins_t), bd = int(p.delta / window_d * bins_d);
                if (bt < 0 || bd < 0 || bt >= bins_t || bd >= bins_d) continue;
                ++h.counts[std::size_t(item.type)][std::size_t(bt) * std::size_t(bins_d) + std::size_t(bd)];
            }
    }
    return h;
}

}  // namespace kzfreeze
