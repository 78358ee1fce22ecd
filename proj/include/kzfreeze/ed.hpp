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

/// Exact diagonalization of small transverse-field Ising models
///   H = -delta sum_i X_i + sum_i h_i Z_i - sum_<ij> J_ij Z_i Z_j
/// and thermal single-spin magnetizations <Z_i>(T) with k_B = 1.
///
/// Basis state b has Z_i = +1 when bit i of b is clear.

#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kzfreeze/errors.hpp"
#include "kzfreeze/lattice.hpp"

namespace kzfreeze {

inline constexpr int kMaxEdSpins = 14;

struct Coupling {
    int i;
    int j;
    double value;
};

struct TfimProblem {
    int n = 0;
    std::vector<double> fields;
    std::vector<Coupling> couplers;
    double delta = 0.0;

    std::size_t dim() const { return std::size_t(1) << n; }

    void validate() const {
        if (n <= 0) throw std::invalid_argument("spin count must be positive");
        if (n > kMaxEdSpins) throw std::invalid_argument("spin count exceeds the dense ED limit of 14");
        if (int(fields.size()) != n) throw std::invalid_argument("field vector size does not match spin count");
        for (const auto& c : couplers)
            if (c.i < 0 || c.j < 0 || c.i >= n || c.j >= n || c.i == c.j)
                throw std::invalid_argument("coupler index out of range");
        if (!(delta >= 0.0)) throw std::invalid_argument("transverse field must be nonnegative");
    }
};

inline TfimProblem make_problem(const SquareLatticeInstance& x, double delta) {
    TfimProblem p;
    p.n = kSites;
    p.delta = delta;
    p.fields.resize(kSites);
    for (int i = 0; i < kSites; ++i) p.fields[i] = x.field_magnitude * x.fields[i];
    for (int e = 0; e < kEdges; ++e) p.couplers.push_back({kGridEdges[e].u, kGridEdges[e].v, double(x.couplers[e])});
    return p;
}

inline double spin_z(std::size_t b, int i) { return ((b >> i) & 1u) ? -1.0 : 1.0; }

/// Diagonal (classical) part of H for every basis state.
inline Eigen::VectorXd classical_energies(const TfimProblem& p) {
    const std::size_t d = p.dim();
    Eigen::VectorXd e(d);
    for (std::size_t b = 0; b < d; ++b) {
        double v = 0.0;
        for (int i = 0; i < p.n; ++i) v += p.fields[i] * spin_z(b, i);
        for (const auto& c : p.couplers) v -= c.value * spin_z(b, c.i) * spin_z(b, c.j);
        e[Eigen::Index(b)] = v;
    }
    return e;
}

inline Eigen::MatrixXd dense_hamiltonian(const TfimProblem& p) {
    p.validate();
    const auto d = Eigen::Index(p.dim());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    h.diagonal() = classical_energies(p);
    if (p.delta != 0.0)
        for (Eigen::Index b = 0; b < d; ++b)
            for (int i = 0; i < p.n; ++i) h(b ^ (Eigen::Index(1) << i), b) -= p.delta;
    return h;
}

struct SpectralData {
    int n = 0;
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // columns; empty when not retained
    Eigen::MatrixXd sz;            // sz(k, i) = <k| Z_i |k>
    double max_residual = 0.0;     // max_k |H v_k - l_k v_k|, if checked
    double hamiltonian_norm = 0.0; // Frobenius norm
    double trace = 0.0;
};

struct DiagonalizeOptions {
    bool check_residuals = true;
    bool keep_eigenvectors = false;
    double residual_tolerance = 1e-10;  // relative to the Frobenius norm
};

namespace detail {

/// Some OpenBLAS builds pick AVX-512 kernels that return wrong eigenvectors
/// on certain CPUs (setting OPENBLAS_CORETYPE=Haswell avoids it). Probe once
/// with a matrix big enough to reach the blocked code paths.
inline bool lapack_eigensolver_is_sound() {
    static const bool sound = [] {
        const lapack_int n = 160;
        Eigen::MatrixXd a(n, n);
        for (lapack_int i = 0; i < n; ++i)
            for (lapack_int j = 0; j <= i; ++j) a(i, j) = a(j, i) = std::sin(0.37 * i * j + i - 2.0 * j);
        Eigen::MatrixXd v = a;
        Eigen::VectorXd w(n);
        if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, v.data(), n, w.data()) != 0) return false;
        return (a * v - v * w.asDiagonal()).cwiseAbs().maxCoeff() <= 1e-10 * a.norm();
    }();
    return sound;
}

/// Symmetric eigensolve in place: `a` becomes the eigenvector matrix.
/// Falls back through LAPACK drivers, then Eigen, before giving up.
inline void symmetric_eigensolve(Eigen::MatrixXd& a, Eigen::VectorXd& w) {
    const lapack_int n = lapack_int(a.rows());
    w.resize(n);
    if (!lapack_eigensolver_is_sound()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
        w = es.eigenvalues();
        a = es.eigenvectors();
        return;
    }
    Eigen::MatrixXd work = a;
    lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, work.data(), n, w.data());
    if (info == 0) {
        a = std::move(work);
        return;
    }
    Eigen::MatrixXd z(n, n);
    std::vector<lapack_int> support(2 * std::size_t(n));
    lapack_int found = 0;
    work = a;
    info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'A', 'U', n, work.data(), n, 0.0, 0.0, 0, 0, 0.0, &found,
                          w.data(), z.data(), n, support.data());
    if (info == 0 && found == n) {
        a = std::move(z);
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
        throw NumericalError("symmetric eigensolver did not converge (LAPACK info " + std::to_string(info) + ")");
    w = es.eigenvalues();
    a = es.eigenvectors();
}

}  // namespace detail

inline SpectralData diagonalize(const TfimProblem& p, const DiagonalizeOptions& opt = {}) {
    Eigen::MatrixXd h = dense_hamiltonian(p);
    SpectralData s;
    s.n = p.n;
    s.trace = h.trace();
    s.hamiltonian_norm = h.norm();
    Eigen::MatrixXd v = h;
    detail::symmetric_eigensolve(v, s.eigenvalues);

    if (opt.check_residuals) {
        Eigen::MatrixXd r = h * v - v * s.eigenvalues.asDiagonal();
        s.max_residual = r.colwise().norm().maxCoeff();
        if (s.max_residual > opt.residual_tolerance * std::max(1.0, s.hamiltonian_norm))
            throw NumericalError("eigenpair residual " + std::to_string(s.max_residual) + " exceeds tolerance");
    }

    const auto d = Eigen::Index(p.dim());
    Eigen::MatrixXd zs(d, p.n);
    for (Eigen::Index b = 0; b < d; ++b)
        for (int i = 0; i < p.n; ++i) zs(b, i) = spin_z(std::size_t(b), i);
    s.sz = v.cwiseAbs2().transpose() * zs;
    if (opt.keep_eigenvectors) s.eigenvectors = std::move(v);
    return s;
}

/// Eigenvalues within this distance of the minimum form the T = 0 manifold.
inline double ground_manifold_tolerance(const Eigen::VectorXd& eigenvalues) {
    double width = eigenvalues[eigenvalues.size() - 1] - eigenvalues[0];
    return 1e-9 * std::max(width, 1.0);
}

/// Boltzmann weights (normalized) at temperature T; T = 0 gives the uniform
/// average over the ground manifold.
inline Eigen::VectorXd boltzmann_weights(const Eigen::VectorXd& eigenvalues, double temperature) {
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
    const Eigen::Index d = eigenvalues.size();
    const double e0 = eigenvalues[0];
    Eigen::VectorXd w(d);
    if (temperature == 0.0) {
        const double tol = ground_manifold_tolerance(eigenvalues);
        for (Eigen::Index k = 0; k < d; ++k) w[k] = (eigenvalues[k] - e0 <= tol) ? 1.0 : 0.0;
    } else {
        for (Eigen::Index k = 0; k < d; ++k) w[k] = std::exp(-(eigenvalues[k] - e0) / temperature);
    }
    return w / w.sum();
}

inline std::vector<double> thermal_magnetization(const SpectralData& s, double temperature) {
    Eigen::VectorXd m = s.sz.transpose() * boltzmann_weights(s.eigenvalues, temperature);
    return {m.data(), m.data() + m.size()};
}

/// Strictly increasing sample points; `uniform` spans [lo, hi) with n points.
struct Axis {
    std::vector<double> values;

    static Axis uniform(int n, double lo, double hi) {
        if (n <= 0 || !(hi > lo)) throw std::invalid_argument("invalid axis");
        Axis a;
        a.values.resize(n);
        for (int k = 0; k < n; ++k) a.values[k] = lo + (hi - lo) * k / n;
        return a;
    }

    int size() const { return int(values.size()); }

    void validate() const {
        if (values.empty()) throw std::invalid_argument("empty axis");
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (!(values[k] >= 0.0)) throw std::invalid_argument("axis values must be nonnegative");
            if (k > 0 && !(values[k] > values[k - 1])) throw std::invalid_argument("axis must be strictly increasing");
        }
    }
};

struct GridSpec {
    Axis temperature;
    Axis delta;

    static GridSpec standard(int points = 101, double window = 5.0) {
        return {Axis::uniform(points, 0.0, window), Axis::uniform(points, 0.0, window)};
    }
};

/// m_i(T, delta) for the 9 sites, stored [spin][T][delta].
struct MagnetizationGrid {
    GridSpec grid;
    std::vector<double> values;

    int nt() const { return grid.temperature.size(); }
    int nd() const { return grid.delta.size(); }
    std::size_t index(int spin, int t, int d) const {
        return (std::size_t(spin) * std::size_t(nt()) + std::size_t(t)) * std::size_t(nd()) + std::size_t(d);
    }
    double at(int spin, int t, int d) const { return values[index(spin, t, d)]; }
    double& at(int spin, int t, int d) { return values[index(spin, t, d)]; }
};

/// Thermal magnetization of one delta column for all temperatures.
inline void fill_delta_column(const TfimProblem& p, const Axis& temperatures, int column, MagnetizationGrid& out,
                              const DiagonalizeOptions& opt) {
    auto spec = diagonalize(p, opt);
    for (int t = 0; t < temperatures.size(); ++t) {
        auto m = thermal_magnetization(spec, temperatures.values[t]);
        for (int i = 0; i < p.n; ++i) out.at(i, t, column) = m[i];
    }
}

/// One diagonalization per delta value, reused across all temperatures.
inline MagnetizationGrid magnetization_grid(const SquareLatticeInstance& x, const GridSpec& grid,
                                            const DiagonalizeOptions& opt = {.check_residuals = false}) {
    grid.temperature.validate();
    grid.delta.validate();
    MagnetizationGrid out{grid, std::vector<double>(std::size_t(kSites) * grid.temperature.size() * grid.delta.size())};
    for (int d = 0; d < grid.delta.size(); ++d)
        fill_delta_column(make_problem(x, grid.delta.values[d]), grid.temperature, d, out, opt);
    return out;
}

}  // namespace kzfreeze
