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

/// Freeze-time estimate for annealing a lattice of 4-qubit cells.
///
/// Each cell is treated as a fully connected K(4) cluster and kept in its
/// permutation-symmetric (spin-2) sector, so a cell has 5 collective states
/// m = S_z in {-2..2}. For 9 cells the state space has 5^9 states.
///
/// Units: energies are frequencies in GHz (E / h), times are in
/// microseconds, bath rates come out in 1/ns.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kzfreeze/chimera.hpp"
#include "kzfreeze/errors.hpp"
#include "kzfreeze/io.hpp"
#include "kzfreeze/lanczos.hpp"
#include "kzfreeze/lattice.hpp"

namespace kzfreeze {

// ---------------------------------------------------------------------------
// Schedule and bath.

/// A(s), B(s) over s = t / t_f in [0, 1]; tabulated (linear interpolation)
/// or the analytic surrogate A0 (1 - s)^2, B0 s.
struct Schedule {
    double t_f = 20.0;  // microseconds
    double a0 = 10.0;
    double b0 = 10.0;
    std::vector<double> s_table, a_table, b_table;
    bool surrogate = true;

    static Schedule default_surrogate(double t_f = 20.0) {
        Schedule s;
        s.t_f = t_f;
        return s;
    }

    /// CSV with columns s, A, B (a header line is allowed).
    static Schedule from_csv(const std::string& text, double t_f) {
        Schedule s;
        s.t_f = t_f;
        s.surrogate = false;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            double a, b, c;
            if (!(row >> a >> b >> c)) {
                if (s.s_table.empty()) continue;  // header
                throw std::invalid_argument("malformed schedule row '" + line + "'");
            }
            s.s_table.push_back(a);
            s.a_table.push_back(b);
            s.b_table.push_back(c);
        }
        s.validate();
        return s;
    }

    Schedule with_anneal_time(double t) const {
        Schedule s = *this;
        s.t_f = t;
        return s;
    }

    void validate() const {
        if (!(t_f > 0)) throw std::invalid_argument("anneal time must be positive");
        if (s_table.empty()) {
            if (!(a0 >= 0) || !(b0 > 0)) throw std::invalid_argument("schedule scales must be positive");
            return;
        }
        if (s_table.size() < 2) throw std::invalid_argument("schedule table needs at least two rows");
        if (std::abs(s_table.front()) > 1e-12 || std::abs(s_table.back() - 1.0) > 1e-12)
            throw std::invalid_argument("schedule table must cover s in [0, 1]");
        for (std::size_t k = 0; k < s_table.size(); ++k) {
            if (k > 0 && !(s_table[k] > s_table[k - 1]))
                throw std::invalid_argument("schedule s values must be strictly increasing");
            if (k > 0 && (a_table[k] > a_table[k - 1] || b_table[k] < b_table[k - 1]))
                throw std::invalid_argument("schedule needs A nonincreasing and B nondecreasing");
            if (a_table[k] < 0 || b_table[k] < 0) throw std::invalid_argument("schedule values must be nonnegative");
        }
    }

    double A(double s) const { return s_table.empty() ? a0 * (1 - s) * (1 - s) : interp(a_table, s); }
    double B(double s) const { return s_table.empty() ? b0 * s : interp(b_table, s); }
    /// dA/ds and dB/ds (one-sided at table knots).
    double dA(double s) const { return s_table.empty() ? -2 * a0 * (1 - s) : slope(a_table, s); }
    double dB(double s) const { return s_table.empty() ? b0 : slope(b_table, s); }

  private:
    std::size_t segment(double s) const {
        auto it = std::upper_bound(s_table.begin(), s_table.end(), s);
        std::size_t k = it == s_table.begin() ? 0 : std::size_t(it - s_table.begin()) - 1;
        return std::min(k, s_table.size() - 2);
    }
    double interp(const std::vector<double>& y, double s) const {
        std::size_t k = segment(s);
        double w = (s - s_table[k]) / (s_table[k + 1] - s_table[k]);
        return y[k] + w * (y[k + 1] - y[k]);
    }
    double slope(const std::vector<double>& y, double s) const {
        std::size_t k = segment(s);
        return (y[k + 1] - y[k]) / (s_table[k + 1] - s_table[k]);
    }
};

/// k_B / h in GHz per kelvin.
inline constexpr double kGHzPerKelvin = 20.836619;

/// Ohmic bath coupled through sigma_z; all frequencies in GHz.
struct Bath {
    double eta = 0.08;
    double omega_c = 80.0;                        // cutoff; 8 B0 for the default schedule
    double temperature = 0.017 * kGHzPerKelvin;   // 17 mK

    void validate() const {
        if (!(eta >= 0) || !(omega_c > 0) || !(temperature > 0))
            throw std::invalid_argument("bath parameters must be positive");
    }

    /// Emission (omega > 0) or absorption (omega < 0) spectrum at angular
    /// frequency omega [rad/ns]: 2 pi eta omega e^{-|omega|/omega_c} / (1 - e^{-omega/T}).
    double spectrum(double omega) const {
        const double wc = 2 * std::numbers::pi * omega_c, wt = 2 * std::numbers::pi * temperature;
        if (omega == 0.0) return 2 * std::numbers::pi * eta * wt;
        return 2 * std::numbers::pi * eta * omega * std::exp(-std::abs(omega) / wc) / (-std::expm1(-omega / wt));
    }
};

// ---------------------------------------------------------------------------
// K(4) collective model.

enum class InternalCoupling {
    Average,  // 2 alpha / 3: total K(2,2) binding spread over the 6 K(4) pairs
    Full,     // alpha on every pair
};

struct K4Options {
    double alpha = 0.25;
    double alpha_s = 1.0;
    InternalCoupling internal = InternalCoupling::Average;
    bool include_fields = true;
};

inline double internal_coupling(const K4Options& o) {
    return o.internal == InternalCoupling::Average ? 2.0 * o.alpha / 3.0 : o.alpha;
}

struct CellBond {
    int i;
    int j;
    double value;
};

/// Cells on an arbitrary graph (the 3x3 lattice, or small test lattices).
struct K4Model {
    int cells = 0;
    std::vector<double> field;       // per-cell h (sign times magnitude)
    std::vector<CellBond> bonds;     // cell pairs with J
    K4Options options;

    Eigen::Index dim() const {
        Eigen::Index d = 1;
        for (int c = 0; c < cells; ++c) d *= 5;
        return d;
    }
};

inline K4Model make_k4_model(const SquareLatticeInstance& x, const K4Options& o = {}) {
    x.validate();
    if (!(o.alpha > 0) || !(o.alpha_s >= 0)) throw std::invalid_argument("invalid K(4) scales");
    K4Model m;
    m.cells = kSites;
    m.options = o;
    for (int i = 0; i < kSites; ++i) m.field.push_back(o.include_fields ? x.field_magnitude * x.fields[i] : 0.0);
    for (int e = 0; e < kEdges; ++e) m.bonds.push_back({kGridEdges[e].u, kGridEdges[e].v, double(x.couplers[e])});
    return m;
}

/// H(s) = -A(s) sum_c 2 S_x^c + B(s) H_Ising, with
///   H_Ising = sum_c [alpha alpha_s h_c m_c - J_int (2 m_c^2 - 2)]
///             - sum_<ab> (alpha alpha_s J_ab / 2) m_a m_b,
/// i.e. the truncated-cell Ising energy with each qubit replaced by its
/// cell average m / 2 (two physical couplers per lattice bond).
class K4Hamiltonian {
  public:
    K4Hamiltonian(const K4Model& model, double a, double b) : model_(model), a_(a), b_(b) {
        const Eigen::Index n = model.dim();
        ising_.resize(n);
        const double aas = model.options.alpha * model.options.alpha_s;
        const double jint = internal_coupling(model.options);
        std::vector<int> digit(std::size_t(model.cells), 0);
        for (Eigen::Index idx = 0; idx < n; ++idx) {
            double e = 0.0;
            for (int c = 0; c < model.cells; ++c) {
                double mc = digit[std::size_t(c)] - 2;
                e += aas * model.field[std::size_t(c)] * mc - jint * (2 * mc * mc - 2);
            }
            for (const auto& bond : model.bonds)
                e -= 0.5 * aas * bond.value * (digit[std::size_t(bond.i)] - 2) * (digit[std::size_t(bond.j)] - 2);
            ising_[idx] = e;
            for (int c = 0; c < model.cells; ++c) {
                if (++digit[std::size_t(c)] < 5) break;
                digit[std::size_t(c)] = 0;
            }
        }
        for (int k = 0; k < 4; ++k) {
            double mz = k - 2;
            ladder_[std::size_t(k)] = std::sqrt(6.0 - mz * (mz + 1));  // 2 <m+1|S_x|m>
        }
    }

    Eigen::Index dim() const { return ising_.size(); }
    double A() const { return a_; }
    double B() const { return b_; }
    const K4Model& model() const { return model_; }
    const Eigen::VectorXd& ising_diagonal() const { return ising_; }

    /// y = H x
    void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
        y = b_ * ising_.cwiseProduct(x);
        if (a_ == 0.0) return;
        Eigen::Index stride = 1;
        for (int c = 0; c < model_.cells; ++c) {
            const Eigen::Index block = 5 * stride;
            for (Eigen::Index base = 0; base < dim(); base += block)
                for (int k = 0; k < 4; ++k) {
                    const double v = -a_ * ladder_[std::size_t(k)];
                    const Eigen::Index lo = base + k * stride, hi = lo + stride;
                    for (Eigen::Index j = 0; j < stride; ++j) {
                        y[hi + j] += v * x[lo + j];
                        y[lo + j] += v * x[hi + j];
                    }
                }
            stride = block;
        }
    }

    LinearOperator as_operator() const {
        return {dim(), [this](const Eigen::VectorXd& x, Eigen::VectorXd& y) { apply(x, y); }};
    }

    /// Explicit sparse matrix (tests and small systems).
    Eigen::SparseMatrix<double, Eigen::RowMajor> to_sparse() const {
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::Index stride = 1;
        for (Eigen::Index i = 0; i < dim(); ++i) trip.emplace_back(i, i, b_ * ising_[i]);
        for (int c = 0; c < model_.cells; ++c) {
            for (Eigen::Index i = 0; i < dim(); ++i) {
                int k = int((i / stride) % 5);
                if (k < 4 && a_ != 0.0) {
                    double v = -a_ * ladder_[std::size_t(k)];
                    trip.emplace_back(i + stride, i, v);
                    trip.emplace_back(i, i + stride, v);
                }
            }
            stride *= 5;
        }
        Eigen::SparseMatrix<double, Eigen::RowMajor> h(dim(), dim());
        h.setFromTriplets(trip.begin(), trip.end());
        return h;
    }

    /// Collective 2 S_z of cell c on basis state idx.
    static double two_sz(Eigen::Index idx, int c) {
        for (int k = 0; k < c; ++k) idx /= 5;
        return 2.0 * double(idx % 5 - 2);
    }

  private:
    K4Model model_;
    double a_, b_;
    Eigen::VectorXd ising_;
    std::array<double, 4> ladder_{};
};

inline K4Hamiltonian build_k4(const K4Model& model, const Schedule& schedule, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("anneal fraction must lie in [0, 1]");
    return K4Hamiltonian(model, schedule.A(s), schedule.B(s));
}

// ---------------------------------------------------------------------------
// Cell-permutation symmetric sector.

/// The subspace of states symmetric under a group of cell permutations that
/// leave the model invariant. Basis vector r is the normalized uniform
/// superposition over one orbit of basis states.
class SymmetricSector {
  public:
    /// `perms` must form a group (identity included) of cell permutations.
    SymmetricSector(const K4Model& model, const std::vector<std::vector<int>>& perms) : cells_(model.cells) {
        const Eigen::Index n = model.dim();
        orbit_.assign(std::size_t(n), -1);
        std::vector<int> digit(static_cast<std::size_t>(cells_));
        std::vector<Eigen::Index> pow5(std::size_t(cells_), 1);
        for (int c = 1; c < cells_; ++c) pow5[std::size_t(c)] = pow5[std::size_t(c - 1)] * 5;
        for (Eigen::Index idx = 0; idx < n; ++idx) {
            if (orbit_[std::size_t(idx)] >= 0) continue;
            Eigen::Index t = idx;
            for (int c = 0; c < cells_; ++c) {
                digit[std::size_t(c)] = int(t % 5);
                t /= 5;
            }
            const auto id = std::int32_t(reps_.size());
            reps_.push_back(idx);
            int count = 0;
            for (const auto& p : perms) {
                Eigen::Index image = 0;
                for (int c = 0; c < cells_; ++c) image += digit[std::size_t(c)] * pow5[std::size_t(p[std::size_t(c)])];
                if (orbit_[std::size_t(image)] < 0) {
                    orbit_[std::size_t(image)] = id;
                    ++count;
                }
            }
            size_.push_back(count);
        }
    }

    Eigen::Index dim() const { return Eigen::Index(reps_.size()); }
    int orbit_size(Eigen::Index r) const { return size_[std::size_t(r)]; }
    std::int32_t orbit_of(Eigen::Index state) const { return orbit_[std::size_t(state)]; }

    /// Restriction of H: diagonal part and the A-scaled hopping part, so
    /// H_sector(s) = B(s) D + A(s) X.
    struct Restricted {
        Eigen::VectorXd diagonal;
        Eigen::SparseMatrix<double, Eigen::RowMajor> hopping;
    };

    Restricted restrict(const K4Hamiltonian& unit) const {
        // <S|H|R> = sqrt(n_R / n_S) sum_{v in S} H_{v, u0}, u0 the representative of R.
        Restricted out;
        out.diagonal.resize(dim());
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::VectorXd e(unit.dim()), col(unit.dim());
        K4Hamiltonian hop(unit.model(), 1.0, 0.0);
        for (Eigen::Index r = 0; r < dim(); ++r) {
            out.diagonal[r] = unit.ising_diagonal()[reps_[std::size_t(r)]];
            Eigen::Index u0 = reps_[std::size_t(r)], stride = 1;
            for (int c = 0; c < cells_; ++c) {
                int k = int((u0 / stride) % 5);
                for (int dir : {-1, 1}) {
                    int kk = k + dir;
                    if (kk < 0 || kk > 4) continue;
                    double mz = std::min(k, kk) - 2;
                    double v = -std::sqrt(6.0 - mz * (mz + 1));
                    Eigen::Index target = u0 + dir * stride;
                    auto srow = orbit_[std::size_t(target)];
                    trip.emplace_back(srow, r, v * std::sqrt(double(size_[std::size_t(r)]) / size_[std::size_t(srow)]));
                }
                stride *= 5;
            }
        }
        out.hopping.resize(dim(), dim());
        out.hopping.setFromTriplets(trip.begin(), trip.end());
        return out;
    }

    Eigen::VectorXd lift(const Eigen::VectorXd& c) const {
        Eigen::VectorXd full(Eigen::Index(orbit_.size()));
        for (std::size_t u = 0; u < orbit_.size(); ++u) {
            auto r = orbit_[u];
            full[Eigen::Index(u)] = c[r] / std::sqrt(double(size_[std::size_t(r)]));
        }
        return full;
    }

  private:
    int cells_;
    std::vector<std::int32_t> orbit_;
    std::vector<Eigen::Index> reps_;
    std::vector<int> size_;
};

/// Dihedral maps of the 3x3 lattice that leave the instance unchanged (no
/// gauge), as cell permutations.
inline std::vector<std::vector<int>> instance_automorphisms(const SquareLatticeInstance& x) {
    std::vector<std::vector<int>> out;
    for (int k = 0; k < kDihedralOrder; ++k) {
        if (!(apply(SymmetryElement{std::uint8_t(k), 0}, x) == x)) continue;
        const auto& map = dihedral_site_map(k);
        out.emplace_back(map.begin(), map.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Low-lying states.

struct LowStates {
    Eigen::VectorXd energies;   // ascending
    Eigen::MatrixXd vectors;    // full-space unit columns
    Eigen::VectorXd residuals;  // full-space ||H v - E v||
    double spectral_scale = 0.0;
    int matvecs = 0;
};

/// Flips each vector's sign so its largest-magnitude component is positive.
inline void fix_phases(Eigen::MatrixXd& v) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        Eigen::Index at;
        v.col(c).cwiseAbs().maxCoeff(&at);
        if (v(at, c) < 0) v.col(c) *= -1.0;
    }
}

/// k lowest eigenpairs of H over the whole 5^cells space.
inline LowStates lowest_states(const K4Hamiltonian& h, int k = 2, const LanczosOptions& opt = {}) {
    auto pairs = lowest_eigenpairs(h.as_operator(), k, opt);
    LowStates out{pairs.values, pairs.vectors, pairs.residuals, pairs.spectral_scale, pairs.matvecs};
    fix_phases(out.vectors);
    return out;
}

/// k lowest eigenpairs within a symmetric sector; vectors and residuals are
/// reported in the full space.
inline LowStates lowest_states(const K4Hamiltonian& h, const SymmetricSector& sector,
                               const SymmetricSector::Restricted& restricted, int k = 2,
                               const LanczosOptions& opt = {}) {
    const double a = h.A(), b = h.B();
    LinearOperator op{sector.dim(), [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
                          y = b * restricted.diagonal.cwiseProduct(x);
                          if (a != 0.0) y.noalias() += a * (restricted.hopping * x);
                      }};
    auto pairs = lowest_eigenpairs(op, k, opt);
    LowStates out;
    out.energies = pairs.values;
    out.spectral_scale = pairs.spectral_scale;
    out.matvecs = pairs.matvecs;
    out.vectors.resize(h.dim(), k);
    out.residuals.resize(k);
    Eigen::VectorXd hv(h.dim());
    for (int i = 0; i < k; ++i) {
        out.vectors.col(i) = sector.lift(pairs.vectors.col(i));
        h.apply(out.vectors.col(i), hv);
        out.residuals[i] = (hv - out.energies[i] * out.vectors.col(i)).norm();
    }
    fix_phases(out.vectors);
    return out;
}

// ---------------------------------------------------------------------------
// Rates.

/// |<psi0(s)|psi1(s + ds)>| / (t_f ds), in 1/us.
inline double quench_rate(const Eigen::VectorXd& psi0_at_s, const Eigen::VectorXd& psi1_at_next, double t_f,
                          double ds) {
    if (!(t_f > 0) || !(ds > 0)) throw std::invalid_argument("quench step must be positive");
    return std::abs(psi0_at_s.dot(psi1_at_next)) / (t_f * ds);
}

struct Relaxation {
    double gap = 0.0;           // E1 - E0, GHz
    double matrix_element = 0;  // sum_c |<0|2 S_z^c|1>|^2
    double rate = 0.0;          // 1/ns
    double time_us = std::numeric_limits<double>::infinity();
};

/// Golden-rule decay rate 1 -> 0 through sigma_z coupling of every cell.
inline Relaxation relaxation_time(const K4Model& model, const LowStates& low, const Bath& bath,
                                  double rate_floor = 1e-300) {
    bath.validate();
    if (low.energies.size() < 2) throw std::invalid_argument("two states are required");
    Relaxation r;
    r.gap = low.energies[1] - low.energies[0];
    if (!(r.gap > 0)) throw NumericalError("first excited state is not above the ground state");
    const auto& v0 = low.vectors.col(0);
    const auto& v1 = low.vectors.col(1);
    const Eigen::Index n = v0.size();
    std::vector<double> elements(std::size_t(model.cells), 0.0);
    for (Eigen::Index idx = 0; idx < n; ++idx) {
        const double p = v0[idx] * v1[idx];
        if (p == 0.0) continue;
        Eigen::Index t = idx;
        for (int c = 0; c < model.cells; ++c) {
            elements[std::size_t(c)] += p * 2.0 * double(t % 5 - 2);
            t /= 5;
        }
    }
    for (double e : elements) r.matrix_element += e * e;
    r.rate = r.matrix_element * bath.spectrum(2 * std::numbers::pi * r.gap);
    r.time_us = r.rate > rate_floor ? 1e-3 / r.rate : std::numeric_limits<double>::infinity();
    return r;
}

// ---------------------------------------------------------------------------
// Freeze time.

struct FreezeOptions {
    int points = 200;
    double s_min = 0.005;
    double s_max = 0.999;
    double ds = 1e-3;                // quench step as a fraction of t_f
    bool symmetric_sector = true;    // solve in the sector of instance automorphisms
    double degenerate_gap = 1e-10;
    LanczosOptions lanczos;
};

struct FreezeCurvePoint {
    double s = 0.0;
    double energy0 = 0.0, energy1 = 0.0;
    double overlap = 0.0;            // |<psi0(s)|psi1(s + ds)>|
    double inverse_quench_rate = 0;  // us
    double relaxation_time = 0;      // us
    double residual = 0.0;
    bool degenerate = false;
};

/// The t_f-independent part of the sweep: spectra, overlaps and relaxation
/// times on the s grid. The inverse quench rate for a given t_f is
/// t_f ds / overlap.
struct FreezeCurves {
    std::vector<FreezeCurvePoint> points;
    double ds = 1e-3;
    double max_residual = 0.0;
};

enum class FreezeRegime { Crossing, AlwaysAdiabatic, AlwaysFrozen };

inline std::string to_string(FreezeRegime r) {
    switch (r) {
        case FreezeRegime::Crossing: return "crossing";
        case FreezeRegime::AlwaysAdiabatic: return "always adiabatic";
        default: return "always frozen";
    }
}

struct FreezeEstimate {
    FreezeRegime regime = FreezeRegime::Crossing;
    double s_star = 0.0;   // t* / t_f
    double t_f = 0.0;
    double temperature = 0.0;  // effective (T*, delta*) from anneal_to_effective
    double delta = 0.0;
    std::vector<FreezeCurvePoint> curve;
};

struct EffectivePoint {
    double temperature;
    double delta;
};

/// Effective superspin-model (T, delta) at anneal fraction s: energies in
/// units of E_s = |J_s| B(s).
inline EffectivePoint anneal_to_effective(const Schedule& schedule, double s, double alpha, double alpha_s,
                                          CellMode mode, double t_phys) {
    const double b = schedule.B(s);
    if (!(b > 0)) throw std::invalid_argument("B(s) must be positive");
    const double unit = superspin_scale(mode, alpha, alpha_s) * b;
    if (!(unit > 0)) throw std::invalid_argument("superspin energy scale must be positive");
    return {t_phys / unit, schedule.A(s) / unit};
}

inline FreezeCurves freeze_curves(const K4Model& model, const Schedule& schedule, const Bath& bath,
                                  const FreezeOptions& opt = {}) {
    if (opt.points < 2 || !(opt.s_min >= 0) || !(opt.s_max + opt.ds <= 1.0) || !(opt.s_min < opt.s_max))
        throw std::invalid_argument("invalid freeze sweep");
    FreezeCurves out;
    out.ds = opt.ds;
    std::optional<SymmetricSector> sector;
    std::optional<SymmetricSector::Restricted> restricted;
    if (opt.symmetric_sector) {
        std::vector<std::vector<int>> perms;
        if (model.cells == kSites && model.bonds.size() == std::size_t(kEdges)) {
            SquareLatticeInstance x;
            for (int e = 0; e < kEdges; ++e) x.couplers[e] = model.bonds[std::size_t(e)].value > 0 ? 1 : -1;
            bool uniform = true;
            for (int c = 0; c < kSites; ++c) uniform &= model.field[std::size_t(c)] == model.field[0];
            if (uniform) {
                x.fields.fill(model.field[0] < 0 ? -1 : 1);
                x.field_magnitude = std::abs(model.field[0]);
            }
            perms = uniform ? instance_automorphisms(x) : std::vector<std::vector<int>>{};
        }
        if (perms.empty()) {
            std::vector<int> id(std::size_t(model.cells));
            for (int c = 0; c < model.cells; ++c) id[std::size_t(c)] = c;
            perms.push_back(id);
        }
        sector.emplace(model, perms);
        restricted = sector->restrict(K4Hamiltonian(model, 0.0, 1.0));
    }

    LanczosOptions lopt = opt.lanczos;
    std::vector<Eigen::VectorXd> warm;  // sector or full coordinates
    auto solve = [&](double s) {
        auto h = build_k4(model, schedule, s);
        lopt.start = warm;
        LowStates low = sector ? lowest_states(h, *sector, *restricted, 2, lopt) : lowest_states(h, 2, lopt);
        return low;
    };
    auto to_warm = [&](const LowStates& low) {
        warm.clear();
        for (int i = 0; i < 2; ++i) {
            if (!sector) {
                warm.push_back(low.vectors.col(i));
                continue;
            }
            Eigen::VectorXd c = Eigen::VectorXd::Zero(sector->dim());
            for (Eigen::Index u = 0; u < low.vectors.rows(); ++u) c[sector->orbit_of(u)] += low.vectors(u, i);
            for (Eigen::Index r = 0; r < c.size(); ++r) c[r] /= std::sqrt(double(sector->orbit_size(r)));
            warm.push_back(c);
        }
    };

    for (int p = 0; p < opt.points; ++p) {
        const double s = opt.s_min + (opt.s_max - opt.s_min) * p / (opt.points - 1);
        auto low = solve(s);
        to_warm(low);
        auto next = solve(s + opt.ds);
        FreezeCurvePoint pt;
        pt.s = s;
        pt.energy0 = low.energies[0];
        pt.energy1 = low.energies[1];
        pt.degenerate = low.energies[1] - low.energies[0] < opt.degenerate_gap ||
                        next.energies[1] - next.energies[0] < opt.degenerate_gap;
        // A degenerate pair only fixes a plane; the basis of that plane
        // aligned with psi0(s) has no excited-state overlap.
        pt.overlap = pt.degenerate ? 0.0 : std::abs(low.vectors.col(0).dot(next.vectors.col(1)));
        pt.residual = std::max(low.residuals.maxCoeff(), next.residuals.maxCoeff());
        pt.relaxation_time = pt.degenerate ? std::numeric_limits<double>::infinity()
                                           : relaxation_time(model, low, bath).time_us;
        out.max_residual = std::max(out.max_residual, pt.residual / std::max(1.0, low.spectral_scale));
        out.points.push_back(pt);
    }
    return out;
}

/// Earliest s at which the relaxation time reaches the inverse quench rate,
/// interpolated linearly in log(relaxation / inverse rate).
inline FreezeEstimate freeze_from_curves(const FreezeCurves& curves, double t_f) {
    if (curves.points.empty()) throw std::invalid_argument("empty freeze curves");
    FreezeEstimate est;
    est.t_f = t_f;
    est.curve = curves.points;
    std::vector<double> f;
    for (auto& p : est.curve) {
        p.inverse_quench_rate = p.overlap > 0 ? t_f * curves.ds / p.overlap : std::numeric_limits<double>::infinity();
        double ratio = p.relaxation_time / p.inverse_quench_rate;
        f.push_back(std::isnan(ratio) ? 0.0 : std::log(ratio));
    }
    if (f[0] >= 0) {
        est.regime = FreezeRegime::AlwaysFrozen;
        est.s_star = est.curve.front().s;
        return est;
    }
    for (std::size_t k = 1; k < f.size(); ++k) {
        if (f[k] < 0) continue;
        double a = est.curve[k - 1].s, b = est.curve[k].s;
        if (std::isinf(f[k])) {
            est.s_star = b;
        } else {
            est.s_star = a + (b - a) * (-f[k - 1]) / (f[k] - f[k - 1]);
        }
        est.regime = FreezeRegime::Crossing;
        return est;
    }
    est.regime = FreezeRegime::AlwaysAdiabatic;
    est.s_star = est.curve.back().s;
    return est;
}

struct FreezeRequest {
    SquareLatticeInstance instance;  // all-ferromagnetic by default
    K4Options k4;
    Schedule schedule = Schedule::default_surrogate();
    Bath bath;
    CellMode cell_mode = CellMode::Truncated4;
    FreezeOptions sweep;
};

/// Freeze estimates for several anneal times; the curves are computed once
/// since only the inverse quench rate depends on t_f.
inline std::vector<FreezeEstimate> freeze_times(const FreezeRequest& req, const std::vector<double>& t_f_list) {
    req.schedule.validate();
    req.bath.validate();
    auto model = make_k4_model(req.instance, req.k4);
    auto curves = freeze_curves(model, req.schedule, req.bath, req.sweep);
    std::vector<FreezeEstimate> out;
    for (double t_f : t_f_list) {
        if (!(t_f > 0)) throw std::invalid_argument("anneal time must be positive");
        auto est = freeze_from_curves(curves, t_f);
        auto eff = anneal_to_effective(req.schedule, est.s_star, req.k4.alpha, req.k4.alpha_s, req.cell_mode,
                                       req.bath.temperature);
        est.temperature = eff.temperature;
        est.delta = eff.delta;
        out.push_back(std::move(est));
    }
    return out;
}

inline FreezeEstimate freeze_time(const FreezeRequest& req) { return freeze_times(req, {req.schedule.t_f}).front(); }

inline std::string freeze_curves_to_csv(const FreezeEstimate& e, std::string_view config_hash) {
    std::string out = provenance_comment(config_hash);
    out += "t_f,s,inv_quench_rate,relaxation_time,gap,overlap\n";
    char buf[256];
    for (const auto& p : e.curve) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.t_f, p.s, p.inverse_quench_rate,
                      p.relaxation_time, p.energy1 - p.energy0, p.overlap);
        out += buf;
    }
    return out;
}

}  // namespace kzfreeze
