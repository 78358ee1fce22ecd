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

#include "kzfreeze/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace kzfreeze {
namespace {

// 2x2 lattice of cells: 0 1 / 2 3.
K4Model plaquette(const std::array<double, 4>& j, const std::array<double, 4>& h, K4Options o = {}) {
    K4Model m;
    m.cells = 4;
    m.options = o;
    m.field.assign(h.begin(), h.end());
    m.bonds = {{0, 1, j[0]}, {1, 3, j[1]}, {3, 2, j[2]}, {2, 0, j[3]}};
    return m;
}

Eigen::MatrixXd dense(const K4Hamiltonian& h) { return Eigen::MatrixXd(h.to_sparse()); }

TEST(Schedule, SurrogateShape) {
    auto s = Schedule::default_surrogate();
    EXPECT_DOUBLE_EQ(s.A(0.0), 10.0);
    EXPECT_DOUBLE_EQ(s.A(1.0), 0.0);
    EXPECT_DOUBLE_EQ(s.B(0.0), 0.0);
    EXPECT_DOUBLE_EQ(s.B(0.5), 5.0);
    EXPECT_DOUBLE_EQ(s.A(0.5), 2.5);
    EXPECT_DOUBLE_EQ(s.dA(0.5), -10.0);
    EXPECT_DOUBLE_EQ(s.dB(0.5), 10.0);
    for (double x = 0.0; x < 1.0; x += 0.01) {
        EXPECT_GE(s.A(x), s.A(x + 0.01));
        EXPECT_LE(s.B(x), s.B(x + 0.01));
    }
}

TEST(Schedule, CsvTable) {
    auto s = Schedule::from_csv("s,A,B\n0,8,0\n0.5,2,3\n1,0,6\n", 20.0);
    EXPECT_DOUBLE_EQ(s.A(0.25), 5.0);
    EXPECT_DOUBLE_EQ(s.B(0.75), 4.5);
    EXPECT_DOUBLE_EQ(s.dA(0.25), -12.0);
    EXPECT_DOUBLE_EQ(s.B(1.0), 6.0);
    EXPECT_THROW(Schedule::from_csv("0,1,0\n0.7,2,1\n1,0,2\n", 20.0), std::invalid_argument);  // A rises
    EXPECT_THROW(Schedule::from_csv("0,1,0\n0.5,0.5,1\n0.5,0,2\n1,0,2\n", 20.0), std::invalid_argument);
    EXPECT_THROW(Schedule::from_csv("0,1,0\n0.5,0.5,1\n", 20.0), std::invalid_argument);  // stops short of 1
    EXPECT_THROW(Schedule::from_csv("0,1,0\nx,y\n1,0,1\n", 20.0), std::invalid_argument);
    EXPECT_THROW(Schedule::from_csv("0,1,0\n1,0,1\n", 0.0), std::invalid_argument);
}

TEST(Bath, DetailedBalance) {
    Bath b;
    for (double w : {0.1, 1.0, 5.0, 30.0}) {
        double ratio = b.spectrum(w) / b.spectrum(-w);
        EXPECT_NEAR(ratio / std::exp(w / (2 * std::numbers::pi * b.temperature)), 1.0, 1e-10);
    }
    // Continuous through zero frequency.
    EXPECT_NEAR(b.spectrum(1e-9) / b.spectrum(0.0), 1.0, 1e-6);
    Bath stronger = b;
    stronger.eta *= 2;
    EXPECT_NEAR(stronger.spectrum(3.0), 2 * b.spectrum(3.0), 1e-12);
}

TEST(K4, SingleCellMatchesFourSpinOracle) {
    // Four spins, all-to-all coupling J_int, uniform field; the spin-2
    // multiplet of the 16-state problem is the collective model.
    K4Options o;
    K4Model m;
    m.cells = 1;
    m.field = {1.0};
    m.options = o;
    const double a = 1.7, b = 2.3, jint = internal_coupling(o), hz = 0.5 * o.alpha * o.alpha_s;
    K4Hamiltonian h(m, a, b);

    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(16, 16);
    for (int s = 0; s < 16; ++s) {
        auto z = [&](int i) { return (s >> i) & 1 ? -1.0 : 1.0; };
        double e = 0;
        for (int i = 0; i < 4; ++i) e += hz * z(i);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) e -= jint * z(i) * z(j);
        full(s, s) = b * e;
        for (int i = 0; i < 4; ++i) full(s ^ (1 << i), s) -= a;
    }
    // Dicke states by number of down spins; digit k of the collective model
    // has S_z = k - 2, i.e. 4 - k spins down.
    Eigen::MatrixXd dicke = Eigen::MatrixXd::Zero(16, 5);
    for (int s = 0; s < 16; ++s) dicke(s, 4 - __builtin_popcount(unsigned(s))) = 1.0;
    for (int k = 0; k < 5; ++k) dicke.col(k).normalize();
    EXPECT_LE((full * dicke - dicke * (dicke.transpose() * full * dicke)).norm(), 1e-12);  // invariant subspace

    Eigen::MatrixXd projected = dicke.transpose() * full * dicke;
    EXPECT_LE((projected - dense(h)).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(projected), e2(dense(h));
    EXPECT_LE((e1.eigenvalues() - e2.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(K4, ClassicalLimitIsDiagonal) {
    auto model = make_k4_model(SquareLatticeInstance{});
    auto h = build_k4(model, Schedule::default_surrogate(), 1.0);
    EXPECT_EQ(h.A(), 0.0);
    auto sp = h.to_sparse();
    EXPECT_EQ(sp.nonZeros(), h.dim());
    // Ground state: every cell fully down, opposing the positive field.
    Eigen::Index best;
    h.ising_diagonal().minCoeff(&best);
    EXPECT_EQ(best, 0);
    EXPECT_THROW(build_k4(model, Schedule::default_surrogate(), 1.5), std::invalid_argument);
}

TEST(K4, SparseStructureAndMatvec) {
    auto m = plaquette({1, -1, 1, 1}, {1, 1, -1, 1});
    K4Hamiltonian h(m, 1.3, 0.7);
    auto sp = h.to_sparse();
    Eigen::MatrixXd d(sp);
    EXPECT_LE((d - d.transpose()).norm(), 0.0);
    for (Eigen::Index r = 0; r < sp.rows(); ++r) EXPECT_LE(sp.row(r).nonZeros(), 1 + 2 * m.cells);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Eigen::VectorXd x(h.dim()), y;
    for (auto& v : x) v = g(rng);
    h.apply(x, y);
    EXPECT_LE((y - d * x).norm(), 1e-12 * x.norm());

    // 9 cells: at most 37 entries per row.
    auto full = K4Hamiltonian(make_k4_model(SquareLatticeInstance{}), 1.0, 1.0).to_sparse();
    Eigen::Index widest = 0;
    for (Eigen::Index r = 0; r < full.rows(); r += 997) widest = std::max(widest, full.row(r).nonZeros());
    EXPECT_LE(widest, 37);
    EXPECT_EQ(full.rows(), 1953125);
}

TEST(Lanczos, PlaquetteMatchesDense) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        std::array<double, 4> j{}, hf{};
        for (auto& v : j) v = rng() % 2 ? 1.0 : -1.0;
        for (auto& v : hf) v = rng() % 2 ? 1.0 : -1.0;
        auto m = plaquette(j, hf);
        double s = 0.1 + 0.2 * trial;
        auto h = build_k4(m, Schedule::default_surrogate(), s);
        LanczosOptions opt;
        opt.tolerance = 1e-12;
        auto low = lowest_states(h, 2, opt);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(h));
        EXPECT_NEAR(low.energies[0], es.eigenvalues()[0], 1e-9);
        EXPECT_NEAR(low.energies[1], es.eigenvalues()[1], 1e-9);
        EXPECT_LE(low.residuals.maxCoeff(), 1e-8 * low.spectral_scale);
        EXPECT_LE(std::abs(low.vectors.col(0).dot(low.vectors.col(1))), 1e-8);
        if (es.eigenvalues()[1] - es.eigenvalues()[0] > 1e-3) {
            EXPECT_NEAR(std::abs(low.vectors.col(0).dot(es.eigenvectors().col(0))), 1.0, 1e-9);
        }
        // Rayleigh quotients.
        Eigen::VectorXd hv;
        for (int k = 0; k < 2; ++k) {
            h.apply(low.vectors.col(k), hv);
            EXPECT_NEAR(low.vectors.col(k).dot(hv), low.energies[k], 1e-9);
        }
    }
}

TEST(Lanczos, DeterministicForFixedSeed) {
    auto h = build_k4(plaquette({1, 1, 1, 1}, {1, 1, 1, 1}), Schedule::default_surrogate(), 0.4);
    auto a = lowest_states(h, 2), b = lowest_states(h, 2);
    EXPECT_EQ(a.energies, b.energies);
    EXPECT_EQ(a.vectors, b.vectors);
}

TEST(Lanczos, ReportsNonConvergence) {
    auto h = build_k4(plaquette({1, 1, 1, 1}, {1, 1, 1, 1}), Schedule::default_surrogate(), 0.4);
    LanczosOptions opt;
    opt.max_restarts = 0;
    opt.basis_size = 10;
    opt.tolerance = 1e-15;
    try {
        lowest_states(h, 2, opt);
        FAIL() << "expected non-convergence";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
    }
}

TEST(Sector, PlaquetteSymmetricSectorHoldsLowStates) {
    // Uniform ferromagnetic plaquette: the square's 8 symmetries permute cells.
    auto m = plaquette({1, 1, 1, 1}, {1, 1, 1, 1});
    std::vector<std::vector<int>> group = {{0, 1, 2, 3}, {1, 3, 0, 2}, {3, 2, 1, 0}, {2, 0, 3, 1},
                                           {1, 0, 3, 2}, {2, 3, 0, 1}, {0, 2, 1, 3}, {3, 1, 2, 0}};
    SymmetricSector sector(m, group);
    int total = 0;
    for (Eigen::Index r = 0; r < sector.dim(); ++r) total += sector.orbit_size(r);
    EXPECT_EQ(total, 625);
    auto restricted = sector.restrict(K4Hamiltonian(m, 0.0, 1.0));
    for (double s : {0.2, 0.5, 0.8}) {
        auto h = build_k4(m, Schedule::default_surrogate(), s);
        auto low = lowest_states(h, sector, restricted, 2);
        Eigen::MatrixXd d = dense(h);
        // Reduced matrix is the projection of H onto symmetric states.
        Eigen::MatrixXd basis(h.dim(), sector.dim());
        for (Eigen::Index r = 0; r < sector.dim(); ++r) basis.col(r) = sector.lift(Eigen::VectorXd::Unit(sector.dim(), r));
        Eigen::MatrixXd reduced = h.B() * Eigen::MatrixXd(restricted.diagonal.asDiagonal()) +
                                  h.A() * Eigen::MatrixXd(restricted.hopping);
        EXPECT_LE((basis.transpose() * d * basis - reduced).norm(), 1e-10);
        EXPECT_LE((basis.transpose() * basis - Eigen::MatrixXd::Identity(sector.dim(), sector.dim())).norm(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
        EXPECT_NEAR(low.energies[0], es.eigenvalues()[0], 1e-9);
        EXPECT_LE(low.residuals.maxCoeff(), 1e-8 * std::max(1.0, low.spectral_scale));
    }
}

TEST(Sector, AutomorphismsOfInstances) {
    EXPECT_EQ(instance_automorphisms(SquareLatticeInstance{}).size(), 8u);
    for (const auto& x : enumerate_classes()) {
        auto g = instance_automorphisms(x);
        ASSERT_FALSE(g.empty());
        EXPECT_EQ(8 % g.size(), 0u);
    }
}

TEST(QuenchRate, TimeIndependentIsZero) {
    auto h = build_k4(plaquette({1, -1, 1, 1}, {1, 1, 1, -1}), Schedule::default_surrogate(), 0.3);
    auto low = lowest_states(h, 2);
    EXPECT_LE(quench_rate(low.vectors.col(0), low.vectors.col(1), 20.0, 1e-3), 1e-8 / (20.0 * 1e-3));
}

TEST(QuenchRate, ScalesInverselyWithAnnealTimeAndIgnoresPhase) {
    Eigen::VectorXd a = Eigen::VectorXd::Random(50).normalized(), b = Eigen::VectorXd::Random(50).normalized();
    double r20 = quench_rate(a, b, 20.0, 1e-3), r200 = quench_rate(a, b, 200.0, 1e-3);
    EXPECT_NEAR(r200 / r20, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(quench_rate(-a, b, 20.0, 1e-3), r20);
    EXPECT_DOUBLE_EQ(quench_rate(a, -b, 20.0, 1e-3), r20);
    EXPECT_THROW(quench_rate(a, b, 0.0, 1e-3), std::invalid_argument);
}

TEST(QuenchRate, TwoLevelRotationRate) {
    // H(s) = -A(s) X + B(s) eps Z. Eigenvectors rotate by theta(s) with
    // tan(theta) = A / (B eps), and |<0(s)|1(s + ds)>| / ds -> |theta'| / 2.
    const auto sched = Schedule::default_surrogate(20.0);
    const double eps = 0.7, ds = 1e-6;
    auto eig = [&](double s) {
        Eigen::Matrix2d h;
        h << sched.B(s) * eps, -sched.A(s), -sched.A(s), -sched.B(s) * eps;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
        Eigen::MatrixXd v = es.eigenvectors();
        fix_phases(v);
        return v;
    };
    for (double s : {0.1, 0.3, 0.38, 0.5, 0.8}) {
        auto v0 = eig(s), v1 = eig(s + ds);
        double numeric = quench_rate(v0.col(0), v1.col(1), sched.t_f, ds);
        double a = sched.A(s), b = sched.B(s) * eps, da = sched.dA(s), db = sched.dB(s) * eps;
        double theta_dot = (da * b - a * db) / (a * a + b * b);
        double analytic = std::abs(theta_dot) / 2 / sched.t_f;
        EXPECT_NEAR(numeric / analytic, 1.0, 1e-4) << s;
    }
}

TEST(Relaxation, SelectionRuleAndLinearity) {
    auto m = plaquette({1, 1, 1, 1}, {1, 1, 1, 1});
    // Classical limit: eigenstates are basis states and 2 S_z has no
    // off-diagonal element.
    auto h = build_k4(m, Schedule::default_surrogate(), 1.0);
    LowStates low;
    low.energies = Eigen::Vector2d(0.0, 1.0);
    low.vectors = Eigen::MatrixXd::Zero(h.dim(), 2);
    low.vectors(0, 0) = 1;
    low.vectors(1, 1) = 1;
    EXPECT_TRUE(std::isinf(relaxation_time(m, low, Bath{}).time_us));

    auto hq = build_k4(m, Schedule::default_surrogate(), 0.5);
    auto lq = lowest_states(hq, 2);
    Bath b;
    auto r1 = relaxation_time(m, lq, b);
    b.eta *= 3;
    auto r3 = relaxation_time(m, lq, b);
    EXPECT_NEAR(r3.rate / r1.rate, 3.0, 1e-12);
    EXPECT_GT(r1.matrix_element, 0.0);

    // Oracle for the matrix element with dense vectors.
    Eigen::MatrixXd d = dense(hq);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
    double me = 0;
    for (int c = 0; c < 4; ++c) {
        double e = 0;
        for (Eigen::Index u = 0; u < d.rows(); ++u)
            e += es.eigenvectors()(u, 0) * K4Hamiltonian::two_sz(u, c) * es.eigenvectors()(u, 1);
        me += e * e;
    }
    EXPECT_NEAR(r1.matrix_element, me, 1e-9);
    EXPECT_NEAR(r1.gap, es.eigenvalues()[1] - es.eigenvalues()[0], 1e-9);

    low.energies = Eigen::Vector2d(1.0, 1.0);
    EXPECT_THROW(relaxation_time(m, low, Bath{}), NumericalError);
}

FreezeCurves synthetic_curves(double tau_slope) {
    // inverse rate = t_f * 1e-3 / overlap with overlap = 1e-3: equal to t_f.
    FreezeCurves c;
    c.ds = 1e-3;
    for (int k = 0; k <= 100; ++k) {
        FreezeCurvePoint p;
        p.s = k / 100.0;
        p.overlap = 1e-3;
        p.relaxation_time = std::exp(tau_slope * (p.s - 0.5));  // equals 1 us at s = 0.5
        c.points.push_back(p);
    }
    return c;
}

TEST(Freeze, LogInterpolatedCrossing) {
    auto c = synthetic_curves(20.0);
    auto e = freeze_from_curves(c, 1.0);
    EXPECT_EQ(e.regime, FreezeRegime::Crossing);
    EXPECT_NEAR(e.s_star, 0.5, 1e-12);
    // tau = t_f at s = 0.5 + log(t_f) / 20; exact in log space.
    e = freeze_from_curves(c, 10.0);
    EXPECT_NEAR(e.s_star, 0.5 + std::log(10.0) / 20.0, 1e-12);
    EXPECT_LT(freeze_from_curves(c, 20.0).s_star, freeze_from_curves(c, 200.0).s_star);
    EXPECT_EQ(freeze_from_curves(c, 1e-9).regime, FreezeRegime::AlwaysFrozen);
    EXPECT_EQ(freeze_from_curves(c, 1e9).regime, FreezeRegime::AlwaysAdiabatic);
}

TEST(Freeze, VanishingBathCouplingFreezesImmediately) {
    auto m = plaquette({1, 1, 1, 1}, {1, 1, 1, 1});
    Bath b;
    b.eta = 0.0;
    FreezeOptions opt;
    opt.points = 5;
    auto c = freeze_curves(m, Schedule::default_surrogate(), b, opt);
    auto e = freeze_from_curves(c, 20.0);
    EXPECT_EQ(e.regime, FreezeRegime::AlwaysFrozen);
    EXPECT_DOUBLE_EQ(e.s_star, opt.s_min);
}

TEST(Freeze, PlaquetteMonotoneInAnnealTime) {
    auto m = plaquette({1, 1, 1, 1}, {1, 1, 1, 1});
    FreezeOptions opt;
    opt.points = 40;
    auto c = freeze_curves(m, Schedule::default_surrogate(), Bath{}, opt);
    EXPECT_LE(c.max_residual, 1e-8);
    double last = 0.0;
    for (double tf : {20.0, 200.0, 990.0}) {
        auto e = freeze_from_curves(c, tf);
        EXPECT_GE(e.s_star, last);
        last = e.s_star;
    }
}

TEST(Effective, ScaleIdentities) {
    auto s = Schedule::default_surrogate();
    auto p = anneal_to_effective(s, 1.0, 0.25, 1.0, CellMode::Truncated4, 0.35);
    EXPECT_DOUBLE_EQ(p.delta, 0.0);
    auto a = anneal_to_effective(s, 0.4, 0.25, 1.0, CellMode::Truncated4, 0.35);
    auto b = anneal_to_effective(s, 0.4, 0.5, 1.0, CellMode::Truncated4, 0.35);
    EXPECT_NEAR(b.temperature, a.temperature / 2, 1e-15);
    EXPECT_NEAR(b.delta, a.delta / 2, 1e-15);
    // E_s = 2 alpha alpha_s B for the truncated cell.
    EXPECT_NEAR(a.delta, s.A(0.4) / (0.5 * s.B(0.4)), 1e-14);
    EXPECT_THROW(anneal_to_effective(s, 0.0, 0.25, 1.0, CellMode::Truncated4, 0.35), std::invalid_argument);
}

}  // namespace
}  // namespace kzfreeze
