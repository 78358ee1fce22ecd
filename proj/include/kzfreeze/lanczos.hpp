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

/// Thick-restart Lanczos for a few extremal eigenpairs of a large real
/// symmetric operator.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kzfreeze/errors.hpp"

namespace kzfreeze {

struct LinearOperator {
    Eigen::Index dim = 0;
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)> apply;  // y = A x
};

struct LanczosOptions {
    int basis_size = 30;       // Krylov vectors held before a restart
    int max_restarts = 400;
    double tolerance = 1e-10;  // residual / spectral scale
    std::uint64_t seed = 1;
    // Optional starting vectors (e.g. eigenvectors from a nearby parameter).
    std::vector<Eigen::VectorXd> start;
};

struct EigenPairs {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // unit columns
    Eigen::VectorXd residuals;  // ||A v - l v||, recomputed explicitly
    double spectral_scale = 0.0;
    int matvecs = 0;
    int restarts = 0;
};

namespace detail {

// Two passes of classical Gram-Schmidt against the first `count` columns.
inline Eigen::VectorXd orthogonalize(const Eigen::MatrixXd& v, Eigen::Index count, Eigen::VectorXd& w) {
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(count);
    if (count == 0) return coeffs;
    for (int pass = 0; pass < 2; ++pass) {
        Eigen::VectorXd c = v.leftCols(count).transpose() * w;
        w.noalias() -= v.leftCols(count) * c;
        coeffs += c;
    }
    return coeffs;
}

}  // namespace detail

/// The k algebraically smallest eigenpairs of a symmetric operator.
///
/// Lanczos with full reorthogonalization; the projected matrix is assembled
/// from the Gram-Schmidt coefficients, so after a thick restart (keep the
/// best Ritz vectors plus the continuation vector) it stays exact.
inline EigenPairs lowest_eigenpairs(const LinearOperator& op, int k, const LanczosOptions& opt = {}) {
    const Eigen::Index n = op.dim;
    if (k <= 0 || k > n) throw std::invalid_argument("invalid number of eigenpairs");
    const int m = int(std::min<Eigen::Index>(std::max(opt.basis_size, 2 * k + 4), n));
    const int keep_max = std::max(k, std::min(m - 2, std::max(k + 4, m / 2)));

    Eigen::MatrixXd v(n, m + 1);
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd w(n), x(n);
    EigenPairs out;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss;
    auto random_unit = [&](Eigen::Index against) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            for (Eigen::Index i = 0; i < n; ++i) w[i] = gauss(rng);
            detail::orthogonalize(v, against, w);
            double nrm = w.norm();
            if (nrm > 1e-8) return Eigen::VectorXd(w / nrm);
        }
        throw NumericalError("could not extend the Krylov basis");
    };

    // Warm starts are summed into one vector; their span is reached within a
    // few steps anyway.
    Eigen::VectorXd start = Eigen::VectorXd::Zero(n);
    for (const auto& s : opt.start)
        if (s.size() == n) start += s;
    if (start.norm() > 1e-12) {
        v.col(0) = start.normalized();
    } else {
        v.col(0) = random_unit(0);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    Eigen::Index j = 0;
    double beta = 0.0;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        out.restarts = restart;
        for (; j < m; ++j) {
            x = v.col(j);
            op.apply(x, w);
            ++out.matvecs;
            Eigen::VectorXd c = detail::orthogonalize(v, j + 1, w);
            for (Eigen::Index i = 0; i <= j; ++i) t(i, j) = t(j, i) = c[i];
            beta = w.norm();
            const double scale = std::max(1.0, t.topLeftCorner(j + 1, j + 1).cwiseAbs().maxCoeff());
            if (beta < 1e-13 * scale) {
                v.col(j + 1) = random_unit(j + 1);  // invariant subspace found
                beta = 0.0;
            } else {
                v.col(j + 1) = w / beta;
            }
        }
        es.compute(t);
        const Eigen::VectorXd theta = es.eigenvalues();
        const Eigen::MatrixXd& u = es.eigenvectors();
        out.spectral_scale = std::max(out.spectral_scale, theta.cwiseAbs().maxCoeff());
        const double scale = std::max(out.spectral_scale, 1e-300);
        bool converged = true;
        for (int i = 0; i < k; ++i)
            if (std::abs(beta * u(m - 1, i)) > opt.tolerance * scale) converged = false;

        if (converged || restart == opt.max_restarts) {
            out.values = theta.head(k);
            out.vectors = v.leftCols(m) * u.leftCols(k);
            out.residuals.resize(k);
            for (int i = 0; i < k; ++i) {
                out.vectors.col(i).normalize();
                x = out.vectors.col(i);
                op.apply(x, w);
                ++out.matvecs;
                out.residuals[i] = (w - out.values[i] * x).norm();
            }
            if (!converged)
                throw NumericalError("Lanczos did not converge; residual " + std::to_string(out.residuals.maxCoeff()) +
                                     " after " + std::to_string(out.matvecs) + " products");
            return out;
        }
        Eigen::MatrixXd y = v.leftCols(m) * u.leftCols(keep_max);
        v.leftCols(keep_max) = y;
        v.col(keep_max) = v.col(m);
        t.setZero();
        for (int i = 0; i < keep_max; ++i) t(i, i) = theta[i];
        j = keep_max;
    }
    throw NumericalError("Lanczos iteration budget exhausted");
}

}  // namespace kzfreeze
