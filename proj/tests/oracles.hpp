#pragma once

// Test-only oracles: independent reference computations (dense solves,
// proximal-gradient BPDN, grid search, closed forms) used to freeze or
// cross-check expected values. Nothing here calls the code paths it checks.

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "pbdw/linalg.hpp"
#include "pbdw/model.hpp"
#include "pbdw/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using pbdw::CounterRng;

inline MatrixXd randn(CounterRng& rng, int rows, int cols) {
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

inline VectorXd randn_vec(CounterRng& rng, int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline pbdw::InnerProductSpace random_spd_space(int n, std::uint64_t seed,
                                                double diag_shift = 0.5) {
    CounterRng rng(seed);
    const MatrixXd a = randn(rng, n, n);
    const MatrixXd g = a.transpose() * a / n + diag_shift * MatrixXd::Identity(n, n);
    return pbdw::InnerProductSpace::from_gram(g.sparseView());
}

inline pbdw::InnerProductSpace identity_space(int n) {
    pbdw::SpMat eye(n, n);
    eye.setIdentity();
    return pbdw::InnerProductSpace::from_gram(eye);
}

/// Dense symmetric solve, independent of the sparse Cholesky path.
inline VectorXd dense_spd_solve(const MatrixXd& a, const VectorXd& b) {
    return a.ldlt().solve(b);
}

inline double bpdn_objective(const MatrixXd& c, const VectorXd& w, const VectorXd& x,
                             double alpha) {
    return 0.5 * (c * x - w).squaredNorm() + alpha * x.lpNorm<1>();
}

inline VectorXd soft_threshold(const VectorXd& z, double alpha) {
    VectorXd out(z.size());
    for (int i = 0; i < z.size(); ++i) {
        if (z(i) > alpha)
            out(i) = z(i) - alpha;
        else if (z(i) < -alpha)
            out(i) = z(i) + alpha;
        else
            out(i) = 0.0;
    }
    return out;
}

/// Accelerated proximal-gradient BPDN solver (independent oracle for the
/// homotopy path). Runs until the objective stops improving at `tol`
/// relative precision.
inline VectorXd fista_bpdn(const MatrixXd& c, const VectorXd& w, double alpha,
                           double tol = 1e-12, int max_iters = 200000) {
    const int k = static_cast<int>(c.cols());
    const double lip = Eigen::JacobiSVD<MatrixXd>(c).singularValues()(0);
    const double step = 1.0 / (1.01 * lip * lip);

    VectorXd x = VectorXd::Zero(k);
    VectorXd y = x;
    double t = 1.0;
    double f_prev = bpdn_objective(c, w, x, alpha);
    int flat = 0;
    for (int it = 0; it < max_iters; ++it) {
        const VectorXd g = c.transpose() * (c * y - w);
        VectorXd x_next = soft_threshold(y - step * g, alpha * step);
        const double f_next = bpdn_objective(c, w, x_next, alpha);
        if (f_next > f_prev) {  // restart momentum
            t = 1.0;
            y = x;
            f_prev = bpdn_objective(c, w, x, alpha);
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x_next + ((t - 1.0) / t_next) * (x_next - x);
        t = t_next;
        x = x_next;
        if (f_prev - f_next <= tol * std::max(1.0, f_next)) {
            if (++flat >= 10) break;
        } else {
            flat = 0;
        }
        f_prev = f_next;
    }
    return x;
}

/// Deterministic Latin hypercube sample of the box.
inline std::vector<VectorXd> latin_hypercube(const pbdw::ParameterBox& box, int count,
                                             std::uint64_t seed) {
    CounterRng rng(seed);
    const int d = box.dim();
    std::vector<std::vector<int>> perms(d);
    for (int q = 0; q < d; ++q) {
        perms[q].resize(count);
        for (int i = 0; i < count; ++i) perms[q][i] = i;
        for (int i = count - 1; i > 0; --i)
            std::swap(perms[q][i], perms[q][rng.below(static_cast<std::uint64_t>(i + 1))]);
    }
    std::vector<VectorXd> out;
    for (int i = 0; i < count; ++i) {
        VectorXd xi(d);
        for (int q = 0; q < d; ++q) {
            const double u = (perms[q][i] + rng.uniform()) / count;
            xi(q) = box.intervals[q].lo + u * (box.intervals[q].hi - box.intervals[q].lo);
        }
        out.push_back(std::move(xi));
    }
    return out;
}

/// Small dense affine model with identity coefficients for estimator tests.
struct ToyModel {
    std::unique_ptr<pbdw::InnerProductSpace> space;
    std::unique_ptr<pbdw::AffineModel> model;
};

inline ToyModel toy_model(int n, int m_b, int m_f, const pbdw::ParameterBox& box,
                          std::uint64_t seed, bool zero_const_rhs = false) {
    ToyModel toy;
    toy.space = std::make_unique<pbdw::InnerProductSpace>(random_spd_space(n, seed));
    CounterRng rng(pbdw::CounterRng::mix(seed, 1));

    std::vector<pbdw::SpMat> op_terms;
    // constant term kept dominant so B(xi) stays invertible across the box
    const MatrixXd base = randn(rng, n, n);
    MatrixXd b0 = base.transpose() * base / n + 2.0 * MatrixXd::Identity(n, n);
    op_terms.push_back(b0.sparseView());
    for (int q = 0; q < m_b; ++q) {
        MatrixXd t = randn(rng, n, n) / (4.0 * std::sqrt(static_cast<double>(n)));
        op_terms.push_back(t.sparseView());
    }
    std::vector<VectorXd> rhs_terms;
    rhs_terms.push_back(zero_const_rhs ? VectorXd::Zero(n).eval() : randn_vec(rng, n));
    for (int q = 0; q < m_f; ++q) rhs_terms.push_back(randn_vec(rng, n));

    toy.model = std::make_unique<pbdw::AffineModel>(pbdw::AffineModel::with_identity_theta(
        toy.space.get(), std::move(op_terms), std::move(rhs_terms), box));
    return toy;
}

inline pbdw::ParameterBox symmetric_box(int d, double lo = -1.0, double hi = 1.0) {
    pbdw::ParameterBox box;
    box.intervals.assign(d, {lo, hi});
    box.laws.assign(d, pbdw::SamplingLaw::uniform);
    return box;
}

}  // namespace oracle
