#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

#include "pbdw/errors.hpp"

namespace pbdw {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FactorKind { cholesky, custom };

/// Finite dimensional inner product space: SPD Gram matrix R_U together with
/// a rectangular factor Q satisfying Q^T Q = R_U. All U-norms, dual norms,
/// Riesz maps and factor applications are served from here. Immutable after
/// construction; safe for concurrent read-only use.
class InnerProductSpace {
public:
    /// Factor obtained by sparse Cholesky of the Gram matrix.
    static InnerProductSpace from_gram(SpMat gram);

    /// Caller-supplied rectangular factor (s x N). The factor is verified
    /// against Q^T Q = R_U at relative tolerance 1e-10 and rejected otherwise.
    static InnerProductSpace from_gram_with_factor(SpMat gram, SpMat factor);

    int dim() const { return static_cast<int>(gram_.rows()); }
    const SpMat& gram() const { return gram_; }
    const SpMat& factor() const { return factor_; }
    FactorKind factor_kind() const { return kind_; }

    /// <a, b>_U = a^T R_U b.
    double inner(const VectorXd& a, const VectorXd& b) const;
    double norm(const VectorXd& v) const;

    /// ||r||_{U'} = sqrt(r^T R_U^{-1} r), via one triangular solve.
    double dual_norm(const VectorXd& r) const;

    /// Riesz representer: x with R_U x = ell.
    VectorXd riesz(const VectorXd& ell) const;

    /// Q v.
    VectorXd apply_factor(const VectorXd& v) const;

    /// Q R_U^{-1} r. With the Cholesky factor this is a single triangular
    /// solve and satisfies ||Q R_U^{-1} r||_2 = ||r||_{U'} exactly.
    VectorXd dual_factor_apply(const VectorXd& r) const;
    MatrixXd dual_factor_apply(const MatrixXd& cols) const;

    /// Relative Frobenius defect ||Q^T Q - R_U||_F / ||R_U||_F.
    double factor_defect() const;

    InnerProductSpace(const InnerProductSpace&) = delete;
    InnerProductSpace& operator=(const InnerProductSpace&) = delete;
    InnerProductSpace(InnerProductSpace&&) = default;
    InnerProductSpace& operator=(InnerProductSpace&&) = default;

private:
    InnerProductSpace() = default;
    void init(SpMat gram);

    SpMat gram_;
    SpMat factor_;
    FactorKind kind_ = FactorKind::cholesky;
    std::unique_ptr<Eigen::SimplicialLLT<SpMat>> llt_;
};

/// A set of states stored columnwise. `u_orthonormal` marks bases with
/// V^T R_U V = I within 1e-10 sqrt(p).
struct BasisMatrix {
    MatrixXd columns;
    bool u_orthonormal = false;

    int cols() const { return static_cast<int>(columns.cols()); }
    int rows() const { return static_cast<int>(columns.rows()); }
};

struct OrthoResult {
    BasisMatrix basis;
    /// basis.columns == input.columns * coeffs (dropped columns excluded).
    MatrixXd coeffs;
    std::vector<int> dropped;
};

/// Modified Gram-Schmidt in the U inner product with a second
/// re-orthogonalization pass. Columns whose projection residual falls below
/// rank_tol times their original U-norm are dropped and reported.
OrthoResult u_orthonormalize(const InnerProductSpace& space, const BasisMatrix& basis,
                             double rank_tol = 1e-12);

struct PodResult {
    BasisMatrix modes;
    VectorXd singular_values;
};

/// POD by the method of snapshots: eigendecomposition of the U-Gram matrix
/// of the snapshot set, eigenvalues truncated at rank_tol relative, at most
/// n_max modes returned in nonincreasing singular value order.
PodResult pod(const InnerProductSpace& space, const BasisMatrix& snapshots, int n_max,
              double rank_tol = 1e-12);

/// P_V u = V (V^T R_U u) for a U-orthonormal basis V.
VectorXd project(const InnerProductSpace& space, const BasisMatrix& basis, const VectorXd& u);

/// Coefficient matrix M such that A*M is U-orthonormal, computed from the
/// U-Gram G = A^T R_U A of the columns by symmetric orthogonalization
/// (eigendecomposition with relative eigenvalue floor). Directions below the
/// floor are discarded. Needs only G, never the columns themselves.
MatrixXd gram_orthonormal_coeffs(const MatrixXd& gram_block, double rank_tol = 1e-12);

}  // namespace pbdw
