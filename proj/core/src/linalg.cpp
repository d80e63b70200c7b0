#include "pbdw/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace pbdw {

namespace {

double sparse_fro(const SpMat& a) {
    double s = 0.0;
    for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it) s += it.value() * it.value();
    return std::sqrt(s);
}

}  // namespace

void InnerProductSpace::init(SpMat gram) {
    if (gram.rows() != gram.cols() || gram.rows() == 0)
        throw ArgumentError("gram matrix must be square and nonempty");
    gram_ = std::move(gram);
    gram_.makeCompressed();

    SpMat gt = SpMat(gram_.transpose());
    const double asym = sparse_fro(SpMat(gram_ - gt));
    const double scale = sparse_fro(gram_);
    if (asym > 1e-12 * scale)
        throw NumericalError("gram matrix is not symmetric (relative defect " +
                             std::to_string(asym / scale) + ")");

    llt_ = std::make_unique<Eigen::SimplicialLLT<SpMat>>();
    llt_->compute(gram_);
    if (llt_->info() != Eigen::Success)
        throw NumericalError("sparse Cholesky of the gram matrix failed (not SPD?)");
}

InnerProductSpace InnerProductSpace::from_gram(SpMat gram) {
    InnerProductSpace s;
    s.init(std::move(gram));
    // R_U = P^T L L^T P, so Q := L^T P satisfies Q^T Q = R_U.
    SpMat lt = SpMat(s.llt_->matrixL()).transpose();
    s.factor_ = lt * s.llt_->permutationP();
    s.factor_.makeCompressed();
    s.kind_ = FactorKind::cholesky;
    return s;
}

InnerProductSpace InnerProductSpace::from_gram_with_factor(SpMat gram, SpMat factor) {
    InnerProductSpace s;
    s.init(std::move(gram));
    if (factor.cols() != s.gram_.rows())
        throw ArgumentError("custom factor must have N columns");
    s.factor_ = std::move(factor);
    s.factor_.makeCompressed();
    s.kind_ = FactorKind::custom;
    const double defect = s.factor_defect();
    if (defect > 1e-10)
        throw NumericalError("custom factor fails Q^T Q = R_U (relative defect " +
                             std::to_string(defect) + ")");
    return s;
}

double InnerProductSpace::factor_defect() const {
    SpMat qtq = SpMat(factor_.transpose()) * factor_;
    return sparse_fro(SpMat(qtq - gram_)) / sparse_fro(gram_);
}

double InnerProductSpace::inner(const VectorXd& a, const VectorXd& b) const {
    if (a.size() != dim() || b.size() != dim())
        throw ArgumentError("u_inner: vector length does not match space dimension");
    return a.dot(gram_ * b);
}

double InnerProductSpace::norm(const VectorXd& v) const {
    const double q = inner(v, v);
    return q > 0.0 ? std::sqrt(q) : 0.0;
}

double InnerProductSpace::dual_norm(const VectorXd& r) const {
    if (r.size() != dim())
        throw ArgumentError("dual_norm: vector length does not match space dimension");
    // ||r||_{U'} = ||L^{-1} P r||_2.
    VectorXd y = llt_->permutationP() * r;
    llt_->matrixL().solveInPlace(y);
    return y.norm();
}

VectorXd InnerProductSpace::riesz(const VectorXd& ell) const {
    if (ell.size() != dim())
        throw ArgumentError("riesz: vector length does not match space dimension");
    return llt_->solve(ell);
}

VectorXd InnerProductSpace::apply_factor(const VectorXd& v) const {
    if (v.size() != dim())
        throw ArgumentError("apply_factor: vector length does not match space dimension");
    return factor_ * v;
}

VectorXd InnerProductSpace::dual_factor_apply(const VectorXd& r) const {
    if (r.size() != dim())
        throw ArgumentError("dual_factor_apply: vector length mismatch");
    if (kind_ == FactorKind::cholesky) {
        // Q R_U^{-1} r = L^T P P^T L^{-T} L^{-1} P r = L^{-1} (P r).
        VectorXd y = llt_->permutationP() * r;
        llt_->matrixL().solveInPlace(y);
        return y;
    }
    return factor_ * llt_->solve(r);
}

MatrixXd InnerProductSpace::dual_factor_apply(const MatrixXd& cols) const {
    MatrixXd out(factor_.rows(), cols.cols());
    for (int j = 0; j < cols.cols(); ++j) out.col(j) = dual_factor_apply(VectorXd(cols.col(j)));
    return out;
}

OrthoResult u_orthonormalize(const InnerProductSpace& space, const BasisMatrix& basis,
                             double rank_tol) {
    const int n = space.dim();
    const int p = basis.cols();
    if (p > 0 && basis.rows() != n)
        throw ArgumentError("u_orthonormalize: basis rows do not match space dimension");

    OrthoResult res;
    res.basis.columns.resize(n, p);
    res.coeffs.resize(p, p);
    MatrixXd gram_q(n, p);  // R_U * kept columns, for fast inner products
    int kept = 0;

    for (int j = 0; j < p; ++j) {
        VectorXd v = basis.columns.col(j);
        VectorXd coef = VectorXd::Zero(p);
        coef(j) = 1.0;
        const double orig = space.norm(v);

        // two MGS passes; a single pass loses orthogonality on ill-conditioned input
        for (int pass = 0; pass < 2; ++pass) {
            for (int i = 0; i < kept; ++i) {
                const double r = gram_q.col(i).dot(v);
                v -= r * res.basis.columns.col(i);
                coef -= r * res.coeffs.col(i);
            }
        }
        const double nrm = space.norm(v);
        if (orig <= 0.0 || nrm <= rank_tol * orig) {
            res.dropped.push_back(j);
            continue;
        }
        v /= nrm;
        coef /= nrm;
        res.basis.columns.col(kept) = v;
        res.coeffs.col(kept) = coef;
        gram_q.col(kept) = space.gram() * v;
        ++kept;
    }

    res.basis.columns.conservativeResize(n, kept);
    res.coeffs.conservativeResize(p, kept);
    res.basis.u_orthonormal = true;
    return res;
}

PodResult pod(const InnerProductSpace& space, const BasisMatrix& snapshots, int n_max,
              double rank_tol) {
    const int p = snapshots.cols();
    if (n_max > p) throw ArgumentError("pod: n_max exceeds the number of snapshots");
    if (n_max < 0) throw ArgumentError("pod: n_max must be nonnegative");

    PodResult out;
    if (p == 0 || n_max == 0) {
        out.modes.columns.resize(space.dim(), 0);
        out.modes.u_orthonormal = true;
        out.singular_values.resize(0);
        return out;
    }

    const MatrixXd& s = snapshots.columns;
    MatrixXd gram = s.transpose() * (space.gram() * s);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw NumericalError("pod: eigendecomposition failed");

    const VectorXd& vals = eig.eigenvalues();  // ascending
    const double lam_max = std::max(vals(p - 1), 0.0);
    int rank = 0;
    for (int i = 0; i < p; ++i)
        if (vals(i) > rank_tol * lam_max && vals(i) > 0.0) ++rank;
    const int n = std::min(n_max, rank);

    MatrixXd modes(space.dim(), n);
    VectorXd sv(n);
    for (int i = 0; i < n; ++i) {
        const int src = p - 1 - i;
        const double sigma = std::sqrt(vals(src));
        sv(i) = sigma;
        modes.col(i) = s * (eig.eigenvectors().col(src) / sigma);
    }

    // one MGS pass restores orthonormality lost near the truncation level;
    // prefix spans are unchanged so best-subspace nesting is preserved
    BasisMatrix raw{modes, false};
    OrthoResult ortho = u_orthonormalize(space, raw, rank_tol);
    out.modes = std::move(ortho.basis);
    out.singular_values = sv.head(out.modes.cols());
    return out;
}

VectorXd project(const InnerProductSpace& space, const BasisMatrix& basis, const VectorXd& u) {
    if (basis.cols() == 0) return VectorXd::Zero(space.dim());
    if (!basis.u_orthonormal) throw ArgumentError("project: basis must be U-orthonormal");
    return basis.columns * (basis.columns.transpose() * (space.gram() * u));
}

MatrixXd gram_orthonormal_coeffs(const MatrixXd& gram_block, double rank_tol) {
    const int p = static_cast<int>(gram_block.rows());
    if (gram_block.cols() != p) throw ArgumentError("gram_orthonormal_coeffs: block not square");
    if (p == 0) return MatrixXd(0, 0);

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram_block);
    if (eig.info() != Eigen::Success)
        throw NumericalError("gram_orthonormal_coeffs: eigendecomposition failed");
    const VectorXd& vals = eig.eigenvalues();
    const double lam_max = std::max(vals(p - 1), 0.0);

    int rank = 0;
    for (int i = 0; i < p; ++i)
        if (vals(i) > rank_tol * lam_max && vals(i) > 0.0) ++rank;

    MatrixXd coeffs(p, rank);
    for (int i = 0; i < rank; ++i) {
        const int src = p - 1 - i;
        coeffs.col(i) = eig.eigenvectors().col(src) / std::sqrt(vals(src));
    }
    return coeffs;
}

}  // namespace pbdw
