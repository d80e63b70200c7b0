#include "pbdw/sketch.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>

#include "pbdw/rng.hpp"

namespace pbdw {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

/// In-place Walsh-Hadamard transform, unnormalized (+-1 entries).
void fwht(VectorXd& y) {
    const int n = static_cast<int>(y.size());
    for (int h = 1; h < n; h *= 2) {
        for (int i = 0; i < n; i += 2 * h) {
            for (int j = i; j < i + h; ++j) {
                const double s = y(j);
                const double t = y(j + h);
                y(j) = s + t;
                y(j + h) = s - t;
            }
        }
    }
}

}  // namespace

int gaussian_embed_dim(double eps, double delta, int d) {
    if (!(eps > 0.0 && eps < 0.572))
        throw DomainError("gaussian_embed_dim: eps must lie in (0, 0.572)");
    if (!(delta > 0.0 && delta < 1.0))
        throw DomainError("gaussian_embed_dim: delta must lie in (0, 1)");
    if (d < 1) throw ArgumentError("gaussian_embed_dim: d must be positive");
    const double k = 7.87 / (eps * eps) * (6.9 * d + std::log(1.0 / delta));
    return static_cast<int>(std::ceil(k));
}

UEmbedding UEmbedding::realize(const EmbeddingSpec& spec, const InnerProductSpace& space) {
    if (spec.rows < 1) throw ArgumentError("embedding must have at least one row");
    if (spec.input_dim != space.factor().rows())
        throw ArgumentError("embedding input_dim must match the factor row count");

    UEmbedding e;
    e.spec_ = spec;
    e.space_ = &space;

    const bool needs_psrht =
        spec.kind == EmbeddingKind::psrht || spec.kind == EmbeddingKind::composed;
    const bool needs_gaussian =
        spec.kind == EmbeddingKind::gaussian || spec.kind == EmbeddingKind::composed;

    int gaussian_in = spec.input_dim;
    if (needs_psrht) {
        const int k_inner = spec.kind == EmbeddingKind::psrht ? spec.rows : spec.inner_rows;
        if (k_inner < 1) throw ArgumentError("psrht row count must be positive");
        e.padded_len_ = next_pow2(spec.input_dim);
        if (k_inner > e.padded_len_)
            throw ArgumentError("psrht cannot sample more rows than the padded length");
        CounterRng rng(spec.seed, 0x707372687400ull);  // stream tag for the psrht part
        e.signs_.resize(e.padded_len_);
        for (int i = 0; i < e.padded_len_; ++i) e.signs_(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
        // uniform sample without replacement: partial Fisher-Yates
        std::vector<int> idx(e.padded_len_);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < k_inner; ++i) {
            const int j = i + static_cast<int>(rng.below(e.padded_len_ - i));
            std::swap(idx[i], idx[j]);
        }
        e.sample_rows_.assign(idx.begin(), idx.begin() + k_inner);
        // 1/sqrt(k) on +-1 Hadamard output makes E[Theta^T Theta] = I
        e.psrht_scale_ = 1.0 / std::sqrt(static_cast<double>(k_inner));
        gaussian_in = k_inner;
    }
    if (needs_gaussian) {
        CounterRng rng(spec.seed, 0x67617573730000ull);  // stream tag for the gaussian part
        const double sd = 1.0 / std::sqrt(static_cast<double>(spec.rows));
        e.gaussian_.resize(spec.rows, gaussian_in);
        for (int j = 0; j < gaussian_in; ++j)
            for (int i = 0; i < spec.rows; ++i) e.gaussian_(i, j) = sd * rng.normal();
    }
    return e;
}

VectorXd UEmbedding::apply_psrht(const VectorXd& s) const {
    VectorXd padded = VectorXd::Zero(padded_len_);
    padded.head(s.size()) = signs_.head(s.size()).cwiseProduct(s);
    fwht(padded);
    VectorXd out(sample_rows_.size());
    for (std::size_t i = 0; i < sample_rows_.size(); ++i)
        out(static_cast<int>(i)) = psrht_scale_ * padded(sample_rows_[i]);
    return out;
}

VectorXd UEmbedding::apply_omega(const VectorXd& s) const {
    switch (spec_.kind) {
        case EmbeddingKind::gaussian:
            return gaussian_ * s;
        case EmbeddingKind::psrht:
            return apply_psrht(s);
        case EmbeddingKind::composed:
            return gaussian_ * apply_psrht(s);
    }
    throw ArgumentError("unknown embedding kind");
}

VectorXd UEmbedding::sketch_primal(const VectorXd& v) const {
    return apply_omega(space_->apply_factor(v));
}

VectorXd UEmbedding::sketch_dual(const VectorXd& r) const {
    return apply_omega(space_->dual_factor_apply(r));
}

MatrixXd UEmbedding::sketch_primal(const MatrixXd& cols) const {
    MatrixXd out(spec_.rows, cols.cols());
    for (int j = 0; j < cols.cols(); ++j) out.col(j) = sketch_primal(VectorXd(cols.col(j)));
    return out;
}

MatrixXd UEmbedding::sketch_dual(const MatrixXd& cols) const {
    MatrixXd out(spec_.rows, cols.cols());
    for (int j = 0; j < cols.cols(); ++j) out.col(j) = sketch_dual(VectorXd(cols.col(j)));
    return out;
}

bool check_embedding(const UEmbedding& emb, const BasisMatrix& basis, double eps) {
    if (!basis.u_orthonormal)
        throw ArgumentError("check_embedding: basis must be U-orthonormal");
    if (basis.cols() == 0) return true;
    const MatrixXd sketched = emb.sketch_primal(basis.columns);
    // sigma^2 of the sketched basis are the eigenvalues of its Gram matrix;
    // rank deficiency surfaces as a zero eigenvalue
    const MatrixXd gram = sketched.transpose() * sketched;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success)
        throw NumericalError("check_embedding: eigendecomposition failed");
    for (int i = 0; i < eig.eigenvalues().size(); ++i)
        if (std::abs(eig.eigenvalues()(i) - 1.0) > eps) return false;
    return true;
}

}  // namespace pbdw
