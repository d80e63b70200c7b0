#pragma once

#include <cstdint>
#include <vector>

#include "pbdw/linalg.hpp"

namespace pbdw {

enum class EmbeddingKind { gaussian, psrht, composed };

/// Composed means outer Gaussian (`rows` output rows) applied after an inner
/// P-SRHT with `inner_rows` rows. `input_dim` is the row count of the space
/// factor Q the embedding is composed with.
struct EmbeddingSpec {
    EmbeddingKind kind = EmbeddingKind::gaussian;
    int rows = 0;
    int inner_rows = 0;
    int input_dim = 0;
    std::uint64_t seed = 0;
};

/// Smallest Gaussian embedding row count guaranteeing an (eps, delta, d)
/// oblivious subspace embedding: ceil(7.87 eps^-2 (6.9 d + ln(1/delta))).
/// Valid for eps < 0.572.
int gaussian_embed_dim(double eps, double delta, int d);

/// Random map Theta = Omega Q from (U, <.,.>_U) to (R^k, l2). Applied to
/// primal vectors as Omega(Q v) and to dual vectors as Omega(Q R_U^{-1} r).
/// Realization is deterministic in (spec, space); the seed fully determines
/// every entry, so sketches are bit-reproducible.
class UEmbedding {
public:
    static UEmbedding realize(const EmbeddingSpec& spec, const InnerProductSpace& space);

    VectorXd sketch_primal(const VectorXd& v) const;
    VectorXd sketch_dual(const VectorXd& r) const;
    MatrixXd sketch_primal(const MatrixXd& cols) const;
    MatrixXd sketch_dual(const MatrixXd& cols) const;

    int rows() const { return spec_.rows; }
    const EmbeddingSpec& spec() const { return spec_; }
    const InnerProductSpace& space() const { return *space_; }

private:
    VectorXd apply_omega(const VectorXd& s) const;
    VectorXd apply_psrht(const VectorXd& s) const;

    EmbeddingSpec spec_;
    const InnerProductSpace* space_ = nullptr;
    MatrixXd gaussian_;            // gaussian part (outer part when composed)
    VectorXd signs_;               // P-SRHT sign flips on the padded space
    std::vector<int> sample_rows_; // P-SRHT subsampled rows
    int padded_len_ = 0;
    double psrht_scale_ = 0.0;
};

/// True iff every singular value sigma of the sketched basis satisfies
/// |sigma^2 - 1| <= eps; matrix form of the subspace embedding property for
/// the span of a U-orthonormal basis.
bool check_embedding(const UEmbedding& emb, const BasisMatrix& basis, double eps);

}  // namespace pbdw
