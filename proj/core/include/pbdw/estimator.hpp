#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "pbdw/model.hpp"
#include "pbdw/sketch.hpp"

namespace pbdw {

/// Observation space: U-orthonormal Riesz representers of the sensor
/// functionals. Observations are coordinates of P_W u in this basis.
struct ObservationSpace {
    const InnerProductSpace* space = nullptr;
    MatrixXd functionals;  // raw sensor functionals, one per column
    BasisMatrix W;

    int m() const { return W.cols(); }
    VectorXd observe(const VectorXd& u) const {
        return W.columns.transpose() * (space->gram() * u);
    }
};

/// Riesz representers + orthonormalization. Dependent functionals raise a
/// RankError naming the dropped indices.
ObservationSpace build_observation(const InnerProductSpace& space, const MatrixXd& functionals);

/// One recovered state: background coefficients in the chosen basis, the
/// observation-space correction, and selection diagnostics.
struct RecoveryResult {
    VectorXd background_coeffs;
    VectorXd correction_coeffs;
    VectorXd state;
    std::vector<int> support;
    double surrogate_value = std::numeric_limits<double>::quiet_NaN();
    double mu_of_space = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    bool fallback = false;
};

/// Default ill-posedness threshold on sigma_min of the cross Gramian.
inline constexpr double kSigmaMinThreshold = 1e-12;

/// Coefficient-level PBDW solve for a given cross Gramian: minimum-norm
/// least squares via SVD, correction takes up the observation mismatch.
struct PbdwSolve {
    VectorXd background;  // coordinates in the background basis
    VectorXd correction;  // coordinates in W
    double sigma_min;     // 0 when the background is empty is encoded as 1
};
PbdwSolve pbdw_solve(const MatrixXd& cross_gramian, const VectorXd& w,
                     double sigma_threshold = kSigmaMinThreshold);

/// Full PBDW recovery against an explicit background basis.
RecoveryResult pbdw_recover(const ObservationSpace& obs, const BasisMatrix& V, const VectorXd& w,
                            double sigma_threshold = kSigmaMinThreshold);

/// (beta, mu) = (sigma_min(C), 1/sigma_min(C)); mu is +inf when beta <= 1e-14.
std::pair<double, double> stability_constants(const ObservationSpace& obs, const BasisMatrix& V);

struct BoxLsResult {
    VectorXd theta;
    double value = 0.0;       // ||A theta - b||_2 at the solution
    bool converged = false;
    int iterations = 0;
    double pg_norm = 0.0;     // projected gradient norm at exit
};

/// min_{theta in box} ||A theta - b||_2 by accelerated projected gradient
/// with periodic and adaptive restart. Deterministic: starts at the box
/// center, step from a power-iteration bound on ||A||_2^2. Stops once the
/// projected gradient norm falls below tol_rel (1 + ||A^T b||); the default
/// sits well under the 1e-9 first-order guarantee so that surrogate values
/// of near-manifold states resolve to zero. Hitting the iteration cap
/// leaves converged = false with the achieved tolerance.
BoxLsResult box_ls_solve(const MatrixXd& A, const VectorXd& b, const ParameterBox& box,
                         double tol_rel = 1e-12, int max_iters = 100000);

struct SurrogateResult {
    double value = 0.0;
    VectorXd xi;
    bool converged = true;
};

/// S(v, P) = min_xi ||B(xi) v - f(xi)||_{U'}: separated residual columns are
/// mapped through the factor solve, then the box least squares runs in the
/// Euclidean metric of the transformed system.
SurrogateResult surrogate_exact(const AffineModel& model, const VectorXd& v);

/// Offline-sketched affine blocks for U = (W | V_dict): one k x (m + K)
/// block per operator term and one sketched vector per rhs term.
struct SketchedOffline {
    std::vector<MatrixXd> op_blocks;  // index 0 is the constant term
    MatrixXd rhs_block;               // k x (m_f + 1), column 0 constant term
    int m = 0;
    int K = 0;
    ParameterBox box;
    EmbeddingSpec embedding;

    int rows() const { return static_cast<int>(rhs_block.rows()); }
    int num_op_terms() const { return static_cast<int>(op_blocks.size()) - 1; }
    int num_rhs_terms() const { return static_cast<int>(rhs_block.cols()) - 1; }

    void save(const std::filesystem::path& dir) const;
    static SketchedOffline load(const std::filesystem::path& dir);
};

SketchedOffline sketched_offline(const AffineModel& model, const ObservationSpace& obs,
                                 const BasisMatrix& dict_atoms, const UEmbedding& emb);

/// Sparse coefficient vector over (W | V_dict): dense W block plus
/// (index, value) pairs into the dictionary block.
struct SparseCoeffs {
    VectorXd w_block;
    std::vector<std::pair<int, double>> dict_entries;
};

/// S^Theta for the state U a: assembles the k x (m_B + m_f) system from the
/// precomputed blocks, touching only the W block and the support columns,
/// then minimizes over the box. Cost independent of the state dimension.
SurrogateResult surrogate_sketched(const SketchedOffline& off, const SparseCoeffs& a);
SurrogateResult surrogate_sketched(const SketchedOffline& off, const VectorXd& a_full);

/// Index of the smallest surrogate value; ties break to the smallest index.
std::size_t select_space(const std::vector<double>& surrogate_values);

}  // namespace pbdw
