#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pbdw/estimator.hpp"

namespace pbdw {

/// Dictionary of U-normalized snapshots with its measurement matrix
/// C = W^T R_U V and atom Gram matrix V^T R_U V. The Gram block of a support
/// is all that candidate-space orthonormalization needs, which keeps the
/// online recovery free of any state-dimension work.
struct Dictionary {
    const InnerProductSpace* space = nullptr;
    BasisMatrix atoms;
    MatrixXd C;
    MatrixXd gram;
    std::vector<VectorXd> provenance;  // snapshot parameters, when known
    int skipped_snapshots = 0;

    int K() const { return atoms.cols(); }
};

Dictionary build_dictionary(const InnerProductSpace& space, const ObservationSpace& obs,
                            const MatrixXd& snapshots, int K,
                            const std::vector<VectorXd>* params = nullptr);

/// Uniqueness-promoting perturbation: atoms shifted inside W by i.i.d.
/// entries scaled to amplitude * max|C|, then re-normalized in U.
Dictionary perturb_dictionary(const Dictionary& dict, const ObservationSpace& obs,
                              double amplitude, std::uint64_t seed);

enum class PathTermination { alpha_floor, max_spaces, sparsity_cap, exact_fit, numerical_stall };

std::string to_string(PathTermination t);

/// Stopping caps for the homotopy. Zero means the default: sparsity_cap
/// floor(m/2), max_spaces ceil(K/10).
struct LarsCaps {
    double alpha_floor_rel = 1e-10;
    int max_spaces = 0;
    int sparsity_cap = 0;
};

/// Piecewise-affine solution path of
///   min_x 1/2 ||C x - w||^2 + alpha ||x||_1
/// emitted at the support-change breakpoints. solutions[j] is the minimizer
/// at breakpoints[j]; supports[j] is the active set on the segment just
/// below breakpoints[j]. Every emitted point is KKT-certified at tolerance
/// 1e-8 alpha_0.
struct LassoPath {
    std::vector<double> breakpoints;
    std::vector<VectorXd> solutions;
    std::vector<std::vector<int>> supports;
    PathTermination termination = PathTermination::alpha_floor;
    double alpha0 = 0.0;
};

LassoPath lars_path(const Dictionary& dict, const VectorXd& w, const LarsCaps& caps = {});

/// Homotopy on a bare measurement matrix (used by the library-free online
/// path and by tests).
LassoPath lars_core(const MatrixXd& C, const VectorXd& w, const LarsCaps& caps = {});

/// One candidate background space: atoms of `support` combined by `coeffs`
/// into a U-orthonormal basis.
struct LibrarySpace {
    std::vector<int> support;
    MatrixXd coeffs;
    BasisMatrix basis;
    double alpha = 0.0;  // largest breakpoint where this support appeared
};

struct Library {
    const Dictionary* dict = nullptr;
    std::vector<LibrarySpace> spaces;
};

/// Deduplicated supports along the path, in path order, each mapped to the
/// U-orthonormalized span of its atoms. Empty supports are omitted.
Library path_to_library(const Dictionary& dict, const LassoPath& path);

/// Candidate recoveries at coefficient level; everything here depends only
/// on C, the atom Gram and the sketched blocks, never on state vectors.
struct CandidateSolve {
    std::vector<int> support;
    double alpha = 0.0;
    bool skipped = false;     // ill-posed cross Gramian, excluded from selection
    double sigma_min = 0.0;
    double mu = 0.0;
    VectorXd eta;             // correction coords in W
    VectorXd x_atoms;         // background coords in the support atoms
    double surrogate = std::numeric_limits<double>::quiet_NaN();
};

struct DictSelection {
    LassoPath path;
    std::vector<CandidateSolve> candidates;
    int selected = -1;        // index into candidates; -1 means fallback
    bool fallback = false;
    int skipped_count = 0;
};

using SurrogateFn = std::function<double(const SparseCoeffs&)>;

DictSelection dict_select(const MatrixXd& C, const MatrixXd& gram, const SurrogateFn& surrogate,
                          const VectorXd& w, const LarsCaps& caps = {},
                          double sigma_threshold = kSigmaMinThreshold);
DictSelection dict_select(const MatrixXd& C, const MatrixXd& gram, const SketchedOffline& off,
                          const VectorXd& w, const LarsCaps& caps = {},
                          double sigma_threshold = kSigmaMinThreshold);

/// Full dictionary recovery report with materialized states per candidate.
struct DictRecoveryReport {
    DictSelection selection;
    std::vector<RecoveryResult> candidates;  // aligned with selection.candidates
    RecoveryResult result;                   // the selected (or fallback) recovery
};

DictRecoveryReport dict_recover_full(const Dictionary& dict, const ObservationSpace& obs,
                                     const SketchedOffline& off, const VectorXd& w,
                                     const LarsCaps& caps = {},
                                     double sigma_threshold = kSigmaMinThreshold);
DictRecoveryReport dict_recover_full(const Dictionary& dict, const ObservationSpace& obs,
                                     const SurrogateFn& surrogate, const VectorXd& w,
                                     const LarsCaps& caps = {},
                                     double sigma_threshold = kSigmaMinThreshold);

/// Homotopy -> library -> PBDW per candidate -> sketched surrogate ->
/// selection. All candidate spaces ill-posed falls back to the pure
/// observation recovery W w, flagged in the result.
RecoveryResult dict_recover(const Dictionary& dict, const ObservationSpace& obs,
                            const SketchedOffline& off, const VectorXd& w,
                            const LarsCaps& caps = {},
                            double sigma_threshold = kSigmaMinThreshold);

/// Exhaustive true-error minimizer over the library (benchmark mode).
RecoveryResult best_in_library(const Library& library, const ObservationSpace& obs,
                               const VectorXd& w, const VectorXd& truth,
                               double sigma_threshold = kSigmaMinThreshold);

/// Debug dump: one line per breakpoint with alpha, support size, BPDN
/// objective and KKT residual.
std::string path_debug_csv(const MatrixXd& C, const VectorXd& w, const LassoPath& path);

}  // namespace pbdw
