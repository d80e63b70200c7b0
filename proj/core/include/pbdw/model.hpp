#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pbdw/linalg.hpp"

namespace pbdw {

enum class SamplingLaw { uniform, log_uniform };

/// Closed box of admissible parameters with a per-coordinate sampling law.
struct ParameterBox {
    struct Interval {
        double lo, hi;
    };
    std::vector<Interval> intervals;
    std::vector<SamplingLaw> laws;

    int dim() const { return static_cast<int>(intervals.size()); }
    void validate() const;
    bool contains(const VectorXd& xi, double slack = 1e-14) const;
    VectorXd center() const;
    VectorXd lower() const;
    VectorXd upper() const;
    VectorXd clamp(const VectorXd& xi) const;
};

/// Residual of a fixed state in separated form: r(v, xi) = G theta(xi) - g,
/// G columns ordered operator terms then (negated) rhs terms.
struct SeparatedResidual {
    MatrixXd G;
    VectorXd g;
};

/// Affine parameter-dependent operator equation B(xi) u = f(xi) with
///   B(xi) = B0 + sum_q theta_B_q(xi) B_q,   f(xi) = f0 + sum_q theta_f_q(xi) f_q.
/// The space reference must outlive the model. Immutable after construction;
/// solves are safe to run concurrently.
class AffineModel {
public:
    using CoeffMap = std::function<VectorXd(const VectorXd&)>;

    AffineModel(const InnerProductSpace* space, std::vector<SpMat> op_terms,
                std::vector<VectorXd> rhs_terms, ParameterBox box, CoeffMap theta_op,
                CoeffMap theta_rhs, bool theta_is_identity);

    /// Terms with theta_q(xi) = xi_q for the operator part and constant rhs.
    static AffineModel with_identity_theta(const InnerProductSpace* space,
                                           std::vector<SpMat> op_terms,
                                           std::vector<VectorXd> rhs_terms, ParameterBox box);

    const InnerProductSpace& space() const { return *space_; }
    int state_dim() const { return space_->dim(); }
    int num_op_terms() const { return static_cast<int>(op_terms_.size()) - 1; }   // m_B
    int num_rhs_terms() const { return static_cast<int>(rhs_terms_.size()) - 1; } // m_f
    const ParameterBox& box() const { return box_; }
    bool theta_is_identity() const { return theta_identity_; }
    const std::vector<SpMat>& op_terms() const { return op_terms_; }
    const std::vector<VectorXd>& rhs_terms() const { return rhs_terms_; }

    VectorXd theta_op(const VectorXd& xi) const;
    VectorXd theta_rhs(const VectorXd& xi) const;
    /// Operator coefficients stacked over rhs coefficients, matching the
    /// column order of SeparatedResidual::G.
    VectorXd theta_stacked(const VectorXd& xi) const;

    std::pair<SpMat, VectorXd> assemble(const VectorXd& xi) const;
    VectorXd solve_state(const VectorXd& xi) const;
    SeparatedResidual separated(const VectorXd& v) const;
    double residual_norm(const VectorXd& v, const VectorXd& xi) const;

private:
    const InnerProductSpace* space_;
    std::vector<SpMat> op_terms_;
    std::vector<VectorXd> rhs_terms_;
    ParameterBox box_;
    CoeffMap theta_op_, theta_rhs_;
    bool theta_identity_;
};

}  // namespace pbdw
