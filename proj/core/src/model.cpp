#include "pbdw/model.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <sstream>

namespace pbdw {

void ParameterBox::validate() const {
    if (intervals.empty()) throw ArgumentError("parameter box must have at least one interval");
    if (laws.size() != intervals.size())
        throw ArgumentError("parameter box needs one sampling law per interval");
    for (std::size_t q = 0; q < intervals.size(); ++q) {
        if (!(intervals[q].lo < intervals[q].hi))
            throw ArgumentError("parameter box interval must satisfy lo < hi");
        if (laws[q] == SamplingLaw::log_uniform && !(intervals[q].lo > 0.0))
            throw ArgumentError("log-uniform sampling requires a positive lower bound");
    }
}

bool ParameterBox::contains(const VectorXd& xi, double slack) const {
    if (xi.size() != dim()) return false;
    for (int q = 0; q < dim(); ++q) {
        const double span = intervals[q].hi - intervals[q].lo;
        if (xi(q) < intervals[q].lo - slack * span || xi(q) > intervals[q].hi + slack * span)
            return false;
    }
    return true;
}

VectorXd ParameterBox::center() const {
    VectorXd c(dim());
    for (int q = 0; q < dim(); ++q) c(q) = 0.5 * (intervals[q].lo + intervals[q].hi);
    return c;
}

VectorXd ParameterBox::lower() const {
    VectorXd c(dim());
    for (int q = 0; q < dim(); ++q) c(q) = intervals[q].lo;
    return c;
}

VectorXd ParameterBox::upper() const {
    VectorXd c(dim());
    for (int q = 0; q < dim(); ++q) c(q) = intervals[q].hi;
    return c;
}

VectorXd ParameterBox::clamp(const VectorXd& xi) const {
    VectorXd c(dim());
    for (int q = 0; q < dim(); ++q)
        c(q) = std::min(std::max(xi(q), intervals[q].lo), intervals[q].hi);
    return c;
}

AffineModel::AffineModel(const InnerProductSpace* space, std::vector<SpMat> op_terms,
                         std::vector<VectorXd> rhs_terms, ParameterBox box, CoeffMap theta_op,
                         CoeffMap theta_rhs, bool theta_is_identity)
    : space_(space),
      op_terms_(std::move(op_terms)),
      rhs_terms_(std::move(rhs_terms)),
      box_(std::move(box)),
      theta_op_(std::move(theta_op)),
      theta_rhs_(std::move(theta_rhs)),
      theta_identity_(theta_is_identity) {
    if (!space_) throw ArgumentError("affine model needs a space");
    if (op_terms_.empty() || rhs_terms_.empty())
        throw ArgumentError("affine model needs the constant operator and rhs terms");
    const int n = space_->dim();
    for (const auto& t : op_terms_)
        if (t.rows() != n || t.cols() != n)
            throw ArgumentError("operator term dimension mismatch");
    for (const auto& f : rhs_terms_)
        if (f.size() != n) throw ArgumentError("rhs term dimension mismatch");
    box_.validate();
}

AffineModel AffineModel::with_identity_theta(const InnerProductSpace* space,
                                             std::vector<SpMat> op_terms,
                                             std::vector<VectorXd> rhs_terms, ParameterBox box) {
    const int m_b = static_cast<int>(op_terms.size()) - 1;
    const int m_f = static_cast<int>(rhs_terms.size()) - 1;
    if (box.dim() != m_b + m_f)
        throw ArgumentError(
            "identity coefficients require box dimension == total affine term count");
    auto op = [m_b](const VectorXd& xi) { return VectorXd(xi.head(m_b)); };
    auto rhs = [m_b, m_f](const VectorXd& xi) { return VectorXd(xi.segment(m_b, m_f)); };
    return AffineModel(space, std::move(op_terms), std::move(rhs_terms), std::move(box), op,
                       rhs, true);
}

VectorXd AffineModel::theta_op(const VectorXd& xi) const {
    VectorXd t = theta_op_(xi);
    if (t.size() != num_op_terms())
        throw NumericalError("theta_op hook returned wrong number of coefficients");
    return t;
}

VectorXd AffineModel::theta_rhs(const VectorXd& xi) const {
    VectorXd t = theta_rhs_(xi);
    if (t.size() != num_rhs_terms())
        throw NumericalError("theta_rhs hook returned wrong number of coefficients");
    return t;
}

VectorXd AffineModel::theta_stacked(const VectorXd& xi) const {
    VectorXd t(num_op_terms() + num_rhs_terms());
    t.head(num_op_terms()) = theta_op(xi);
    t.tail(num_rhs_terms()) = theta_rhs(xi);
    return t;
}

std::pair<SpMat, VectorXd> AffineModel::assemble(const VectorXd& xi) const {
    if (!box_.contains(xi)) {
        std::ostringstream os;
        os << "parameter outside the admissible box: [" << xi.transpose() << "]";
        throw DomainError(os.str());
    }
    const VectorXd tb = theta_op(xi);
    const VectorXd tf = theta_rhs(xi);
    SpMat b = op_terms_[0];
    for (int q = 0; q < num_op_terms(); ++q) b += tb(q) * op_terms_[q + 1];
    VectorXd f = rhs_terms_[0];
    for (int q = 0; q < num_rhs_terms(); ++q) f += tf(q) * rhs_terms_[q + 1];
    return {std::move(b), std::move(f)};
}

VectorXd AffineModel::solve_state(const VectorXd& xi) const {
    auto [b, f] = assemble(xi);
    b.makeCompressed();
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(b);
    lu.factorize(b);
    if (lu.info() != Eigen::Success) {
        std::ostringstream os;
        os << "operator factorization failed at xi = [" << xi.transpose() << "]";
        throw NumericalError(os.str());
    }
    VectorXd u = lu.solve(f);
    const double res = (b * u - f).norm();
    if (!(res <= 1e-10 * std::max(f.norm(), 1e-300))) {
        std::ostringstream os;
        os << "state solve did not reach tolerance at xi = [" << xi.transpose()
           << "] (relative residual " << res / f.norm() << ")";
        throw NumericalError(os.str());
    }
    return u;
}

SeparatedResidual AffineModel::separated(const VectorXd& v) const {
    if (v.size() != state_dim()) throw ArgumentError("separated: state dimension mismatch");
    SeparatedResidual sr;
    sr.G.resize(state_dim(), num_op_terms() + num_rhs_terms());
    for (int q = 0; q < num_op_terms(); ++q) sr.G.col(q) = op_terms_[q + 1] * v;
    for (int q = 0; q < num_rhs_terms(); ++q)
        sr.G.col(num_op_terms() + q) = -rhs_terms_[q + 1];
    sr.g = rhs_terms_[0] - op_terms_[0] * v;
    return sr;
}

double AffineModel::residual_norm(const VectorXd& v, const VectorXd& xi) const {
    if (v.size() != state_dim()) throw ArgumentError("residual_norm: state dimension mismatch");
    auto [b, f] = assemble(xi);
    return space_->dual_norm(b * v - f);
}

}  // namespace pbdw
