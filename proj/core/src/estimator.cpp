#include "pbdw/estimator.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

#include "pbdw/io.hpp"

#include <json.hpp>

#include <fstream>

namespace pbdw {

ObservationSpace build_observation(const InnerProductSpace& space, const MatrixXd& functionals) {
    if (functionals.rows() != space.dim())
        throw ArgumentError("build_observation: functional length mismatch");
    if (functionals.cols() == 0) throw ArgumentError("build_observation: no sensors given");

    MatrixXd representers(space.dim(), functionals.cols());
    for (int j = 0; j < functionals.cols(); ++j)
        representers.col(j) = space.riesz(VectorXd(functionals.col(j)));

    OrthoResult ortho = u_orthonormalize(space, BasisMatrix{representers, false});
    if (!ortho.dropped.empty()) {
        std::string msg = "dependent sensor functionals, dropped indices:";
        for (int i : ortho.dropped) msg += " " + std::to_string(i);
        throw RankError(msg, ortho.dropped);
    }
    return ObservationSpace{&space, functionals, std::move(ortho.basis)};
}

PbdwSolve pbdw_solve(const MatrixXd& c, const VectorXd& w, double sigma_threshold) {
    const int m = static_cast<int>(c.rows());
    const int n = static_cast<int>(c.cols());
    if (w.size() != m) throw ArgumentError("pbdw_solve: observation length mismatch");
    if (n > m) throw ArgumentError("pbdw_solve: background dimension exceeds sensor count");

    PbdwSolve out;
    if (n == 0) {
        out.background.resize(0);
        out.correction = w;
        out.sigma_min = 1.0;
        return out;
    }
    Eigen::JacobiSVD<MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.sigma_min = svd.singularValues()(n - 1);
    if (out.sigma_min <= sigma_threshold)
        throw IllPosedError("pbdw_solve: cross Gramian is rank deficient (sigma_min = " +
                                std::to_string(out.sigma_min) + ")",
                            out.sigma_min);
    out.background = svd.solve(w);
    out.correction = w - c * out.background;
    return out;
}

RecoveryResult pbdw_recover(const ObservationSpace& obs, const BasisMatrix& V, const VectorXd& w,
                            double sigma_threshold) {
    if (V.cols() > 0 && V.rows() != obs.space->dim())
        throw ArgumentError("pbdw_recover: basis dimension mismatch");
    const MatrixXd c = obs.W.columns.transpose() * (obs.space->gram() * V.columns);
    PbdwSolve sol = pbdw_solve(c, w, sigma_threshold);

    RecoveryResult res;
    res.background_coeffs = sol.background;
    res.correction_coeffs = sol.correction;
    res.state = obs.W.columns * sol.correction;
    if (V.cols() > 0) res.state += V.columns * sol.background;
    res.mu_of_space = 1.0 / sol.sigma_min;
    return res;
}

std::pair<double, double> stability_constants(const ObservationSpace& obs,
                                              const BasisMatrix& V) {
    if (V.cols() == 0) return {1.0, 1.0};
    if (!V.u_orthonormal)
        throw ArgumentError("stability_constants: basis must be U-orthonormal");
    const MatrixXd c = obs.W.columns.transpose() * (obs.space->gram() * V.columns);
    Eigen::JacobiSVD<MatrixXd> svd(c);
    // more background directions than sensors cannot be stable
    const double beta =
        V.cols() <= obs.m() ? svd.singularValues()(V.cols() - 1) : 0.0;
    const double mu =
        beta <= 1e-14 ? std::numeric_limits<double>::infinity() : 1.0 / beta;
    return {beta, mu};
}

BoxLsResult box_ls_solve(const MatrixXd& A, const VectorXd& b, const ParameterBox& box,
                         double tol_rel, int max_iters) {
    if (!(tol_rel > 0.0)) throw ArgumentError("box_ls_solve: tolerance must be positive");
    const int d = static_cast<int>(A.cols());
    if (box.dim() != d) throw ArgumentError("box_ls_solve: box dimension mismatch");
    if (A.rows() != b.size()) throw ArgumentError("box_ls_solve: rhs length mismatch");
    box.validate();

    const VectorXd atb = A.transpose() * b;
    const double tol = tol_rel * (1.0 + atb.norm());

    // Lipschitz constant ||A||_2^2 by power iteration on A^T A
    double lip = 0.0;
    {
        VectorXd z = VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
        double lam = 0.0;
        for (int it = 0; it < 100; ++it) {
            VectorXd y = A.transpose() * (A * z);
            const double ny = y.norm();
            if (ny <= 0.0) break;
            z = y / ny;
            const double prev = lam;
            lam = ny;
            if (it > 2 && std::abs(lam - prev) <= 1e-10 * lam) break;
        }
        lip = lam;
    }
    BoxLsResult res;
    if (lip <= 0.0) {  // A == 0: anything feasible is optimal
        res.theta = box.center();
        res.value = b.norm();
        res.converged = true;
        return res;
    }
    const double step = 1.0 / (1.01 * lip);

    auto grad = [&](const VectorXd& t) { return VectorXd(A.transpose() * (A * t) - atb); };
    auto objective = [&](const VectorXd& t) { return 0.5 * (A * t - b).squaredNorm(); };

    VectorXd x = box.center();
    VectorXd y = x;
    double t_momentum = 1.0;
    double f_prev = objective(x);
    int it = 0;

    for (; it < max_iters; ++it) {
        const VectorXd g = grad(y);
        VectorXd x_next = box.clamp(y - step * g);
        const double f_next = objective(x_next);

        // restart on objective increase, plus a long fixed period
        const bool restart = (it % 1000 == 999) || f_next > f_prev;
        if (restart) {
            t_momentum = 1.0;
            y = x_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
            y = x_next + ((t_momentum - 1.0) / t_next) * (x_next - x);
            y = box.clamp(y);
            t_momentum = t_next;
        }
        x = x_next;
        f_prev = f_next;

        if (it % 10 == 0 || it == max_iters - 1) {
            if ((x - box.clamp(x - grad(x))).norm() <= tol) {
                ++it;
                break;
            }
        }
    }

    // active-set polish: fix the coordinates sitting on bounds, solve the
    // free block exactly, keep the result when it is feasible and no worse
    {
        const VectorXd g = grad(x);
        std::vector<int> free_idx;
        VectorXd theta = x;
        for (int q = 0; q < d; ++q) {
            const double span = box.intervals[q].hi - box.intervals[q].lo;
            const bool at_lo = x(q) - box.intervals[q].lo <= 1e-12 * span && g(q) > 0.0;
            const bool at_hi = box.intervals[q].hi - x(q) <= 1e-12 * span && g(q) < 0.0;
            if (at_lo)
                theta(q) = box.intervals[q].lo;
            else if (at_hi)
                theta(q) = box.intervals[q].hi;
            else
                free_idx.push_back(q);
        }
        if (!free_idx.empty()) {
            MatrixXd a_free(A.rows(), free_idx.size());
            for (std::size_t i = 0; i < free_idx.size(); ++i)
                a_free.col(static_cast<int>(i)) = A.col(free_idx[i]);
            VectorXd rhs = b;
            for (int q = 0; q < d; ++q)
                if (theta(q) != 0.0 &&
                    std::find(free_idx.begin(), free_idx.end(), q) == free_idx.end())
                    rhs -= theta(q) * A.col(q);
            const VectorXd sol =
                a_free.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
            for (std::size_t i = 0; i < free_idx.size(); ++i)
                theta(free_idx[i]) = sol(static_cast<int>(i));
            if (box.contains(theta) && objective(box.clamp(theta)) <= f_prev)
                x = box.clamp(theta);
        }
    }

    res.theta = x;
    res.value = (A * x - b).norm();
    res.pg_norm = (x - box.clamp(x - grad(x))).norm();
    res.converged = res.pg_norm <= tol;
    res.iterations = it;
    return res;
}

SurrogateResult surrogate_exact(const AffineModel& model, const VectorXd& v) {
    if (!model.theta_is_identity())
        throw ArgumentError("surrogate_exact: only identity affine coefficients are supported");
    const SeparatedResidual sr = model.separated(v);
    const MatrixXd g_hat = model.space().dual_factor_apply(sr.G);
    const VectorXd rhs_hat = model.space().dual_factor_apply(sr.g);
    BoxLsResult ls = box_ls_solve(g_hat, rhs_hat, model.box());
    return {ls.value, ls.theta, ls.converged};
}

SketchedOffline sketched_offline(const AffineModel& model, const ObservationSpace& obs,
                                 const BasisMatrix& dict_atoms, const UEmbedding& emb) {
    const int n = model.state_dim();
    if (obs.space->dim() != n || (dict_atoms.cols() > 0 && dict_atoms.rows() != n))
        throw ArgumentError("sketched_offline: dimension mismatch");

    SketchedOffline off;
    off.m = obs.m();
    off.K = dict_atoms.cols();
    off.box = model.box();
    off.embedding = emb.spec();

    MatrixXd u_cols(n, off.m + off.K);
    u_cols.leftCols(off.m) = obs.W.columns;
    if (off.K > 0) u_cols.rightCols(off.K) = dict_atoms.columns;

    off.op_blocks.reserve(model.op_terms().size());
    for (const auto& term : model.op_terms()) {
        MatrixXd cols = term * u_cols;
        off.op_blocks.push_back(emb.sketch_dual(cols));
    }
    off.rhs_block.resize(emb.rows(), model.num_rhs_terms() + 1);
    for (int j = 0; j <= model.num_rhs_terms(); ++j)
        off.rhs_block.col(j) = emb.sketch_dual(model.rhs_terms()[j]);
    return off;
}

namespace {

VectorXd apply_block(const MatrixXd& block, const SparseCoeffs& a, int m) {
    VectorXd out = block.leftCols(m) * a.w_block;
    for (const auto& [idx, val] : a.dict_entries) out += val * block.col(m + idx);
    return out;
}

}  // namespace

SurrogateResult surrogate_sketched(const SketchedOffline& off, const SparseCoeffs& a) {
    if (a.w_block.size() != off.m)
        throw ArgumentError("surrogate_sketched: W block length mismatch");
    for (const auto& [idx, val] : a.dict_entries) {
        (void)val;
        if (idx < 0 || idx >= off.K)
            throw ArgumentError("surrogate_sketched: dictionary index out of range");
    }
    const int m_b = off.num_op_terms();
    const int m_f = off.num_rhs_terms();
    MatrixXd g_theta(off.rows(), m_b + m_f);
    for (int q = 0; q < m_b; ++q) g_theta.col(q) = apply_block(off.op_blocks[q + 1], a, off.m);
    for (int j = 0; j < m_f; ++j) g_theta.col(m_b + j) = -off.rhs_block.col(j + 1);
    const VectorXd rhs = off.rhs_block.col(0) - apply_block(off.op_blocks[0], a, off.m);
    BoxLsResult ls = box_ls_solve(g_theta, rhs, off.box);
    return {ls.value, ls.theta, ls.converged};
}

SurrogateResult surrogate_sketched(const SketchedOffline& off, const VectorXd& a_full) {
    if (a_full.size() != off.m + off.K)
        throw ArgumentError("surrogate_sketched: coefficient length mismatch");
    SparseCoeffs a;
    a.w_block = a_full.head(off.m);
    for (int i = 0; i < off.K; ++i)
        if (a_full(off.m + i) != 0.0) a.dict_entries.emplace_back(i, a_full(off.m + i));
    return surrogate_sketched(off, a);
}

std::size_t select_space(const std::vector<double>& surrogate_values) {
    if (surrogate_values.empty()) throw ArgumentError("select_space: empty candidate list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < surrogate_values.size(); ++i)
        if (surrogate_values[i] < surrogate_values[best]) best = i;
    return best;
}

void SketchedOffline::save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < op_blocks.size(); ++i)
        io::save_dense(dir / ("sketch_op_" + std::to_string(i) + ".bin"), op_blocks[i],
                       "sketched operator block");
    io::save_dense(dir / "sketch_rhs.bin", rhs_block, "sketched rhs block");

    nlohmann::json j{{"m", m},
                     {"K", K},
                     {"rows", rows()},
                     {"num_op_terms", num_op_terms()},
                     {"embedding",
                      {{"kind", static_cast<int>(embedding.kind)},
                       {"rows", embedding.rows},
                       {"inner_rows", embedding.inner_rows},
                       {"input_dim", embedding.input_dim},
                       {"seed", embedding.seed}}},
                     {"box_lo", std::vector<double>{}},
                     {"box_hi", std::vector<double>{}},
                     {"box_law", std::vector<int>{}}};
    for (const auto& iv : box.intervals) {
        j["box_lo"].push_back(iv.lo);
        j["box_hi"].push_back(iv.hi);
    }
    for (const auto& law : box.laws) j["box_law"].push_back(static_cast<int>(law));
    std::ofstream f(dir / "sketch_meta.json");
    if (!f) throw ArtifactError("cannot write sketch_meta.json");
    f << j.dump(2) << "\n";
}

SketchedOffline SketchedOffline::load(const std::filesystem::path& dir) {
    std::ifstream f(dir / "sketch_meta.json");
    if (!f) throw ArtifactError("missing sketch_meta.json in " + dir.string());
    nlohmann::json j;
    f >> j;

    SketchedOffline off;
    off.m = j.at("m").get<int>();
    off.K = j.at("K").get<int>();
    const int n_op = j.at("num_op_terms").get<int>();
    const auto& je = j.at("embedding");
    off.embedding.kind = static_cast<EmbeddingKind>(je.at("kind").get<int>());
    off.embedding.rows = je.at("rows").get<int>();
    off.embedding.inner_rows = je.at("inner_rows").get<int>();
    off.embedding.input_dim = je.at("input_dim").get<int>();
    off.embedding.seed = je.at("seed").get<std::uint64_t>();
    const auto lo = j.at("box_lo").get<std::vector<double>>();
    const auto hi = j.at("box_hi").get<std::vector<double>>();
    const auto law = j.at("box_law").get<std::vector<int>>();
    for (std::size_t q = 0; q < lo.size(); ++q) {
        off.box.intervals.push_back({lo[q], hi[q]});
        off.box.laws.push_back(static_cast<SamplingLaw>(law[q]));
    }
    for (int i = 0; i <= n_op; ++i)
        off.op_blocks.push_back(
            io::load_dense(dir / ("sketch_op_" + std::to_string(i) + ".bin")));
    off.rhs_block = io::load_dense(dir / "sketch_rhs.bin");
    return off;
}

}  // namespace pbdw
