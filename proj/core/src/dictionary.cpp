#include "pbdw/dictionary.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "pbdw/rng.hpp"

namespace pbdw {

namespace {

constexpr double kKktTolRel = 1e-8;

struct ResolvedCaps {
    double alpha_floor;
    int max_spaces;
    int sparsity_cap;
};

ResolvedCaps resolve_caps(const LarsCaps& caps, int m, int K, double alpha0) {
    if (caps.alpha_floor_rel < 0.0 || caps.max_spaces < 0 || caps.sparsity_cap < 0)
        throw ArgumentError("lars caps must be nonnegative");
    ResolvedCaps r;
    r.alpha_floor = caps.alpha_floor_rel * alpha0;
    r.max_spaces = caps.max_spaces > 0 ? caps.max_spaces : (K + 9) / 10;
    r.sparsity_cap = caps.sparsity_cap > 0 ? caps.sparsity_cap : m / 2;
    r.sparsity_cap = std::min(std::max(1, r.sparsity_cap), m);
    r.max_spaces = std::max(1, r.max_spaces);
    return r;
}

/// KKT residual of x at alpha: max over coordinates of the violation of
/// |C^T(w - Cx)|_i = alpha sign(x_i) on the support and <= alpha off it.
double kkt_residual(const MatrixXd& c, const VectorXd& w, const VectorXd& x, double alpha) {
    const VectorXd corr = c.transpose() * (w - c * x);
    double viol = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        if (x(i) != 0.0)
            viol = std::max(viol, std::abs(corr(i) - alpha * (x(i) > 0.0 ? 1.0 : -1.0)));
        else
            viol = std::max(viol, std::max(0.0, std::abs(corr(i)) - alpha));
    }
    return viol;
}

VectorXd scatter(const std::vector<int>& active, const VectorXd& xa, int K) {
    VectorXd x = VectorXd::Zero(K);
    for (std::size_t a = 0; a < active.size(); ++a) x(active[a]) = xa(static_cast<int>(a));
    return x;
}

/// Orthonormalization coefficients for a support, from the atom Gram; a
/// second pass tightens the result when the block is badly conditioned.
MatrixXd support_coeffs(const MatrixXd& gram, const std::vector<int>& support) {
    const int p = static_cast<int>(support.size());
    MatrixXd g(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) g(i, j) = gram(support[i], support[j]);
    MatrixXd m = gram_orthonormal_coeffs(g);
    const int n = static_cast<int>(m.cols());
    if (n == 0) return m;
    MatrixXd residual = m.transpose() * g * m - MatrixXd::Identity(n, n);
    if (residual.norm() > 1e-12 * std::sqrt(static_cast<double>(n)))
        m = m * gram_orthonormal_coeffs(m.transpose() * g * m, 1e-12);
    return m;
}

MatrixXd columns_of(const MatrixXd& c, const std::vector<int>& idx) {
    MatrixXd out(c.rows(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) out.col(static_cast<int>(a)) = c.col(idx[a]);
    return out;
}

}  // namespace

std::string to_string(PathTermination t) {
    switch (t) {
        case PathTermination::alpha_floor: return "alpha_floor";
        case PathTermination::max_spaces: return "max_spaces";
        case PathTermination::sparsity_cap: return "sparsity_cap";
        case PathTermination::exact_fit: return "exact_fit";
        case PathTermination::numerical_stall: return "numerical_stall";
    }
    return "unknown";
}

Dictionary build_dictionary(const InnerProductSpace& space, const ObservationSpace& obs,
                            const MatrixXd& snapshots, int K,
                            const std::vector<VectorXd>* params) {
    if (K < 1) throw ArgumentError("build_dictionary: K must be positive");
    if (K > snapshots.cols())
        throw ArgumentError("build_dictionary: K exceeds the number of snapshots");
    if (snapshots.rows() != space.dim())
        throw ArgumentError("build_dictionary: snapshot dimension mismatch");

    Dictionary dict;
    dict.space = &space;
    dict.atoms.columns.resize(space.dim(), K);
    int kept = 0;
    for (int j = 0; j < snapshots.cols() && kept < K; ++j) {
        const double nrm = space.norm(VectorXd(snapshots.col(j)));
        if (!(nrm > 0.0)) {
            ++dict.skipped_snapshots;
            continue;
        }
        dict.atoms.columns.col(kept) = snapshots.col(j) / nrm;
        if (params && j < static_cast<int>(params->size()))
            dict.provenance.push_back((*params)[j]);
        ++kept;
    }
    dict.atoms.columns.conservativeResize(space.dim(), kept);
    dict.atoms.u_orthonormal = false;

    const MatrixXd gram_atoms = space.gram() * dict.atoms.columns;
    dict.C = obs.W.columns.transpose() * gram_atoms;
    dict.gram = dict.atoms.columns.transpose() * gram_atoms;
    return dict;
}

Dictionary perturb_dictionary(const Dictionary& dict, const ObservationSpace& obs,
                              double amplitude, std::uint64_t seed) {
    if (!(amplitude > 0.0)) throw ArgumentError("perturb_dictionary: amplitude must be positive");
    const double scale = amplitude * dict.C.cwiseAbs().maxCoeff();
    CounterRng rng(seed, 0x70657274ull);

    Dictionary out;
    out.space = dict.space;
    out.provenance = dict.provenance;
    out.skipped_snapshots = dict.skipped_snapshots;
    out.atoms.columns = dict.atoms.columns;
    for (int i = 0; i < dict.K(); ++i) {
        VectorXd e(obs.m());
        for (int j = 0; j < obs.m(); ++j) e(j) = scale * rng.uniform(-1.0, 1.0);
        out.atoms.columns.col(i) += obs.W.columns * e;
        const double nrm = dict.space->norm(VectorXd(out.atoms.columns.col(i)));
        if (nrm > 0.0) out.atoms.columns.col(i) /= nrm;
    }
    const MatrixXd gram_atoms = dict.space->gram() * out.atoms.columns;
    out.C = obs.W.columns.transpose() * gram_atoms;
    out.gram = out.atoms.columns.transpose() * gram_atoms;
    return out;
}

LassoPath lars_core(const MatrixXd& c, const VectorXd& w, const LarsCaps& caps) {
    const int m = static_cast<int>(c.rows());
    const int K = static_cast<int>(c.cols());
    if (w.size() != m) throw ArgumentError("lars_core: observation length mismatch");
    if (K == 0) throw ArgumentError("lars_core: empty dictionary");

    LassoPath path;
    const VectorXd c0 = c.transpose() * w;
    const double alpha0 = c0.cwiseAbs().maxCoeff();
    path.alpha0 = alpha0;

    if (!(alpha0 > 0.0)) {
        // zero is optimal for every alpha; nothing ever enters
        path.breakpoints.push_back(0.0);
        path.solutions.push_back(VectorXd::Zero(K));
        path.supports.push_back({});
        path.termination = PathTermination::exact_fit;
        return path;
    }

    const ResolvedCaps rc = resolve_caps(caps, m, K, alpha0);
    const double kkt_tol = kKktTolRel * alpha0;
    const double stall_tol = 1e3 * std::numeric_limits<double>::epsilon() * alpha0;
    const double wnorm = w.norm();

    std::vector<int> active;
    std::vector<double> signs;
    // identity of the atom that changed state at the segment top; its own
    // event root sits exactly at alpha_cur and must not be re-detected
    int last_entered = -1;
    int last_left = -1;
    double last_left_sign = 0.0;
    {
        int j_first = 0;
        for (int i = 1; i < K; ++i)
            if (std::abs(c0(i)) > std::abs(c0(j_first))) j_first = i;
        active.push_back(j_first);
        signs.push_back(c0(j_first) > 0.0 ? 1.0 : -1.0);
        last_entered = j_first;
    }

    std::set<std::vector<int>> seen;
    auto canonical = [](std::vector<int> s) {
        std::sort(s.begin(), s.end());
        return s;
    };
    seen.insert(canonical(active));

    path.breakpoints.push_back(alpha0);
    path.solutions.push_back(VectorXd::Zero(K));
    path.supports.push_back(active);

    double alpha_cur = alpha0;

    for (;;) {
        const int na = static_cast<int>(active.size());
        const MatrixXd ca = columns_of(c, active);
        Eigen::HouseholderQR<MatrixXd> qr(ca);
        const MatrixXd r_full = qr.matrixQR().topRows(na).triangularView<Eigen::Upper>();

        double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
        for (int i = 0; i < na; ++i) {
            rmax = std::max(rmax, std::abs(r_full(i, i)));
            rmin = std::min(rmin, std::abs(r_full(i, i)));
        }
        if (!(rmin > 1e-13 * rmax)) {
            path.termination = PathTermination::numerical_stall;
            return path;
        }

        // segment representation x_A(alpha) = d - alpha h
        const VectorXd d = qr.solve(w);
        VectorXd s_vec(na);
        for (int i = 0; i < na; ++i) s_vec(i) = signs[static_cast<std::size_t>(i)];
        VectorXd h = r_full.transpose().triangularView<Eigen::Lower>().solve(s_vec);
        h = r_full.triangularView<Eigen::Upper>().solve(h);

        const VectorXd r0 = w - ca * d;
        const VectorXd r1 = ca * h;
        const VectorXd p = c.transpose() * r0;
        const VectorXd q = c.transpose() * r1;

        std::vector<char> is_active(K, 0);
        for (int a : active) is_active[a] = 1;

        // next event going down in alpha; a relative guard below alpha_cur
        // filters the spurious re-detection of the event that just fired
        const double alpha_hi =
            alpha_cur * (1.0 - 16.0 * std::numeric_limits<double>::epsilon());
        double alpha_next = -1.0;
        int event_idx = -1;       // atom entering or leaving
        bool event_entry = false;
        double entry_sign = 0.0;

        for (int i = 0; i < K; ++i) {
            if (is_active[i]) continue;
            const double den_pos = 1.0 - q(i);
            const double den_neg = 1.0 + q(i);
            if (std::abs(den_pos) > 1e-300 && !(i == last_left && last_left_sign > 0.0)) {
                const double a_pos = p(i) / den_pos;
                if (a_pos > 0.0 && a_pos < alpha_hi && a_pos > alpha_next) {
                    alpha_next = a_pos;
                    event_idx = i;
                    event_entry = true;
                    entry_sign = 1.0;
                }
            }
            if (std::abs(den_neg) > 1e-300 && !(i == last_left && last_left_sign < 0.0)) {
                const double a_neg = -p(i) / den_neg;
                if (a_neg > 0.0 && a_neg < alpha_hi && a_neg > alpha_next) {
                    alpha_next = a_neg;
                    event_idx = i;
                    event_entry = true;
                    entry_sign = -1.0;
                }
            }
        }
        for (int a = 0; a < na; ++a) {
            if (h(a) == 0.0) continue;
            if (active[static_cast<std::size_t>(a)] == last_entered) continue;
            const double a_leave = d(a) / h(a);
            if (a_leave > 0.0 && a_leave < alpha_hi && a_leave > alpha_next) {
                alpha_next = a_leave;
                event_idx = a;  // position within the active set
                event_entry = false;
            }
        }

        // the segment runs out below the floor: stop there; exact fit means
        // the alpha -> 0 limit of this support already matches the data
        if (event_idx < 0 || alpha_next <= rc.alpha_floor) {
            const double alpha_stop = std::max(rc.alpha_floor, 0.0);
            VectorXd x = scatter(active, d - alpha_stop * h, K);
            if (kkt_residual(c, w, x, alpha_stop) <= kkt_tol) {
                path.breakpoints.push_back(alpha_stop);
                path.solutions.push_back(std::move(x));
                path.supports.push_back(active);
                path.termination = r0.norm() <= 1e-12 * wnorm ? PathTermination::exact_fit
                                                              : PathTermination::alpha_floor;
            } else {
                path.termination = PathTermination::numerical_stall;
            }
            return path;
        }

        if (alpha_cur - alpha_next < stall_tol) {
            path.termination = PathTermination::numerical_stall;
            return path;
        }

        // apply the event to get the support below alpha_next
        std::vector<int> next_active = active;
        std::vector<double> next_signs = signs;
        if (event_entry) {
            if (static_cast<int>(active.size()) + 1 > rc.sparsity_cap) {
                path.termination = PathTermination::sparsity_cap;
                return path;
            }
            next_active.push_back(event_idx);
            next_signs.push_back(entry_sign);
            last_entered = event_idx;
            last_left = -1;
        } else {
            last_entered = -1;
            last_left = next_active[static_cast<std::size_t>(event_idx)];
            last_left_sign = next_signs[static_cast<std::size_t>(event_idx)];
            next_active.erase(next_active.begin() + event_idx);
            next_signs.erase(next_signs.begin() + event_idx);
        }

        const auto canon = canonical(next_active);
        const bool new_support = !seen.contains(canon);
        if (new_support && static_cast<int>(seen.size()) + 1 > rc.max_spaces) {
            path.termination = PathTermination::max_spaces;
            return path;
        }

        VectorXd xa = d - alpha_next * h;
        if (!event_entry) xa(event_idx) = 0.0;  // leaving coordinate is exactly zero
        VectorXd x = scatter(active, xa, K);
        if (kkt_residual(c, w, x, alpha_next) > kkt_tol) {
            path.termination = PathTermination::numerical_stall;
            return path;
        }

        path.breakpoints.push_back(alpha_next);
        path.solutions.push_back(std::move(x));
        path.supports.push_back(next_active);
        if (new_support) seen.insert(canon);

        active = std::move(next_active);
        signs = std::move(next_signs);
        alpha_cur = alpha_next;
    }
}

LassoPath lars_path(const Dictionary& dict, const VectorXd& w, const LarsCaps& caps) {
    return lars_core(dict.C, w, caps);
}

Library path_to_library(const Dictionary& dict, const LassoPath& path) {
    Library lib;
    lib.dict = &dict;
    std::set<std::vector<int>> seen;
    for (std::size_t j = 0; j < path.supports.size(); ++j) {
        if (path.supports[j].empty()) continue;
        std::vector<int> canon = path.supports[j];
        std::sort(canon.begin(), canon.end());
        if (!seen.insert(canon).second) continue;

        LibrarySpace space;
        space.support = path.supports[j];
        space.alpha = path.breakpoints[j];
        space.coeffs = support_coeffs(dict.gram, space.support);
        space.basis.columns = columns_of(dict.atoms.columns, space.support) * space.coeffs;
        space.basis.u_orthonormal = true;
        lib.spaces.push_back(std::move(space));
    }
    return lib;
}

DictSelection dict_select(const MatrixXd& c, const MatrixXd& gram, const SketchedOffline& off,
                          const VectorXd& w, const LarsCaps& caps, double sigma_threshold) {
    return dict_select(
        c, gram, [&off](const SparseCoeffs& a) { return surrogate_sketched(off, a).value; }, w,
        caps, sigma_threshold);
}

DictSelection dict_select(const MatrixXd& c, const MatrixXd& gram, const SurrogateFn& surrogate,
                          const VectorXd& w, const LarsCaps& caps, double sigma_threshold) {
    DictSelection sel;
    sel.path = lars_core(c, w, caps);

    std::set<std::vector<int>> seen;
    std::vector<double> surrogates;
    std::vector<int> viable;  // candidate indices eligible for selection

    for (std::size_t j = 0; j < sel.path.supports.size(); ++j) {
        if (sel.path.supports[j].empty()) continue;
        std::vector<int> canon = sel.path.supports[j];
        std::sort(canon.begin(), canon.end());
        if (!seen.insert(canon).second) continue;

        CandidateSolve cand;
        cand.support = sel.path.supports[j];
        cand.alpha = sel.path.breakpoints[j];

        const MatrixXd coeffs = support_coeffs(gram, cand.support);
        const MatrixXd c_v = columns_of(c, cand.support) * coeffs;
        try {
            PbdwSolve sol = pbdw_solve(c_v, w, sigma_threshold);
            cand.sigma_min = sol.sigma_min;
            cand.mu = 1.0 / sol.sigma_min;
            cand.eta = sol.correction;
            cand.x_atoms = coeffs * sol.background;
        } catch (const IllPosedError& e) {
            cand.skipped = true;
            cand.sigma_min = e.sigma_min;
            ++sel.skipped_count;
            sel.candidates.push_back(std::move(cand));
            continue;
        }

        SparseCoeffs a;
        a.w_block = cand.eta;
        for (std::size_t i = 0; i < cand.support.size(); ++i)
            a.dict_entries.emplace_back(cand.support[i], cand.x_atoms(static_cast<int>(i)));
        cand.surrogate = surrogate(a);

        surrogates.push_back(cand.surrogate);
        viable.push_back(static_cast<int>(sel.candidates.size()));
        sel.candidates.push_back(std::move(cand));
    }

    if (viable.empty()) {
        sel.fallback = true;
        sel.selected = -1;
    } else {
        sel.selected = viable[select_space(surrogates)];
    }
    return sel;
}

namespace {

RecoveryResult materialize(const Dictionary& dict, const ObservationSpace& obs,
                           const CandidateSolve& cand) {
    RecoveryResult res;
    res.support = cand.support;
    res.background_coeffs = cand.x_atoms;
    res.correction_coeffs = cand.eta;
    res.mu_of_space = cand.mu;
    res.surrogate_value = cand.surrogate;
    res.alpha = cand.alpha;
    res.state = obs.W.columns * cand.eta;
    for (std::size_t i = 0; i < cand.support.size(); ++i)
        res.state += cand.x_atoms(static_cast<int>(i)) * dict.atoms.columns.col(cand.support[i]);
    return res;
}

RecoveryResult fallback_recovery(const ObservationSpace& obs, const VectorXd& w) {
    RecoveryResult res;
    res.background_coeffs.resize(0);
    res.correction_coeffs = w;
    res.state = obs.W.columns * w;
    res.mu_of_space = 1.0;
    res.fallback = true;
    return res;
}

}  // namespace

DictRecoveryReport dict_recover_full(const Dictionary& dict, const ObservationSpace& obs,
                                     const SketchedOffline& off, const VectorXd& w,
                                     const LarsCaps& caps, double sigma_threshold) {
    return dict_recover_full(
        dict, obs, [&off](const SparseCoeffs& a) { return surrogate_sketched(off, a).value; },
        w, caps, sigma_threshold);
}

DictRecoveryReport dict_recover_full(const Dictionary& dict, const ObservationSpace& obs,
                                     const SurrogateFn& surrogate, const VectorXd& w,
                                     const LarsCaps& caps, double sigma_threshold) {
    DictRecoveryReport rep;
    rep.selection = dict_select(dict.C, dict.gram, surrogate, w, caps, sigma_threshold);
    rep.candidates.reserve(rep.selection.candidates.size());
    for (const auto& cand : rep.selection.candidates)
        rep.candidates.push_back(cand.skipped ? RecoveryResult{}
                                              : materialize(dict, obs, cand));
    rep.result = rep.selection.fallback
                     ? fallback_recovery(obs, w)
                     : rep.candidates[static_cast<std::size_t>(rep.selection.selected)];
    return rep;
}

RecoveryResult dict_recover(const Dictionary& dict, const ObservationSpace& obs,
                            const SketchedOffline& off, const VectorXd& w, const LarsCaps& caps,
                            double sigma_threshold) {
    return dict_recover_full(dict, obs, off, w, caps, sigma_threshold).result;
}

RecoveryResult best_in_library(const Library& library, const ObservationSpace& obs,
                               const VectorXd& w, const VectorXd& truth,
                               double sigma_threshold) {
    if (!library.dict) throw ArgumentError("best_in_library: library has no dictionary");
    const Dictionary& dict = *library.dict;

    RecoveryResult best = fallback_recovery(obs, w);
    double best_err = dict.space->norm(VectorXd(best.state - truth));
    bool found = false;

    for (const auto& space : library.spaces) {
        const MatrixXd c_v = columns_of(dict.C, space.support) * space.coeffs;
        CandidateSolve cand;
        cand.support = space.support;
        cand.alpha = space.alpha;
        try {
            PbdwSolve sol = pbdw_solve(c_v, w, sigma_threshold);
            cand.sigma_min = sol.sigma_min;
            cand.mu = 1.0 / sol.sigma_min;
            cand.eta = sol.correction;
            cand.x_atoms = space.coeffs * sol.background;
        } catch (const IllPosedError&) {
            continue;
        }
        RecoveryResult res = materialize(dict, obs, cand);
        const double err = dict.space->norm(VectorXd(res.state - truth));
        if (!found || err < best_err) {
            best = std::move(res);
            best_err = err;
            found = true;
        }
    }
    return best;
}

std::string path_debug_csv(const MatrixXd& c, const VectorXd& w, const LassoPath& path) {
    std::ostringstream os;
    os << "alpha,support_size,objective,kkt_residual\n";
    for (std::size_t j = 0; j < path.breakpoints.size(); ++j) {
        const double alpha = path.breakpoints[j];
        const VectorXd& x = path.solutions[j];
        const double obj = 0.5 * (c * x - w).squaredNorm() + alpha * x.lpNorm<1>();
        char buf[128];
        std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g\n", alpha,
                      static_cast<std::size_t>((x.array() != 0.0).count()), obj,
                      kkt_residual(c, w, x, alpha));
        os << buf;
    }
    return os.str();
}

}  // namespace pbdw
