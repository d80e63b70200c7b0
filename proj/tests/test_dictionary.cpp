#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "pbdw/dictionary.hpp"
#include "pbdw/problems.hpp"

using namespace pbdw;
using oracle::randn;
using oracle::randn_vec;

namespace {

struct Bench {
    Problem prob;
    ObservationSpace obs;
    Dictionary dict;
    SketchedOffline off;
    std::vector<VectorXd> params;
};

Bench thermal_bench(int n_h, int K, const std::string& pattern, std::uint64_t seed) {
    Bench b{thermal_block(n_h), {}, {}, {}, {}};
    b.obs = build_observation(*b.prob.space,
                              sensors_radial(*b.prob.space, b.prob.mesh,
                                             sensor_pattern(pattern)));
    b.params = sample_parameters(b.prob.model->box(), K, seed);
    MatrixXd snaps(b.prob.space->dim(), K);
    for (int i = 0; i < K; ++i) snaps.col(i) = b.prob.model->solve_state(b.params[i]);
    b.dict = build_dictionary(*b.prob.space, b.obs, snaps, K, &b.params);
    const UEmbedding emb = UEmbedding::realize(
        {EmbeddingKind::gaussian, 60, 0, static_cast<int>(b.prob.space->factor().rows()),
         seed + 7},
        *b.prob.space);
    b.off = sketched_offline(*b.prob.model, b.obs, b.dict.atoms, emb);
    return b;
}

double kkt_violation(const MatrixXd& c, const VectorXd& w, const VectorXd& x, double alpha) {
    const VectorXd corr = c.transpose() * (w - c * x);
    double viol = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        if (x(i) != 0.0)
            viol = std::max(viol, std::abs(corr(i) - alpha * (x(i) > 0 ? 1.0 : -1.0)));
        else
            viol = std::max(viol, std::max(0.0, std::abs(corr(i)) - alpha));
    }
    return viol;
}

}  // namespace

TEST_CASE("build_dictionary") {
    InnerProductSpace space = oracle::random_spd_space(25, 4001);
    CounterRng rng(1);
    const ObservationSpace obs = build_observation(space, randn(rng, 25, 5));

    SUBCASE("single snapshot becomes a unit atom") {
        const VectorXd s = randn_vec(rng, 25);
        const Dictionary dict = build_dictionary(space, obs, s, 1);
        CHECK(dict.K() == 1);
        CHECK(space.norm(VectorXd(dict.atoms.columns.col(0))) ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK((dict.atoms.columns.col(0) - s / space.norm(s)).norm() <= 1e-12);
    }
    SUBCASE("unit-norm snapshots pass through unchanged") {
        MatrixXd snaps = randn(rng, 25, 3);
        for (int j = 0; j < 3; ++j) snaps.col(j) /= space.norm(VectorXd(snaps.col(j)));
        const Dictionary dict = build_dictionary(space, obs, snaps, 3);
        CHECK((dict.atoms.columns - snaps).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SUBCASE("zero snapshots are skipped with a warning count") {
        MatrixXd snaps = randn(rng, 25, 4);
        snaps.col(1).setZero();
        const Dictionary dict = build_dictionary(space, obs, snaps, 4);
        CHECK(dict.K() == 3);
        CHECK(dict.skipped_snapshots == 1);
    }
    SUBCASE("atom norms and measurement entries on the thermal bench") {
        Bench b = thermal_bench(12, 200, "m9", 4002);
        for (int k = 0; k < b.dict.K(); ++k)
            CHECK(b.prob.space->norm(VectorXd(b.dict.atoms.columns.col(k))) ==
                  doctest::Approx(1.0).epsilon(1e-10));
        // spot-check C entries against independently recomputed inner products
        CounterRng pick(2);
        for (int t = 0; t < 20; ++t) {
            const int i = static_cast<int>(pick.below(b.obs.m()));
            const int k = static_cast<int>(pick.below(b.dict.K()));
            const double direct = b.prob.space->inner(VectorXd(b.obs.W.columns.col(i)),
                                                      VectorXd(b.dict.atoms.columns.col(k)));
            CHECK(b.dict.C(i, k) == doctest::Approx(direct).epsilon(1e-12));
        }
        // gram entries likewise
        for (int t = 0; t < 10; ++t) {
            const int i = static_cast<int>(pick.below(b.dict.K()));
            const int k = static_cast<int>(pick.below(b.dict.K()));
            const double direct = b.prob.space->inner(VectorXd(b.dict.atoms.columns.col(i)),
                                                      VectorXd(b.dict.atoms.columns.col(k)));
            CHECK(b.dict.gram(i, k) == doctest::Approx(direct).epsilon(1e-12));
        }
    }
}

TEST_CASE("lars path on orthonormal measurement columns reproduces soft thresholding") {
    CounterRng rng(3);
    const int m = 30, K = 20;
    // C with exactly orthonormal columns via QR
    const MatrixXd raw = randn(rng, m, K);
    const MatrixXd c = Eigen::HouseholderQR<MatrixXd>(raw).householderQ() *
                       MatrixXd::Identity(m, K);
    const VectorXd w = randn_vec(rng, m);
    LarsCaps caps;
    caps.sparsity_cap = K;   // let every atom enter
    caps.max_spaces = K + 1;
    const LassoPath path = lars_core(c, w, caps);

    const VectorXd z = c.transpose() * w;
    CHECK(path.alpha0 == doctest::Approx(z.cwiseAbs().maxCoeff()).epsilon(1e-14));
    for (std::size_t j = 0; j < path.breakpoints.size(); ++j) {
        const VectorXd expect = oracle::soft_threshold(z, path.breakpoints[j]);
        CHECK((path.solutions[j] - expect).cwiseAbs().maxCoeff() <= 1e-10);
    }
    // every distinct magnitude of z is an entry breakpoint
    CHECK(path.breakpoints.size() >= static_cast<std::size_t>(K));
}

TEST_CASE("lars path against the proximal gradient oracle") {
    CounterRng rng(4);
    const int m = 30, K = 120;
    const MatrixXd c = randn(rng, m, K);
    const VectorXd w = randn_vec(rng, m);
    LarsCaps caps;
    caps.sparsity_cap = m / 2;
    caps.max_spaces = 40;
    const LassoPath path = lars_core(c, w, caps);
    REQUIRE(path.breakpoints.size() >= 12);

    SUBCASE("the zero solution is optimal at alpha_0") {
        CHECK(path.solutions[0].norm() == 0.0);
        CHECK(kkt_violation(c, w, path.solutions[0], path.alpha0) <= 1e-12 * path.alpha0);
    }
    SUBCASE("KKT certificates at every breakpoint") {
        for (std::size_t j = 0; j < path.breakpoints.size(); ++j)
            CHECK(kkt_violation(c, w, path.solutions[j], path.breakpoints[j]) <=
                  1e-8 * path.alpha0);
    }
    SUBCASE("objective values match FISTA at interior breakpoints") {
        for (std::size_t j = 1; j < std::min<std::size_t>(path.breakpoints.size(), 11); ++j) {
            const double alpha = path.breakpoints[j];
            const VectorXd x_oracle = oracle::fista_bpdn(c, w, alpha, 1e-13);
            const double f_path = oracle::bpdn_objective(c, w, path.solutions[j], alpha);
            const double f_oracle = oracle::bpdn_objective(c, w, x_oracle, alpha);
            CHECK(f_path <= f_oracle * (1.0 + 1e-6));
            CHECK(f_path >= f_oracle * (1.0 - 1e-6));
        }
    }
    SUBCASE("solutions stay m-sparse and the fit is monotone") {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < path.breakpoints.size(); ++j) {
            CHECK((path.solutions[j].array() != 0.0).count() <= m);
            const double fit = (c * path.solutions[j] - w).norm();
            CHECK(fit <= prev * (1.0 + 1e-12) + 1e-14);
            prev = fit;
        }
    }
    SUBCASE("path objective dominates random feasible points") {
        CounterRng rnd(5);
        for (std::size_t j = 1; j < path.breakpoints.size(); j += 5) {
            const double alpha = path.breakpoints[j];
            const double f_path = oracle::bpdn_objective(c, w, path.solutions[j], alpha);
            for (int t = 0; t < 100; ++t) {
                VectorXd x = VectorXd::Zero(K);
                for (int nz = 0; nz < 8; ++nz)
                    x(static_cast<int>(rnd.below(K))) = rnd.normal();
                CHECK(f_path <= oracle::bpdn_objective(c, w, x, alpha) + 1e-12);
            }
        }
    }
}

TEST_CASE("lars termination reasons") {
    CounterRng rng(6);
    const int m = 12, K = 40;
    const MatrixXd c = randn(rng, m, K);
    const VectorXd w = randn_vec(rng, m);

    SUBCASE("zero observations terminate immediately") {
        const LassoPath path = lars_core(c, VectorXd::Zero(m));
        CHECK(path.termination == PathTermination::exact_fit);
        CHECK(path.breakpoints.size() == 1);
        CHECK(path.supports[0].empty());
    }
    SUBCASE("sparsity cap") {
        LarsCaps caps;
        caps.sparsity_cap = 3;
        caps.max_spaces = 1000;
        const LassoPath path = lars_core(c, w, caps);
        CHECK(path.termination == PathTermination::sparsity_cap);
        for (const auto& s : path.supports) CHECK(s.size() <= 3);
    }
    SUBCASE("max spaces cap") {
        LarsCaps caps;
        caps.sparsity_cap = m;
        caps.max_spaces = 4;
        const LassoPath path = lars_core(c, w, caps);
        CHECK(path.termination == PathTermination::max_spaces);
        std::set<std::vector<int>> distinct;
        for (auto s : path.supports) {
            std::sort(s.begin(), s.end());
            if (!s.empty()) distinct.insert(s);
        }
        CHECK(distinct.size() <= 4);
    }
    SUBCASE("alpha floor with a high relative floor") {
        LarsCaps caps;
        caps.alpha_floor_rel = 0.5;
        caps.sparsity_cap = m;
        caps.max_spaces = 1000;
        const LassoPath path = lars_core(c, w, caps);
        CHECK(path.termination == PathTermination::alpha_floor);
        CHECK(path.breakpoints.back() == doctest::Approx(0.5 * path.alpha0));
    }
    SUBCASE("exact fit on square governing systems") {
        // K <= m with independent columns: the fit becomes exact at alpha -> 0
        const MatrixXd c_small = randn(rng, m, 5);
        const VectorXd w_small = c_small * randn_vec(rng, 5);
        LarsCaps caps;
        caps.sparsity_cap = m;
        caps.max_spaces = 1000;
        const LassoPath path = lars_core(c_small, w_small, caps);
        CHECK(path.termination == PathTermination::exact_fit);
        CHECK((c_small * path.solutions.back() - w_small).norm() <= 1e-8 * w_small.norm());
    }
}

TEST_CASE("path_to_library deduplicates supports in path order") {
    InnerProductSpace space = oracle::random_spd_space(20, 4003);
    CounterRng rng(7);
    const ObservationSpace obs = build_observation(space, randn(rng, 20, 6));
    const Dictionary dict = build_dictionary(space, obs, randn(rng, 20, 8), 8);

    LassoPath path;
    path.alpha0 = 1.0;
    path.breakpoints = {1.0, 0.5, 0.25};
    path.solutions = {VectorXd::Zero(8), VectorXd::Zero(8), VectorXd::Zero(8)};
    path.supports = {{1}, {1}, {1, 4}};
    const Library lib = path_to_library(dict, path);
    REQUIRE(lib.spaces.size() == 2);
    CHECK(lib.spaces[0].support == std::vector<int>{1});
    CHECK(lib.spaces[0].alpha == 1.0);
    CHECK(lib.spaces[1].support == std::vector<int>{1, 4});

    // each member is a U-orthonormal basis of its atom span
    for (const auto& s : lib.spaces) {
        const MatrixXd v = s.basis.columns;
        CHECK((v.transpose() * (space.gram() * v) -
               MatrixXd::Identity(v.cols(), v.cols()))
                  .norm() <= 1e-9);
    }

    LassoPath empty;
    empty.alpha0 = 0.0;
    empty.breakpoints = {0.0};
    empty.solutions = {VectorXd::Zero(8)};
    empty.supports = {{}};
    CHECK(path_to_library(dict, empty).spaces.empty());
}

TEST_CASE("library members respect the sparsity cap") {
    Bench b = thermal_bench(9, 30, "m9", 4004);
    CounterRng rng(8);
    const VectorXd u = b.prob.model->solve_state(
        sample_parameters(b.prob.model->box(), 1, 4005)[0]);
    const LassoPath path = lars_path(b.dict, b.obs.observe(u));
    const Library lib = path_to_library(b.dict, path);
    CHECK(!lib.spaces.empty());
    for (const auto& s : lib.spaces) CHECK(static_cast<int>(s.support.size()) <= 9 / 2);
}

TEST_CASE("dictionary recovery") {
    SUBCASE("identifiable single-atom states are recovered on the nose") {
        // truth equals the snapshot behind the atom with the strongest
        // measurement column: it is a scalar multiple of that atom, lies on
        // the manifold, and no other small support fits the observations
        Bench b = thermal_bench(9, 12, "m9", 4006);
        const InnerProductSpace& space = *b.prob.space;
        int atom = 0;
        for (int k = 1; k < b.dict.K(); ++k)
            if (b.dict.C.col(k).norm() > b.dict.C.col(atom).norm()) atom = k;
        const VectorXd u = b.prob.model->solve_state(b.params[static_cast<std::size_t>(atom)]);
        const VectorXd w = b.obs.observe(u);

        const RecoveryResult rec = dict_recover(b.dict, b.obs, b.off, w);
        CHECK(std::find(rec.support.begin(), rec.support.end(), atom) != rec.support.end());
        CHECK(space.norm(VectorXd(rec.state - u)) <= 1e-8 * space.norm(u));

        // exhaustive search over all supports of size <= 2: only supports
        // containing the atom reproduce the state
        auto support_error = [&](const std::vector<int>& s) {
            MatrixXd gram_s(s.size(), s.size());
            for (std::size_t i = 0; i < s.size(); ++i)
                for (std::size_t j = 0; j < s.size(); ++j)
                    gram_s(static_cast<int>(i), static_cast<int>(j)) =
                        b.dict.gram(s[i], s[j]);
            const MatrixXd coeffs = gram_orthonormal_coeffs(gram_s);
            MatrixXd c_cols(b.obs.m(), s.size());
            MatrixXd a_cols(space.dim(), s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                c_cols.col(static_cast<int>(i)) = b.dict.C.col(s[i]);
                a_cols.col(static_cast<int>(i)) = b.dict.atoms.columns.col(s[i]);
            }
            const PbdwSolve sol = pbdw_solve(MatrixXd(c_cols * coeffs), w);
            const VectorXd state =
                a_cols * (coeffs * sol.background) + b.obs.W.columns * sol.correction;
            return space.norm(VectorXd(state - u)) / space.norm(u);
        };
        double best_without = std::numeric_limits<double>::infinity();
        double best_with = std::numeric_limits<double>::infinity();
        for (int i = 0; i < b.dict.K(); ++i) {
            const double e1 = support_error({i});
            (i == atom ? best_with : best_without) = std::min(
                i == atom ? best_with : best_without, e1);
            for (int j = i + 1; j < b.dict.K(); ++j) {
                const double e2 = support_error({i, j});
                if (i == atom || j == atom)
                    best_with = std::min(best_with, e2);
                else
                    best_without = std::min(best_without, e2);
            }
        }
        CHECK(best_with <= 1e-9);
        CHECK(best_without > 100.0 * std::max(best_with, 1e-12));
    }

    SUBCASE("zero observations with a zero constant rhs give the zero state") {
        auto toy = oracle::toy_model(18, 2, 0, oracle::symmetric_box(2), 4008,
                                     /*zero_const_rhs=*/true);
        CounterRng rng(10);
        const ObservationSpace obs = build_observation(*toy.space, randn(rng, 18, 5));
        const Dictionary dict = build_dictionary(*toy.space, obs, randn(rng, 18, 6), 6);
        const UEmbedding emb = UEmbedding::realize(
            {EmbeddingKind::gaussian, 30, 0, static_cast<int>(toy.space->factor().rows()), 411},
            *toy.space);
        const SketchedOffline off = sketched_offline(*toy.model, obs, dict.atoms, emb);
        const RecoveryResult rec = dict_recover(dict, obs, off, VectorXd::Zero(5));
        CHECK(rec.support.empty());
        CHECK(rec.state.norm() == 0.0);
    }

    SUBCASE("the selected candidate never beats the best in the library") {
        Bench b = thermal_bench(9, 25, "m9", 4009);
        const auto test_params = sample_parameters(b.prob.model->box(), 10, 4010);
        for (const auto& xi : test_params) {
            const VectorXd u = b.prob.model->solve_state(xi);
            const VectorXd w = b.obs.observe(u);
            const DictRecoveryReport rep = dict_recover_full(b.dict, b.obs, b.off, w);
            // every recovery is observation consistent
            CHECK((b.obs.observe(rep.result.state) - w).cwiseAbs().maxCoeff() <=
                  1e-10 * w.norm());
            const Library lib = path_to_library(b.dict, rep.selection.path);
            const RecoveryResult best = best_in_library(lib, b.obs, w, u);
            const double err_selected = b.prob.space->norm(VectorXd(rep.result.state - u));
            const double err_best = b.prob.space->norm(VectorXd(best.state - u));
            CHECK(err_selected >= err_best);
        }
    }
}

TEST_CASE("best_in_library") {
    Bench b = thermal_bench(9, 12, "m9", 4011);
    const VectorXd u = b.prob.model->solve_state(b.params[3]);
    const VectorXd w = b.obs.observe(u);
    const LassoPath path = lars_path(b.dict, w);
    const Library lib = path_to_library(b.dict, path);
    REQUIRE(!lib.spaces.empty());

    SUBCASE("a single-space library returns that space's recovery") {
        Library single;
        single.dict = lib.dict;
        single.spaces = {lib.spaces[0]};
        const RecoveryResult only = best_in_library(single, b.obs, w, u);
        const MatrixXd c_v = [&] {
            MatrixXd cols(b.obs.m(), single.spaces[0].support.size());
            for (std::size_t a = 0; a < single.spaces[0].support.size(); ++a)
                cols.col(static_cast<int>(a)) = b.dict.C.col(single.spaces[0].support[a]);
            return MatrixXd(cols * single.spaces[0].coeffs);
        }();
        const PbdwSolve sol = pbdw_solve(c_v, w);
        CHECK((only.correction_coeffs - sol.correction).norm() <= 1e-14);
    }
    SUBCASE("a library containing the truth recovers it") {
        // truth equals atom 3 up to scaling, so any support containing atom 3
        // with a well-posed cross Gramian recovers it near-exactly
        const VectorXd truth = 1.7 * b.dict.atoms.columns.col(3);
        const VectorXd w_t = b.obs.observe(truth);
        const LassoPath p2 = lars_path(b.dict, w_t);
        const Library lib2 = path_to_library(b.dict, p2);
        bool has_atom = false;
        for (const auto& s : lib2.spaces)
            has_atom |= std::find(s.support.begin(), s.support.end(), 3) != s.support.end();
        REQUIRE(has_atom);
        const RecoveryResult best = best_in_library(lib2, b.obs, w_t, truth);
        CHECK(b.prob.space->norm(VectorXd(best.state - truth)) <=
              1e-8 * b.prob.space->norm(truth));
    }
}

TEST_CASE("perturb_dictionary") {
    Bench b = thermal_bench(9, 8, "m9", 4012);

    SUBCASE("perturbation scale tracks the amplitude") {
        const Dictionary d1 = perturb_dictionary(b.dict, b.obs, 1e-3, 99);
        const Dictionary d2 = perturb_dictionary(b.dict, b.obs, 1e-6, 99);
        const double delta1 = (d1.C - b.dict.C).norm();
        const double delta2 = (d2.C - b.dict.C).norm();
        CHECK(delta1 > 0.0);
        // same draws, amplitude down by 1e3 (re-normalization adds a tiny bend)
        CHECK(delta1 / delta2 == doctest::Approx(1e3).epsilon(1e-2));
    }
    SUBCASE("fixed seeds reproduce bitwise") {
        const Dictionary d1 = perturb_dictionary(b.dict, b.obs, 1e-4, 7);
        const Dictionary d2 = perturb_dictionary(b.dict, b.obs, 1e-4, 7);
        CHECK((d1.atoms.columns - d2.atoms.columns).cwiseAbs().maxCoeff() == 0.0);
        CHECK((d1.C - d2.C).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("all maximal minors become nonzero") {
        // 5 x 8 perturbed measurement matrix: every 5x5 minor is nonzero
        InnerProductSpace space = oracle::random_spd_space(20, 4013);
        CounterRng rng(11);
        const ObservationSpace obs = build_observation(space, randn(rng, 20, 5));
        // a rank-one snapshot family produces many vanishing minors before
        // perturbation
        MatrixXd snaps(20, 8);
        const VectorXd base = randn_vec(rng, 20);
        for (int j = 0; j < 8; ++j) snaps.col(j) = base * (1.0 + 0.5 * j);
        const Dictionary dict = build_dictionary(space, obs, snaps, 8);
        const Dictionary pert = perturb_dictionary(dict, obs, 0.2, 12345);

        std::vector<int> cols = {0, 1, 2, 3, 4};
        int nonzero = 0, total = 0;
        // enumerate all 56 column subsets of size 5
        std::vector<int> idx(5);
        for (idx[0] = 0; idx[0] < 8; ++idx[0])
            for (idx[1] = idx[0] + 1; idx[1] < 8; ++idx[1])
                for (idx[2] = idx[1] + 1; idx[2] < 8; ++idx[2])
                    for (idx[3] = idx[2] + 1; idx[3] < 8; ++idx[3])
                        for (idx[4] = idx[3] + 1; idx[4] < 8; ++idx[4]) {
                            MatrixXd minor(5, 5);
                            for (int a = 0; a < 5; ++a) minor.col(a) = pert.C.col(idx[a]);
                            ++total;
                            if (std::abs(minor.determinant()) > 1e-14) ++nonzero;
                        }
        CHECK(total == 56);
        CHECK(nonzero == 56);
    }
}

TEST_CASE("path debug dump") {
    CounterRng rng(12);
    const MatrixXd c = randn(rng, 10, 20);
    const VectorXd w = randn_vec(rng, 10);
    const LassoPath path = lars_core(c, w);
    const std::string csv = path_debug_csv(c, w, path);
    CHECK(csv.find("alpha,support_size,objective,kkt_residual") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') ==
          static_cast<long>(path.breakpoints.size()) + 1);
}
