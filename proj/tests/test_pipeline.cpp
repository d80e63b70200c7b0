#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "pbdw/io.hpp"
#include "pbdw/pipeline.hpp"

using namespace pbdw;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

RunConfig small_config(const fs::path& dir) {
    RunConfig cfg;
    cfg.problem_name = "thermal_block";
    cfg.n_h = 12;
    cfg.sensor_pattern = "m9";
    cfg.dict_K = 12;
    cfg.snapshot_seed = 7101;
    cfg.embedding_kind = "gaussian";
    cfg.embedding_rows = 60;
    cfg.embedding_seed = 7202;
    cfg.test_count = 6;
    cfg.test_seed = 7303;
    cfg.output_dir = dir.string();
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("configs round-trip losslessly through their file form") {
    RunConfig cfg;
    cfg.problem_name = "advection_diffusion_lite";
    cfg.n_h = 32;
    cfg.kappa = 0.0125;
    cfg.sensor_pattern = "m36";
    cfg.sensor_sigma = 0.03125;
    cfg.dict_K = 77;
    cfg.snapshot_seed = 123456789012345ull;
    cfg.embedding_kind = "composed";
    cfg.embedding_rows = 850;
    cfg.embedding_inner_rows = 16263;
    cfg.embedding_seed = 42;
    cfg.lars_alpha_floor_rel = 1e-11;
    cfg.lars_max_spaces = 17;
    cfg.lars_sparsity_cap = 5;
    cfg.test_count = 500;
    cfg.test_seed = 99;
    cfg.comparators = {"A2_dict"};
    cfg.output_dir = "runs/x";

    const std::string text = cfg.serialize();
    const RunConfig back = RunConfig::parse(text);
    CHECK(back.serialize() == text);
    CHECK(back.problem_name == cfg.problem_name);
    CHECK(back.kappa == cfg.kappa);
    CHECK(back.snapshot_seed == cfg.snapshot_seed);
    CHECK(back.lars_alpha_floor_rel == cfg.lars_alpha_floor_rel);
    CHECK(back.comparators == cfg.comparators);

    // defaults follow the experiment protocol
    CHECK(RunConfig{}.test_count == 500);

    CHECK_THROWS_AS(RunConfig::parse("bogus.key = 3\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("comparators = [\"A9_nope\"]\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("problem.n_h 12\n"), ConfigError);
}

TEST_CASE("offline writes the full artifact set and refuses to clobber") {
    TempDir tmp("pbdw_pipeline_offline");
    RunConfig cfg = small_config(tmp.path / "run");
    cfg.dict_K = 1;  // degenerate single-atom run

    const fs::path dir = run_offline(cfg);
    for (const char* name :
         {"config.toml", "manifest.json", "ru.bin", "op_term_0.bin", "op_term_9.bin",
          "rhs_term_0.bin", "w_basis.bin", "sensors.bin", "atoms.bin", "c_matrix.bin",
          "atom_gram.bin", "pod_modes.bin", "pod_sv.bin", "snap_params.bin", "sketch_op_0.bin",
          "sketch_rhs.bin", "sketch_meta.json"})
        CHECK(fs::exists(dir / name));

    const MatrixXd atoms = pbdw::io::load_dense(dir / "atoms.bin");
    CHECK(atoms.cols() == 1);

    CHECK_THROWS_AS(run_offline(cfg), ConfigError);
    CHECK_NOTHROW(run_offline(cfg, /*force=*/true));
}

TEST_CASE("offline is deterministic in the seeds") {
    TempDir tmp("pbdw_pipeline_det");
    RunConfig cfg = small_config(tmp.path / "a");
    run_offline(cfg);
    cfg.output_dir = (tmp.path / "b").string();
    run_offline(cfg);
    for (const char* name : {"sketch_op_3.bin", "sketch_rhs.bin", "atoms.bin", "c_matrix.bin"})
        CHECK(slurp(tmp.path / "a" / name) == slurp(tmp.path / "b" / name));
}

TEST_CASE("online comparators") {
    TempDir tmp("pbdw_pipeline_online");
    RunConfig cfg = small_config(tmp.path / "run");
    cfg.dict_K = 20;
    cfg.test_count = 8;
    const fs::path dir = run_offline(cfg);
    const ErrorTable table = run_online(dir);

    SUBCASE("summary covers the requested comparators") {
        REQUIRE(table.rows.size() == 3);
        for (const auto& row : table.rows) {
            CHECK(row.K == 20);
            CHECK(row.m == 9);
            CHECK(row.mean_rel <= row.max_rel);
        }
        CHECK(fs::exists(dir / "errors.csv"));
        CHECK(fs::exists(dir / "summary.csv"));
        CHECK(fs::exists(dir / "constants.csv"));
    }

    SUBCASE("the dictionary recovery never beats the best in its library") {
        std::map<int, double> a2, a3;
        for (const auto& s : table.samples) {
            if (s.method == "A2_dict") a2[s.index] = s.rel_err;
            if (s.method == "A3_best") a3[s.index] = s.rel_err;
        }
        REQUIRE(a2.size() == 8);
        REQUIRE(a3.size() == 8);
        for (const auto& [idx, err] : a2) CHECK(err >= a3[idx]);
    }

    SUBCASE("identical seeds reproduce the error table bitwise") {
        const std::string first = slurp(dir / "errors.csv");
        run_online(dir);
        CHECK(slurp(dir / "errors.csv") == first);
    }

    SUBCASE("worker-count does not change the table") {
        const std::string serial = slurp(dir / "errors.csv");
        OnlineOptions opts;
        opts.workers = 3;
        run_online(dir, opts);
        CHECK(slurp(dir / "errors.csv") == serial);
    }
}

TEST_CASE("a test snapshot equal to a dictionary atom is in reach of the library") {
    TempDir tmp("pbdw_pipeline_atom");
    RunConfig cfg = small_config(tmp.path / "run");
    cfg.dict_K = 6;
    cfg.test_count = 1;
    cfg.test_seed = cfg.snapshot_seed;  // first test parameter == first snapshot
    const fs::path dir = run_offline(cfg);
    const ErrorTable table = run_online(dir);
    double a3 = 1.0;
    for (const auto& s : table.samples)
        if (s.method == "A3_best") a3 = s.rel_err;
    CHECK(a3 <= 1e-8);
}

TEST_CASE("no-truth mode reproduces the truth-mode selection from sketches alone") {
    TempDir tmp("pbdw_pipeline_notruth");
    RunConfig cfg = small_config(tmp.path / "run");
    cfg.test_count = 5;
    const fs::path dir = run_offline(cfg);

    const ErrorTable with_truth = run_online(dir);
    OnlineOptions opts;
    opts.no_truth = true;
    const ErrorTable blind = run_online(dir, opts);

    std::map<int, double> surro_truth, surro_blind;
    for (const auto& s : with_truth.samples)
        if (s.method == "A2_dict") surro_truth[s.index] = s.surrogate;
    for (const auto& s : blind.samples) {
        CHECK(s.method == "A2_dict");
        CHECK(std::isnan(s.rel_err));
        surro_blind[s.index] = s.surrogate;
    }
    REQUIRE(surro_blind.size() == 5);
    for (const auto& [idx, v] : surro_blind) CHECK(v == surro_truth[idx]);
    CHECK(blind.rows.empty());
}

TEST_CASE("path debug dumps are emitted on request") {
    TempDir tmp("pbdw_pipeline_dbg");
    RunConfig cfg = small_config(tmp.path / "run");
    cfg.test_count = 2;
    const fs::path dir = run_offline(cfg);
    OnlineOptions opts;
    opts.emit_path_debug = true;
    run_online(dir, opts);
    CHECK(fs::exists(dir / "path_debug" / "sample_0.csv"));
    CHECK(slurp(dir / "path_debug" / "sample_0.csv").rfind("alpha,", 0) == 0);
}

TEST_CASE("online fails cleanly on missing artifacts") {
    TempDir tmp("pbdw_pipeline_missing");
    CHECK_THROWS_AS(run_online(tmp.path / "nope"), std::exception);

    RunConfig cfg = small_config(tmp.path / "run");
    const fs::path dir = run_offline(cfg);
    fs::remove(dir / "atoms.bin");
    CHECK_THROWS_AS(run_online(dir), ArtifactError);
}

TEST_CASE("report merges runs and refuses inconsistent problems") {
    TempDir tmp("pbdw_pipeline_report");
    RunConfig cfg = small_config(tmp.path / "k8");
    cfg.dict_K = 8;
    cfg.test_count = 4;
    run_offline(cfg);
    run_online(tmp.path / "k8");

    cfg.dict_K = 14;
    cfg.output_dir = (tmp.path / "k14").string();
    run_offline(cfg);
    run_online(tmp.path / "k14");

    run_report({tmp.path / "k8", tmp.path / "k14"}, tmp.path / "out");
    const std::string merged = slurp(tmp.path / "out" / "error_vs_K.csv");
    CHECK(merged.rfind("method,m,K,mean_rel_err,max_rel_err", 0) == 0);
    CHECK(merged.find("A2_dict,9,8,") != std::string::npos);
    CHECK(merged.find("A2_dict,9,14,") != std::string::npos);
    CHECK(fs::exists(tmp.path / "out" / "constants_K8.csv"));
    CHECK(fs::exists(tmp.path / "out" / "constants_K14.csv"));

    // constants are monotone: eps nonincreasing, mu nondecreasing
    std::ifstream cf(tmp.path / "out" / "constants_K14.csv");
    std::string line;
    std::getline(cf, line);
    double prev_eps = std::numeric_limits<double>::infinity(), prev_mu = 0.0;
    while (std::getline(cf, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        std::getline(ss, tok, ',');
        const double eps_n = std::stod(tok);
        std::getline(ss, tok, ',');
        std::getline(ss, tok, ',');
        const double mu_n = std::stod(tok);
        CHECK(eps_n <= prev_eps * (1.0 + 1e-12) + 1e-300);
        CHECK(mu_n >= prev_mu * (1.0 - 1e-12));
        prev_eps = eps_n;
        prev_mu = mu_n;
    }

    // a run on a different mesh cannot be merged
    cfg.n_h = 9;
    cfg.output_dir = (tmp.path / "other").string();
    run_offline(cfg);
    run_online(tmp.path / "other");
    CHECK_THROWS_AS(run_report({tmp.path / "k8", tmp.path / "other"}, tmp.path / "out2"),
                    ArtifactError);
}

TEST_CASE("desk-scale offline stays inside the time budget") {
    TempDir tmp("pbdw_pipeline_budget");
    RunConfig cfg;
    cfg.problem_name = "thermal_block";
    cfg.n_h = 33;
    cfg.sensor_pattern = "m36";
    cfg.dict_K = 200;
    cfg.snapshot_seed = 7401;
    cfg.embedding_rows = 100;
    cfg.embedding_seed = 7402;
    cfg.output_dir = (tmp.path / "run").string();

    const auto t0 = std::chrono::steady_clock::now();
    run_offline(cfg);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(seconds < 120.0);
}

TEST_CASE("selftest passes") { CHECK(run_selftest() == 0); }
