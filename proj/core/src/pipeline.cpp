#include "pbdw/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "pbdw/io.hpp"
#include "pbdw/rng.hpp"

namespace pbdw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_u64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
    return buf;
}

std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quote = !in_quote;
        if (line[i] == '#' && !in_quote) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s, const std::string& key) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"')
        throw ConfigError("expected a quoted string for key '" + key + "'");
    return s.substr(1, s.size() - 2);
}

std::vector<std::string> parse_string_list(const std::string& s, const std::string& key) {
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw ConfigError("expected a [\"a\", \"b\"] list for key '" + key + "'");
    std::vector<std::string> out;
    std::string inner = s.substr(1, s.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(unquote(item, key));
    }
    return out;
}

long long parse_int(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("expected an integer for key '" + key + "', got '" + s + "'");
    }
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("expected an unsigned integer for key '" + key + "', got '" + s + "'");
    }
}

double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("expected a number for key '" + key + "', got '" + s + "'");
    }
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

EmbeddingKind embedding_kind_from(const std::string& s) {
    if (s == "gaussian") return EmbeddingKind::gaussian;
    if (s == "psrht") return EmbeddingKind::psrht;
    if (s == "composed") return EmbeddingKind::composed;
    throw ConfigError("unknown embedding kind: " + s);
}

}  // namespace

void RunConfig::validate() const {
    if (problem_name != "thermal_block" && problem_name != "advection_diffusion_lite")
        throw ConfigError("unknown problem: " + problem_name);
    if (n_h < 2) throw ConfigError("problem.n_h must be at least 2");
    if (dict_K < 1) throw ConfigError("dictionary.K must be positive");
    if (test_count < 1) throw ConfigError("test.count must be positive");
    if (embedding_kind != "exact") embedding_kind_from(embedding_kind);
    if (embedding_kind != "exact" && embedding_rows < 1)
        throw ConfigError("embedding.rows must be positive");
    if (embedding_kind == "composed" && embedding_inner_rows < 1)
        throw ConfigError("embedding.inner_rows must be positive for composed embeddings");
    if (comparators.empty()) throw ConfigError("comparator list is empty");
    for (const auto& c : comparators)
        if (c != "A1_pod" && c != "A2_dict" && c != "A3_best")
            throw ConfigError("unknown comparator: " + c);
    if (lars_alpha_floor_rel < 0.0 || lars_max_spaces < 0 || lars_sparsity_cap < 0)
        throw ConfigError("lars caps must be nonnegative");
    if (output_dir.empty()) throw ConfigError("output.dir must be set");
}

bool RunConfig::has_comparator(const std::string& name) const {
    return std::find(comparators.begin(), comparators.end(), name) != comparators.end();
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "problem.name = \"" << problem_name << "\"\n";
    os << "problem.n_h = " << n_h << "\n";
    os << "problem.kappa = " << fmt(kappa) << "\n";
    os << "sensors.pattern = \"" << sensor_pattern << "\"\n";
    os << "sensors.sigma = " << fmt(sensor_sigma) << "\n";
    os << "dictionary.K = " << dict_K << "\n";
    os << "snapshots.seed = " << fmt_u64(snapshot_seed) << "\n";
    os << "embedding.kind = \"" << embedding_kind << "\"\n";
    os << "embedding.rows = " << embedding_rows << "\n";
    os << "embedding.inner_rows = " << embedding_inner_rows << "\n";
    os << "embedding.seed = " << fmt_u64(embedding_seed) << "\n";
    os << "lars.alpha_floor_rel = " << fmt(lars_alpha_floor_rel) << "\n";
    os << "lars.max_spaces = " << lars_max_spaces << "\n";
    os << "lars.sparsity_cap = " << lars_sparsity_cap << "\n";
    os << "test.count = " << test_count << "\n";
    os << "test.seed = " << fmt_u64(test_seed) << "\n";
    os << "comparators = [";
    for (std::size_t i = 0; i < comparators.size(); ++i)
        os << (i ? ", " : "") << "\"" << comparators[i] << "\"";
    os << "]\n";
    os << "output.dir = \"" << output_dir << "\"\n";
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "problem.name") cfg.problem_name = unquote(val, key);
        else if (key == "problem.n_h") cfg.n_h = static_cast<int>(parse_int(val, key));
        else if (key == "problem.kappa") cfg.kappa = parse_double(val, key);
        else if (key == "sensors.pattern") cfg.sensor_pattern = unquote(val, key);
        else if (key == "sensors.sigma") cfg.sensor_sigma = parse_double(val, key);
        else if (key == "dictionary.K") cfg.dict_K = static_cast<int>(parse_int(val, key));
        else if (key == "snapshots.seed") cfg.snapshot_seed = parse_u64(val, key);
        else if (key == "embedding.kind") cfg.embedding_kind = unquote(val, key);
        else if (key == "embedding.rows") cfg.embedding_rows = static_cast<int>(parse_int(val, key));
        else if (key == "embedding.inner_rows")
            cfg.embedding_inner_rows = static_cast<int>(parse_int(val, key));
        else if (key == "embedding.seed") cfg.embedding_seed = parse_u64(val, key);
        else if (key == "lars.alpha_floor_rel") cfg.lars_alpha_floor_rel = parse_double(val, key);
        else if (key == "lars.max_spaces")
            cfg.lars_max_spaces = static_cast<int>(parse_int(val, key));
        else if (key == "lars.sparsity_cap")
            cfg.lars_sparsity_cap = static_cast<int>(parse_int(val, key));
        else if (key == "test.count") cfg.test_count = static_cast<int>(parse_int(val, key));
        else if (key == "test.seed") cfg.test_seed = parse_u64(val, key);
        else if (key == "comparators") cfg.comparators = parse_string_list(val, key);
        else if (key == "output.dir") cfg.output_dir = unquote(val, key);
        else throw ConfigError("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse(os.str());
}

std::string ErrorTable::summary_csv() const {
    std::ostringstream os;
    os << "method,K,m,mean_rel_err,max_rel_err\n";
    for (const auto& r : rows)
        os << r.method << "," << r.K << "," << r.m << "," << fmt(r.mean_rel) << ","
           << fmt(r.max_rel) << "\n";
    return os.str();
}

std::string ErrorTable::samples_csv() const {
    std::ostringstream os;
    os << "sample,method,rel_err,surrogate,support_size,alpha,mu,termination\n";
    for (const auto& s : samples)
        os << s.index << "," << s.method << "," << fmt(s.rel_err) << "," << fmt(s.surrogate)
           << "," << s.support_size << "," << fmt(s.alpha) << "," << fmt(s.mu) << ","
           << s.termination << "\n";
    return os.str();
}

namespace {

Problem build_problem(const RunConfig& cfg) {
    if (cfg.problem_name == "thermal_block") return thermal_block(cfg.n_h);
    return advection_diffusion_lite(cfg.n_h, cfg.kappa);
}

json box_to_json(const ParameterBox& box) {
    json j{{"lo", json::array()}, {"hi", json::array()}, {"law", json::array()}};
    for (const auto& iv : box.intervals) {
        j["lo"].push_back(iv.lo);
        j["hi"].push_back(iv.hi);
    }
    for (auto law : box.laws) j["law"].push_back(static_cast<int>(law));
    return j;
}

ParameterBox box_from_json(const json& j) {
    ParameterBox box;
    const auto lo = j.at("lo").get<std::vector<double>>();
    const auto hi = j.at("hi").get<std::vector<double>>();
    const auto law = j.at("law").get<std::vector<int>>();
    for (std::size_t q = 0; q < lo.size(); ++q) {
        box.intervals.push_back({lo[q], hi[q]});
        box.laws.push_back(static_cast<SamplingLaw>(law[q]));
    }
    return box;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw ArtifactError("cannot write " + path.string());
    f << text;
}

json load_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ArtifactError("missing artifact: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ArtifactError("corrupt JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace

fs::path run_offline(const RunConfig& config, bool force) {
    config.validate();
    const fs::path dir = config.output_dir;
    if (fs::exists(dir) && !fs::is_empty(dir) && !force)
        throw ConfigError("run directory " + dir.string() +
                          " exists and is not empty (use --force to overwrite)");
    fs::create_directories(dir);

    Problem prob = build_problem(config);
    const InnerProductSpace& space = *prob.space;
    const AffineModel& model = *prob.model;

    const SensorSpec spec = sensor_pattern(config.sensor_pattern, config.sensor_sigma);
    const MatrixXd ells = sensors_radial(space, prob.mesh, spec);
    const ObservationSpace obs = build_observation(space, ells);

    const auto params = sample_parameters(model.box(), config.dict_K, config.snapshot_seed);
    MatrixXd snaps(space.dim(), config.dict_K);
    for (int i = 0; i < config.dict_K; ++i) snaps.col(i) = model.solve_state(params[i]);

    const Dictionary dict = build_dictionary(space, obs, snaps, config.dict_K, &params);
    const int n_pod = std::min(obs.m(), static_cast<int>(snaps.cols()));
    const PodResult pods = pod(space, BasisMatrix{snaps, false}, n_pod);

    // persist model and estimator artifacts
    io::save_sparse(dir / "ru.bin", space.gram(), "gram matrix");
    for (std::size_t i = 0; i < model.op_terms().size(); ++i)
        io::save_sparse(dir / ("op_term_" + std::to_string(i) + ".bin"), model.op_terms()[i],
                        "affine operator term");
    for (std::size_t j = 0; j < model.rhs_terms().size(); ++j)
        io::save_vector(dir / ("rhs_term_" + std::to_string(j) + ".bin"), model.rhs_terms()[j],
                        "affine rhs term");
    io::save_dense(dir / "w_basis.bin", obs.W.columns, "observation basis");
    io::save_dense(dir / "sensors.bin", obs.functionals, "sensor functionals");
    io::save_dense(dir / "atoms.bin", dict.atoms.columns, "dictionary atoms");
    io::save_dense(dir / "c_matrix.bin", dict.C, "measurement matrix");
    io::save_dense(dir / "atom_gram.bin", dict.gram, "atom gram matrix");
    io::save_dense(dir / "pod_modes.bin", pods.modes.columns, "pod modes");
    io::save_vector(dir / "pod_sv.bin", pods.singular_values, "pod singular values");
    MatrixXd par_mat(model.box().dim(), params.size());
    for (std::size_t i = 0; i < params.size(); ++i) par_mat.col(static_cast<int>(i)) = params[i];
    io::save_dense(dir / "snap_params.bin", par_mat, "snapshot parameters");

    json embedding_manifest;
    if (config.embedding_kind == "exact") {
        embedding_manifest = {{"kind", "exact"}};
    } else {
        EmbeddingSpec espec;
        espec.kind = embedding_kind_from(config.embedding_kind);
        espec.rows = config.embedding_rows;
        espec.inner_rows = config.embedding_inner_rows;
        espec.input_dim = static_cast<int>(space.factor().rows());
        espec.seed = config.embedding_seed;
        const UEmbedding emb = UEmbedding::realize(espec, space);
        const SketchedOffline off = sketched_offline(model, obs, dict.atoms, emb);
        off.save(dir);
        embedding_manifest = {{"kind", config.embedding_kind},
                              {"rows", espec.rows},
                              {"inner_rows", espec.inner_rows},
                              {"seed", espec.seed},
                              {"input_dim", espec.input_dim},
                              {"padded_length",
                               config.embedding_kind == "gaussian" ? 0
                                                                   : next_pow2(espec.input_dim)}};
    }

    json manifest{
        {"problem",
         {{"name", prob.name},
          {"n_h", prob.n_h},
          {"kappa", prob.kappa},
          {"N", space.dim()},
          {"block_layout", prob.name == "thermal_block" ? "3x3-row-major" : "none"},
          {"m_B", model.num_op_terms()},
          {"m_f", model.num_rhs_terms()}}},
        {"sensors",
         {{"pattern", config.sensor_pattern}, {"sigma", config.sensor_sigma}, {"m", obs.m()}}},
        {"dictionary", {{"K", dict.K()}, {"skipped", dict.skipped_snapshots}}},
        {"pod", {{"n_modes", pods.modes.cols()}}},
        {"embedding", embedding_manifest},
        {"seeds", {{"snapshots", config.snapshot_seed}, {"test", config.test_seed}}},
        {"test", {{"count", config.test_count}}},
        {"box", box_to_json(model.box())}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(dir / "config.toml", config.serialize());
    return dir;
}

namespace {

struct LoadedRun {
    RunConfig config;
    json manifest;
    std::unique_ptr<InnerProductSpace> space;
    std::unique_ptr<AffineModel> model;
    ObservationSpace obs;
    Dictionary dict;
    PodResult pods;
    std::unique_ptr<SketchedOffline> off;  // null in exact-surrogate mode
};

LoadedRun load_run(const fs::path& dir) {
    LoadedRun run;
    run.config = RunConfig::parse_file(dir / "config.toml");
    run.manifest = load_json(dir / "manifest.json");

    run.space = std::make_unique<InnerProductSpace>(
        InnerProductSpace::from_gram(io::load_sparse(dir / "ru.bin")));
    const InnerProductSpace& space = *run.space;

    const int m_b = run.manifest.at("problem").at("m_B").get<int>();
    const int m_f = run.manifest.at("problem").at("m_f").get<int>();
    std::vector<SpMat> op_terms;
    for (int i = 0; i <= m_b; ++i)
        op_terms.push_back(io::load_sparse(dir / ("op_term_" + std::to_string(i) + ".bin")));
    std::vector<VectorXd> rhs_terms;
    for (int j = 0; j <= m_f; ++j)
        rhs_terms.push_back(io::load_vector(dir / ("rhs_term_" + std::to_string(j) + ".bin")));
    run.model = std::make_unique<AffineModel>(AffineModel::with_identity_theta(
        &space, std::move(op_terms), std::move(rhs_terms),
        box_from_json(run.manifest.at("box"))));

    run.obs.space = &space;
    run.obs.W.columns = io::load_dense(dir / "w_basis.bin");
    run.obs.W.u_orthonormal = true;
    run.obs.functionals = io::load_dense(dir / "sensors.bin");

    run.dict.space = &space;
    run.dict.atoms.columns = io::load_dense(dir / "atoms.bin");
    run.dict.C = io::load_dense(dir / "c_matrix.bin");
    run.dict.gram = io::load_dense(dir / "atom_gram.bin");

    run.pods.modes.columns = io::load_dense(dir / "pod_modes.bin");
    run.pods.modes.u_orthonormal = true;
    run.pods.singular_values = io::load_vector(dir / "pod_sv.bin");

    if (run.manifest.at("embedding").at("kind").get<std::string>() != "exact")
        run.off = std::make_unique<SketchedOffline>(SketchedOffline::load(dir));
    return run;
}

struct SampleOutput {
    std::vector<ErrorTable::Sample> rows;
    VectorXd pod_proj_errors;  // absolute U-norm projection error per n
    std::string path_debug;
};

}  // namespace

ErrorTable run_online(const fs::path& run_dir, const OnlineOptions& opts) {
    LoadedRun run = load_run(run_dir);
    const RunConfig& cfg = run.config;
    const InnerProductSpace& space = *run.space;
    const AffineModel& model = *run.model;

    const std::uint64_t test_seed = opts.test_seed.value_or(cfg.test_seed);
    const int test_count = opts.test_count.value_or(cfg.test_count);
    const bool exact_mode = run.off == nullptr;
    if (opts.no_truth && exact_mode)
        throw ConfigError("--no-truth requires sketched surrogates (embedding.kind != exact)");

    const bool want_a1 = cfg.has_comparator("A1_pod") && !opts.no_truth;
    const bool want_a2 = cfg.has_comparator("A2_dict") || opts.no_truth;
    const bool want_a3 = cfg.has_comparator("A3_best") && !opts.no_truth;

    LarsCaps caps;
    caps.alpha_floor_rel = cfg.lars_alpha_floor_rel;
    caps.max_spaces = cfg.lars_max_spaces;
    caps.sparsity_cap = cfg.lars_sparsity_cap;

    const auto test_params = sample_parameters(model.box(), test_count, test_seed);
    const int n_pod = run.pods.modes.cols();
    const MatrixXd c_pod =
        run.obs.W.columns.transpose() * (space.gram() * run.pods.modes.columns);

    std::vector<SampleOutput> outputs(static_cast<std::size_t>(test_count));

    auto process = [&](int i) {
        SampleOutput& out = outputs[static_cast<std::size_t>(i)];
        const VectorXd u = model.solve_state(test_params[static_cast<std::size_t>(i)]);
        const double unorm = space.norm(u);
        const VectorXd w = run.obs.observe(u);

        if (opts.no_truth) {
            // recovery from sketched artifacts only; no state is materialized
            DictSelection sel = dict_select(run.dict.C, run.dict.gram, *run.off, w, caps);
            ErrorTable::Sample s;
            s.index = i;
            s.method = "A2_dict";
            s.rel_err = std::numeric_limits<double>::quiet_NaN();
            s.termination = to_string(sel.path.termination);
            if (!sel.fallback) {
                const auto& cand = sel.candidates[static_cast<std::size_t>(sel.selected)];
                s.surrogate = cand.surrogate;
                s.support_size = static_cast<int>(cand.support.size());
                s.alpha = cand.alpha;
                s.mu = cand.mu;
            }
            out.rows.push_back(std::move(s));
            if (opts.emit_path_debug)
                out.path_debug = path_debug_csv(run.dict.C, w, sel.path);
            return;
        }

        if (want_a2 || want_a3) {
            DictRecoveryReport rep;
            if (exact_mode) {
                auto surrogate = [&](const SparseCoeffs& a) {
                    VectorXd state = run.obs.W.columns * a.w_block;
                    for (const auto& [idx, val] : a.dict_entries)
                        state += val * run.dict.atoms.columns.col(idx);
                    return surrogate_exact(model, state).value;
                };
                rep = dict_recover_full(run.dict, run.obs, surrogate, w, caps);
            } else {
                rep = dict_recover_full(run.dict, run.obs, *run.off, w, caps);
            }

            if (want_a2) {
                ErrorTable::Sample s;
                s.index = i;
                s.method = "A2_dict";
                s.rel_err = space.norm(VectorXd(rep.result.state - u)) / unorm;
                s.surrogate = rep.result.surrogate_value;
                s.support_size = static_cast<int>(rep.result.support.size());
                s.alpha = rep.result.alpha;
                s.mu = rep.result.mu_of_space;
                s.termination = to_string(rep.selection.path.termination);
                out.rows.push_back(std::move(s));
            }
            if (want_a3) {
                ErrorTable::Sample s;
                s.index = i;
                s.method = "A3_best";
                s.termination = to_string(rep.selection.path.termination);
                bool found = false;
                for (std::size_t c = 0; c < rep.candidates.size(); ++c) {
                    if (rep.selection.candidates[c].skipped) continue;
                    const double err =
                        space.norm(VectorXd(rep.candidates[c].state - u)) / unorm;
                    if (!found || err < s.rel_err) {
                        s.rel_err = err;
                        s.surrogate = rep.selection.candidates[c].surrogate;
                        s.support_size =
                            static_cast<int>(rep.selection.candidates[c].support.size());
                        s.alpha = rep.selection.candidates[c].alpha;
                        s.mu = rep.selection.candidates[c].mu;
                        found = true;
                    }
                }
                if (!found) {  // all candidates ill-posed: same fallback as A2
                    s.rel_err = space.norm(VectorXd(rep.result.state - u)) / unorm;
                    s.support_size = 0;
                }
                out.rows.push_back(std::move(s));
            }
            if (opts.emit_path_debug)
                out.path_debug = path_debug_csv(run.dict.C, w, rep.selection.path);
        }

        if (want_a1) {
            ErrorTable::Sample s;
            s.index = i;
            s.method = "A1_pod";
            bool found = false;
            for (int n = 1; n <= n_pod; ++n) {
                PbdwSolve sol;
                try {
                    sol = pbdw_solve(c_pod.leftCols(n), w);
                } catch (const IllPosedError&) {
                    continue;
                }
                VectorXd state = run.obs.W.columns * sol.correction;
                state += run.pods.modes.columns.leftCols(n) * sol.background;
                const double err = space.norm(VectorXd(state - u)) / unorm;
                if (!found || err < s.rel_err) {
                    s.rel_err = err;
                    s.support_size = n;
                    s.mu = 1.0 / sol.sigma_min;
                    found = true;
                }
            }
            if (!found) {
                s.rel_err = space.norm(VectorXd(run.obs.W.columns * w - u)) / unorm;
                s.support_size = 0;
            }
            out.rows.push_back(std::move(s));

            // projection errors feed the stability constants table
            out.pod_proj_errors.resize(n_pod);
            VectorXd resid = u;
            const VectorXd coords =
                run.pods.modes.columns.transpose() * (space.gram() * u);
            for (int n = 0; n < n_pod; ++n) {
                resid -= coords(n) * run.pods.modes.columns.col(n);
                out.pod_proj_errors(n) = space.norm(resid);
            }
        }
    };

    const int workers = std::max(1, opts.workers);
    if (workers == 1) {
        for (int i = 0; i < test_count; ++i) process(i);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (test_count + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const int begin = t * chunk;
            const int end = std::min(test_count, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, begin, end] {
                for (int i = begin; i < end; ++i) process(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    // assemble the table in sample order so output bytes are worker-count independent
    ErrorTable table;
    for (const auto& out : outputs)
        for (const auto& s : out.rows) table.samples.push_back(s);

    const int m = run.obs.m();
    for (const std::string method : {"A1_pod", "A2_dict", "A3_best"}) {
        double sum = 0.0, mx = 0.0;
        int count = 0;
        for (const auto& s : table.samples) {
            if (s.method != method || std::isnan(s.rel_err)) continue;
            sum += s.rel_err;
            mx = std::max(mx, s.rel_err);
            ++count;
        }
        if (count > 0)
            table.rows.push_back({method, run.dict.K(), m, sum / count, mx});
    }

    write_text(run_dir / "errors.csv", table.samples_csv());
    write_text(run_dir / "summary.csv", table.summary_csv());

    if (want_a1) {
        std::ostringstream os;
        os << "n,eps_n,beta_n,mu_n,product\n";
        for (int n = 1; n <= n_pod; ++n) {
            double eps_n = 0.0;
            for (const auto& out : outputs)
                if (out.pod_proj_errors.size() >= n)
                    eps_n = std::max(eps_n, out.pod_proj_errors(n - 1));
            BasisMatrix v_n{run.pods.modes.columns.leftCols(n), true};
            const auto [beta, mu] = stability_constants(run.obs, v_n);
            os << n << "," << fmt(eps_n) << "," << fmt(beta) << "," << fmt(mu) << ","
               << fmt(eps_n * mu) << "\n";
        }
        write_text(run_dir / "constants.csv", os.str());
    }

    if (opts.emit_path_debug) {
        fs::create_directories(run_dir / "path_debug");
        for (int i = 0; i < test_count; ++i)
            if (!outputs[static_cast<std::size_t>(i)].path_debug.empty())
                write_text(run_dir / "path_debug" / ("sample_" + std::to_string(i) + ".csv"),
                           outputs[static_cast<std::size_t>(i)].path_debug);
    }
    return table;
}

void run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    if (run_dirs.empty()) throw ArgumentError("report: no run directories given");

    json reference;
    struct Entry {
        std::string method;
        int m, K;
        double mean_rel, max_rel;
    };
    std::vector<Entry> entries;
    std::vector<std::pair<int, std::string>> constants;  // (K, csv body)

    for (const auto& dir : run_dirs) {
        const json manifest = load_json(dir / "manifest.json");
        json key{{"problem", manifest.at("problem")},
                 {"sensors", manifest.at("sensors")},
                 {"test", manifest.at("test")},
                 {"seeds", manifest.at("seeds")}};
        if (reference.is_null())
            reference = key;
        else if (reference != key)
            throw ArtifactError("report: inconsistent problem manifests between runs (" +
                                dir.string() + " differs)");
        const int K = manifest.at("dictionary").at("K").get<int>();

        std::ifstream f(dir / "summary.csv");
        if (!f) throw ArtifactError("report: missing summary.csv in " + dir.string());
        std::string line;
        std::getline(f, line);  // header
        while (std::getline(f, line)) {
            if (trim(line).empty()) continue;
            std::stringstream ss(line);
            Entry e;
            std::string tok;
            std::getline(ss, e.method, ',');
            std::getline(ss, tok, ',');
            e.K = static_cast<int>(parse_int(tok, "summary K"));
            std::getline(ss, tok, ',');
            e.m = static_cast<int>(parse_int(tok, "summary m"));
            std::getline(ss, tok, ',');
            e.mean_rel = parse_double(tok, "summary mean");
            std::getline(ss, tok, ',');
            e.max_rel = parse_double(tok, "summary max");
            entries.push_back(std::move(e));
        }

        std::ifstream cf(dir / "constants.csv");
        if (cf) {
            std::ostringstream body;
            body << cf.rdbuf();
            constants.emplace_back(K, body.str());
        }
    }

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.method != b.method) return a.method < b.method;
        if (a.K != b.K) return a.K < b.K;
        return a.m < b.m;
    });

    fs::create_directories(out_dir);
    std::ostringstream os;
    os << "method,m,K,mean_rel_err,max_rel_err\n";
    for (const auto& e : entries)
        os << e.method << "," << e.m << "," << e.K << "," << fmt(e.mean_rel) << ","
           << fmt(e.max_rel) << "\n";
    write_text(out_dir / "error_vs_K.csv", os.str());

    for (const auto& [K, body] : constants)
        write_text(out_dir / ("constants_K" + std::to_string(K) + ".csv"), body);
}

namespace {

InnerProductSpace random_spd_space(int n, std::uint64_t seed) {
    CounterRng rng(seed);
    MatrixXd a(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) a(i, j) = rng.normal();
    MatrixXd g = a.transpose() * a / n + 0.5 * MatrixXd::Identity(n, n);
    return InnerProductSpace::from_gram(g.sparseView());
}

}  // namespace

int run_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? " ok " : "FAIL", name);
        if (!ok) ++failures;
    };

    {
        const int n = 40;
        InnerProductSpace space = random_spd_space(n, 11);
        CounterRng rng(12);
        MatrixXd raw(n, 5);
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < n; ++i) raw(i, j) = rng.normal();
        auto ortho = u_orthonormalize(space, BasisMatrix{raw, false});
        VectorXd u(n);
        for (int i = 0; i < n; ++i) u(i) = rng.normal();
        const VectorXd pu = project(space, ortho.basis, u);
        const double lhs = space.norm(u) * space.norm(u);
        const double rhs = space.norm(pu) * space.norm(pu) +
                           space.norm(VectorXd(u - pu)) * space.norm(VectorXd(u - pu));
        check("u-geometry: Pythagoras identity", std::abs(lhs - rhs) <= 1e-10 * lhs);
        VectorXd ell(n);
        for (int i = 0; i < n; ++i) ell(i) = rng.normal();
        check("u-geometry: dual norm equals Riesz representer norm",
              std::abs(space.dual_norm(ell) - space.norm(space.riesz(ell))) <=
                  1e-10 * space.dual_norm(ell));
    }
    {
        const int n = 64;
        SpMat eye(n, n);
        eye.setIdentity();
        InnerProductSpace space = InnerProductSpace::from_gram(eye);
        EmbeddingSpec spec{EmbeddingKind::gaussian, 50, 0, n, 77};
        UEmbedding e1 = UEmbedding::realize(spec, space);
        UEmbedding e2 = UEmbedding::realize(spec, space);
        VectorXd v = VectorXd::LinSpaced(n, -1.0, 2.0);
        check("sketch: determinism is bitwise", (e1.sketch_primal(v) - e2.sketch_primal(v))
                                                        .cwiseAbs()
                                                        .maxCoeff() == 0.0);
        EmbeddingSpec pspec{EmbeddingKind::psrht, 16, 0, n, 78};
        UEmbedding ep = UEmbedding::realize(pspec, space);
        VectorXd basis_vec = VectorXd::Zero(n);
        basis_vec(0) = 1.0;
        const VectorXd se = ep.sketch_primal(basis_vec);
        const double want = 1.0 / 4.0;  // 1/sqrt(k)
        check("sketch: psrht unit-vector rows have magnitude 1/sqrt(k)",
              (se.cwiseAbs().array() - want).abs().maxCoeff() <= 1e-14);
    }
    {
        Problem prob = thermal_block(6);
        CounterRng rng(13);
        VectorXd v(prob.space->dim());
        for (int i = 0; i < v.size(); ++i) v(i) = rng.normal();
        const auto xi = sample_parameters(prob.model->box(), 1, 21)[0];
        const SeparatedResidual sr = prob.model->separated(v);
        auto [b, f] = prob.model->assemble(xi);
        const VectorXd direct = b * v - f;
        const VectorXd via = sr.G * prob.model->theta_stacked(xi) - sr.g;
        check("model: separated residual identity",
              (via - direct).norm() <= 1e-12 * direct.norm());
    }
    {
        ParameterBox box;
        box.intervals = {{0.0, 1.0}};
        box.laws = {SamplingLaw::uniform};
        MatrixXd a(1, 1);
        a(0, 0) = 1.0;
        VectorXd b(1);
        b(0) = 5.0;
        const BoxLsResult r = box_ls_solve(a, b, box);
        check("box-ls: clamps to the active bound",
              std::abs(r.theta(0) - 1.0) <= 1e-12 && std::abs(r.value - 4.0) <= 1e-12);
    }
    {
        CounterRng rng(14);
        MatrixXd c(20, 60);
        for (int j = 0; j < 60; ++j)
            for (int i = 0; i < 20; ++i) c(i, j) = rng.normal();
        VectorXd w(20);
        for (int i = 0; i < 20; ++i) w(i) = rng.normal();
        const LassoPath path = lars_core(c, w);
        bool kkt_ok = !path.breakpoints.empty();
        double prev_fit = std::numeric_limits<double>::infinity();
        bool fit_monotone = true;
        for (std::size_t j = 0; j < path.breakpoints.size(); ++j) {
            const VectorXd corr = c.transpose() * (w - c * path.solutions[j]);
            for (int i = 0; i < 60; ++i) {
                const double x = path.solutions[j](i);
                const double tol = 1e-8 * path.alpha0;
                if (x != 0.0 && std::abs(corr(i) - path.breakpoints[j] * (x > 0 ? 1 : -1)) > tol)
                    kkt_ok = false;
                if (x == 0.0 && std::abs(corr(i)) > path.breakpoints[j] + tol) kkt_ok = false;
            }
            const double fit = (c * path.solutions[j] - w).norm();
            if (fit > prev_fit + 1e-10) fit_monotone = false;
            prev_fit = fit;
        }
        check("lars: every breakpoint is KKT-certified", kkt_ok);
        check("lars: data fit is monotone along the path", fit_monotone);
    }
    {
        InnerProductSpace space = random_spd_space(40, 15);
        CounterRng rng(16);
        MatrixXd sensors(40, 8), vcols(40, 4);
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 40; ++i) sensors(i, j) = rng.normal();
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 40; ++i) vcols(i, j) = rng.normal();
        const ObservationSpace obs = build_observation(space, sensors);
        auto vb = u_orthonormalize(space, BasisMatrix{vcols, false});
        VectorXd coeff(4);
        for (int i = 0; i < 4; ++i) coeff(i) = rng.normal();
        const VectorXd u = vb.basis.columns * coeff;
        const RecoveryResult rec = pbdw_recover(obs, vb.basis, obs.observe(u));
        check("pbdw: member of the background space is recovered exactly",
              space.norm(VectorXd(rec.state - u)) <= 1e-9 * space.norm(u));
    }
    std::printf("%d failure(s)\n", failures);
    return failures;
}

}  // namespace pbdw
