// Command line front end: offline precomputation, online recovery over a
// test set, report merging, and a quick selftest.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "pbdw/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kArtifact = 4 };

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const pbdw::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const pbdw::ArgumentError& e) {
        std::fprintf(stderr, "argument error: %s\n", e.what());
        return kConfig;
    } catch (const pbdw::DomainError& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return kConfig;
    } catch (const pbdw::ArtifactError& e) {
        std::fprintf(stderr, "artifact error: %s\n", e.what());
        return kArtifact;
    } catch (const pbdw::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dictionary-based state estimation from linear measurements"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir;
    std::string out_dir = "report";
    std::vector<std::string> run_dirs;
    bool force = false;
    bool no_truth = false;
    bool emit_path_debug = false;
    int workers = 1;
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    int count_override = 0;

    auto* offline = app.add_subcommand("offline", "precompute and persist run artifacts");
    offline->add_option("--config", config_path, "run configuration file")->required();
    offline->add_flag("--force", force, "overwrite an existing run directory");
    offline->add_option("--run-dir", run_dir, "override output.dir from the config");

    auto* online = app.add_subcommand("online", "recover a test set against a run directory");
    online->add_option("--run-dir", run_dir, "offline run directory")->required();
    online
        ->add_option("--seed", seed_override, "override the test seed")
        ->each([&](const std::string&) { seed_given = true; });
    online->add_option("--count", count_override, "override the test sample count");
    online->add_flag("--no-truth", no_truth,
                     "run the dictionary recovery alone from sketched artifacts");
    online->add_flag("--emit-path-debug", emit_path_debug, "dump per-sample homotopy paths");
    online->add_option("--workers", workers, "worker thread count");

    auto* report = app.add_subcommand("report", "merge completed runs into plot-data CSVs");
    report->add_option("runs", run_dirs, "run directories")->required();
    report->add_option("--out", out_dir, "output directory");

    app.add_subcommand("selftest", "run quick property checks");

    CLI11_PARSE(app, argc, argv);

    if (offline->parsed()) {
        return guarded([&] {
            pbdw::RunConfig cfg = pbdw::RunConfig::parse_file(config_path);
            if (!run_dir.empty()) cfg.output_dir = run_dir;
            const auto dir = pbdw::run_offline(cfg, force);
            std::printf("offline artifacts written to %s\n", dir.string().c_str());
            return kOk;
        });
    }
    if (online->parsed()) {
        return guarded([&] {
            pbdw::OnlineOptions opts;
            if (seed_given) opts.test_seed = seed_override;
            if (count_override > 0) opts.test_count = count_override;
            opts.no_truth = no_truth;
            opts.emit_path_debug = emit_path_debug;
            opts.workers = workers;
            const pbdw::ErrorTable table = pbdw::run_online(run_dir, opts);
            std::printf("%s", table.summary_csv().c_str());
            std::printf("wrote errors.csv / summary.csv under %s\n", run_dir.c_str());
            return kOk;
        });
    }
    if (report->parsed()) {
        return guarded([&] {
            std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
            pbdw::run_report(dirs, out_dir);
            std::printf("report written to %s\n", out_dir.c_str());
            return kOk;
        });
    }
    return guarded([&] { return pbdw::run_selftest() == 0 ? kOk : kNumerical; });
}
