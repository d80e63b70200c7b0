#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pbdw/dictionary.hpp"
#include "pbdw/problems.hpp"

namespace pbdw {

/// Flat key = value run configuration; round-trips losslessly through its
/// file form (fixed key order, %.17g floats).
struct RunConfig {
    std::string problem_name = "thermal_block";
    int n_h = 33;
    double kappa = 0.01;
    std::string sensor_pattern = "m36";
    double sensor_sigma = 0.015625;
    int dict_K = 200;
    std::uint64_t snapshot_seed = 101;
    std::string embedding_kind = "gaussian";  // gaussian | psrht | composed | exact
    int embedding_rows = 100;
    int embedding_inner_rows = 0;
    std::uint64_t embedding_seed = 202;
    double lars_alpha_floor_rel = 1e-10;
    int lars_max_spaces = 0;   // 0: ceil(K/10)
    int lars_sparsity_cap = 0; // 0: floor(m/2)
    int test_count = 500;
    std::uint64_t test_seed = 303;
    std::vector<std::string> comparators = {"A1_pod", "A2_dict", "A3_best"};
    std::string output_dir = "runs/run";

    void validate() const;
    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig parse_file(const std::filesystem::path& path);
    bool has_comparator(const std::string& name) const;
};

struct ErrorTable {
    struct Row {
        std::string method;
        int K = 0;
        int m = 0;
        double mean_rel = 0.0;
        double max_rel = 0.0;
    };
    struct Sample {
        int index = 0;
        std::string method;
        double rel_err = 0.0;
        double surrogate = 0.0;
        int support_size = 0;
        double alpha = 0.0;
        double mu = 0.0;
        std::string termination;
    };
    std::vector<Row> rows;
    std::vector<Sample> samples;

    std::string summary_csv() const;
    std::string samples_csv() const;
};

struct OnlineOptions {
    std::optional<std::uint64_t> test_seed;  // overrides the config seed
    std::optional<int> test_count;
    bool no_truth = false;
    bool emit_path_debug = false;
    int workers = 1;
};

/// Offline stage: snapshots, dictionary, POD, observation basis, sketched
/// affine blocks, all persisted with manifests under the run directory.
/// Refuses an existing non-empty directory unless force is set.
std::filesystem::path run_offline(const RunConfig& config, bool force = false);

/// Online stage: draws the test set, runs the requested comparators per
/// sample, writes errors.csv / summary.csv (and constants.csv when POD
/// constants are computable), returns the table.
ErrorTable run_online(const std::filesystem::path& run_dir, const OnlineOptions& opts = {});

/// Merge completed runs into plot-data CSVs (error vs K per method and m,
/// stability constant curves). Refuses runs with inconsistent problems.
void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir);

/// Quick property checks; returns the number of failures.
int run_selftest();

}  // namespace pbdw
