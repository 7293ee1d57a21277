#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xdcl/trainer.hpp"

namespace xdcl {

/// Where the samples come from: a feature table on disk, or the
/// synthetic generator when no path is given.
struct DataConfig {
    std::string features_path;
    SyntheticConfig synthetic;

    bool is_synthetic() const { return features_path.empty(); }
};

/// One experiment grid: methods x held-out domains x seeds, sharing a
/// training configuration. Every field has a default, so an empty config
/// file runs.
struct ExperimentConfig {
    DataConfig data;
    std::vector<Method> methods = {Method::msl_mov};
    std::vector<std::size_t> held_out;        // empty = rotate over all domains
    std::vector<std::uint64_t> seeds = {1};
    std::size_t num_tasks = 5;
    TrainConfig train;
    std::string out_dir;                      // empty = $XDCL_OUT_DIR or ./reports
    std::size_t jobs = 1;
};

/// Key=value config file (lines, '#' comments), then flag overrides on
/// top. Unknown keys, malformed values and unknown method names are
/// rejected with the offending key in the message.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

/// Applies one key=value pair to a config; shared by file parsing and
/// command-line flags.
void apply_config_entry(ExperimentConfig& config, const std::string& key, const std::string& value);

/// The keys accepted by config files and mirrored by CLI flags.
const std::vector<std::string>& config_keys();

struct CellResult {
    Method method;
    std::size_t held_out = 0;
    std::uint64_t seed = 0;
    ExperimentReport report;
    double wall_clock_sec = 0.0;
    std::uint64_t data_seed = 0;
};

/// Serialized report for one grid cell (schema in docs/FORMATS.md).
std::string report_to_json(const ExperimentConfig& config, const CellResult& cell);

/// Recomputes A and BW from the matrices stored in a report document and
/// checks them against the stored values, bit for bit.
void verify_report_consistency(const std::string& report_json);

/// Runs the whole grid, writes one JSON report per cell plus summary.csv,
/// and prints the method x held-out-domain table of unseen-domain
/// accuracies. Returns a process exit code: 0 on success, 1 on runtime
/// failure, 2 on configuration/data failure.
int run_grid(const ExperimentConfig& config);

/// Exit codes of run_grid.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntimeError = 1;
inline constexpr int kExitConfigError = 2;

}  // namespace xdcl
