// Experiment runner: `xdcl run --config exp.cfg [overrides...]` executes a
// seeded grid of (method x held-out domain x seed) continual-learning
// experiments and writes one JSON report per cell plus a CSV summary.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "xdcl/error.hpp"
#include "xdcl/experiment.hpp"

namespace {

struct FlagCapture {
    std::string key;
    std::string* storage;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-domain continual learning experiment runner"};
    app.require_subcommand(1);

    CLI::App* run = app.add_subcommand("run", "run an experiment grid");
    std::string config_path;
    run->add_option("--config", config_path, "key = value config file")->required();

    // Every config key is mirrored one-to-one as a flag; flags win over the
    // file. Dashes and underscores are interchangeable on the command line.
    std::vector<std::unique_ptr<std::string>> values;
    std::vector<FlagCapture> captures;
    for (const std::string& key : xdcl::config_keys()) {
        values.push_back(std::make_unique<std::string>());
        captures.push_back(FlagCapture{key, values.back().get()});
        std::string flag = "--" + key;
        if (key == "held_out") flag += ",--held-out";
        if (key == "out") flag += ",--out-dir";
        run->add_option(flag, *values.back(), "override config key '" + key + "'");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : xdcl::kExitConfigError;
    }

    std::vector<std::pair<std::string, std::string>> overrides;
    for (const FlagCapture& capture : captures) {
        if (run->count("--" + capture.key) > 0) {
            overrides.emplace_back(capture.key, *capture.storage);
        }
    }

    try {
        const xdcl::ExperimentConfig config = xdcl::parse_config(config_path, overrides);
        return xdcl::run_grid(config);
    } catch (const xdcl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return xdcl::kExitConfigError;
    } catch (const xdcl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return xdcl::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return xdcl::kExitRuntimeError;
    }
}
