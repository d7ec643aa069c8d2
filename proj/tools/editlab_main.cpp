#include "editlab/config.hpp"
#include "editlab/errors.hpp"
#include "editlab/experiments.hpp"
#include "editlab/report.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct RunOptions {
    std::string config_path;
    std::string experiment_override;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
};

editlab::ExperimentConfig resolve_cli(const RunOptions& opts) {
    editlab::ExperimentConfig cfg = editlab::load_config(opts.config_path);
    if (!opts.experiment_override.empty()) cfg.experiment = opts.experiment_override;
    if (!opts.out_override.empty()) cfg.output_dir = opts.out_override;
    if (opts.has_seed) cfg.seed = opts.seed_override;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"editlab: associative-memory editing and geometry experiments"};
    app.require_subcommand(1);

    RunOptions opts;

    CLI::App* run = app.add_subcommand("run", "run an experiment and write its report");
    run->add_option("--config", opts.config_path, "config file (json or key=value)")->required();
    run->add_option("--experiment", opts.experiment_override, "override the experiment name");
    run->add_option("--out", opts.out_override, "override the output directory");
    run->add_option("--seed", opts.seed_override, "override the top-level seed")
        ->each([&](const std::string&) { opts.has_seed = true; });

    CLI::App* list = app.add_subcommand("list-experiments", "print registered experiment names");

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate", "parse and validate a config file");
    validate->add_option("--config", validate_path, "config file to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (list->parsed()) {
            for (const auto& name : editlab::registered_experiments())
                std::cout << name << "\n";
            return kExitOk;
        }
        if (validate->parsed()) {
            editlab::ExperimentConfig cfg = editlab::load_config(validate_path);
            std::cout << editlab::config_to_json(editlab::resolve_config(cfg)).dump(2) << "\n";
            return kExitOk;
        }
        editlab::ExperimentConfig cfg = resolve_cli(opts);
        editlab::RunReport report = editlab::run_experiment(cfg);
        std::cout << "experiment " << report.experiment << " done; report written to "
                  << cfg.output_dir << "/report.json\n";
        std::cout << report.summary.dump(2) << "\n";
        return kExitOk;
    } catch (const editlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const editlab::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const editlab::Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
