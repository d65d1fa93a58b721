// Command-line driver: synth, build, train, eval, report. One JSON config
// per experiment; flags override the seed/profile/scenario fields so a
// scenario sweep can reuse a single config. Exit codes: 0 ok, 2 usage,
// 3 data error, 4 training divergence.

#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edbench/core.hpp"
#include "edbench/pipeline.hpp"
#include "edbench/synthgen.hpp"

namespace {

using edbench::pipeline::ExperimentConfig;

struct CliState {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string profile;
    std::string scenario;
    std::string out;
    std::string checkpoint;
    std::vector<std::string> report_paths;
};

bool option_given(const CLI::App* sub, const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

ExperimentConfig load_experiment(const CLI::App* sub, const CliState& state) {
    if (state.config_path.empty()) {
        throw edbench::UsageError(sub->get_name() + " requires --config");
    }
    ExperimentConfig config = ExperimentConfig::load(state.config_path);
    if (option_given(sub, "--seed")) config.seed = state.seed;
    if (option_given(sub, "--profile")) config.profile = state.profile;
    if (option_given(sub, "--scenario")) config.scenario = state.scenario;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emergency-department prediction benchmark pipeline"};
    app.require_subcommand(1);
    CliState state;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", state.config_path, "experiment config (JSON)");
        sub->add_option("--seed", state.seed, "override the config seed");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic source-data fixture");
    synth->add_option("--config", state.config_path, "fixture config (JSON); defaults when absent");
    synth->add_option("--seed", state.seed, "override the fixture seed");
    synth->add_option("--out", state.out, "fixture output directory")->required();
    synth->callback([&] {
        edbench::synthgen::SynthConfig config;
        if (!state.config_path.empty()) {
            config = edbench::synthgen::SynthConfig::load(state.config_path);
        }
        if (synth->count("--seed") > 0) config.seed = state.seed;
        config.validate();
        edbench::synthgen::generate_fixture(config, state.out);
        edbench::log_info("fixture written: " + state.out);
    });

    auto* build = app.add_subcommand("build", "build dataset artifacts from source tables");
    add_common(build);
    build->callback([&] { edbench::pipeline::cmd_build(load_experiment(build, state)); });

    auto* train = app.add_subcommand("train", "train the configured scenario");
    add_common(train);
    train->add_option("--profile", state.profile, "model profile: desk | paper");
    train->add_option("--scenario", state.scenario,
                      "routine_tree | ecgfeat_tree | wave_deep | ecgfeat_routine_tree | "
                      "wave_routine_deep");
    train->callback([&] { edbench::pipeline::cmd_train(load_experiment(train, state)); });

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test fold");
    add_common(eval);
    eval->add_option("--scenario", state.scenario, "scenario whose checkpoint to load");
    eval->add_option("--checkpoint", state.checkpoint, "checkpoint path override");
    eval->callback(
        [&] { edbench::pipeline::cmd_eval(load_experiment(eval, state), state.checkpoint); });

    auto* report = app.add_subcommand("report", "comparison table across evaluation reports");
    report->add_option("--config", state.config_path, "experiment config (JSON)");
    report->add_option("--out", state.out, "output path prefix")->required();
    report->add_option("reports", state.report_paths, "evaluation report JSON files")
        ->required()
        ->expected(-1);
    report->callback([&] {
        edbench::pipeline::cmd_report(state.report_paths, state.out,
                                      load_experiment(report, state));
    });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const edbench::UsageError& e) {
        edbench::log_warn(std::string("usage error: ") + e.what());
        return 2;
    } catch (const edbench::DivergenceError& e) {
        edbench::log_warn(std::string("training diverged: ") + e.what());
        return 4;
    } catch (const edbench::DataError& e) {
        edbench::log_warn(std::string("data error: ") + e.what());
        return 3;
    } catch (const std::exception& e) {
        edbench::log_warn(std::string("error: ") + e.what());
        return 1;
    }
}
