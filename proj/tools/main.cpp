#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cogsim/pipeline.hpp"

namespace {

// 0 success, 1 numerical failure, 2 usage/config error.
int run(const std::string& command, const std::string& config_path,
        std::uint64_t seed, bool seed_set, const std::string& out,
        const std::string& profile) {
    try {
        cogsim::RunConfig config = cogsim::load_run_config(config_path);
        if (seed_set) {
            config.seed = seed;
        }
        if (!out.empty()) {
            config.out_dir = out;
        }
        if (!profile.empty()) {
            if (profile == "desk") {
                config.profile = cogsim::Profile::Desk;
            } else if (profile == "full") {
                config.profile = cogsim::Profile::Full;
            } else {
                throw cogsim::usage_error(
                    "profile must be 'desk' or 'full', got '" + profile + "'");
            }
        }
        if (command == "generate") {
            cogsim::cmd_generate(config);
        } else if (command == "fit-factors") {
            cogsim::cmd_fit_factors(config);
        } else if (command == "fit-risk") {
            cogsim::cmd_fit_risk(config);
        } else if (command == "run-trial") {
            cogsim::cmd_run_trial(config);
        } else {
            cogsim::cmd_report(config);
        }
        return 0;
    } catch (const cogsim::usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "cogsim: longitudinal cognitive factor model and clinical-trial "
        "power simulation"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::string profile;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "root random seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    app.add_option("--out", out, "output directory");
    app.add_option("--profile", profile, "desk or full scale defaults");

    for (const auto& [name, help] :
         std::initializer_list<std::pair<const char*, const char*>>{
             {"generate", "simulate a cohort and write train/test CSVs"},
             {"fit-factors",
              "fit the longitudinal factor model on the training set"},
             {"fit-risk", "fit the conversion risk models"},
             {"run-trial", "run the selection-method x effect trial grid"},
             {"report", "summarize artifacts in the output directory"}}) {
        // Global flags may follow the subcommand.
        app.add_subcommand(name, help)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    return run(app.get_subcommands().front()->get_name(), config_path, seed,
               seed_set, out, profile);
}
