#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace cogsim {

// Configuration or input problems (missing files, bad schema): exit code 2.
class usage_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Profile { Desk, Full };

// Global run settings plus the raw JSON config; each command reads its own
// section ("generate", "fit_factors", "fit_risk", "run_trial").
struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
    Profile profile = Profile::Desk;
    nlohmann::json sections = nlohmann::json::object();

    nlohmann::json section(const std::string& name) const;
};

RunConfig load_run_config(const std::string& config_path);

// Writes train/test cohort CSVs (50/50 random split) and a generation
// report.
void cmd_generate(const RunConfig& config);

// Standardizes, residualizes, and fits the factor model on the training
// cohort; writes posterior.json and factor_scores.csv.
void cmd_fit_factors(const RunConfig& config);

// Fits the single-test, single-factor, all-factor, pruned-final, and
// covariate-only conversion models; writes risk_models.csv and
// final_model.json.
void cmd_fit_risk(const RunConfig& config);

// Derives test-set outcomes, builds the high-risk selection pools, runs
// the selection-method x treatment-effect grid, and writes the grid,
// HR-distribution, and plot-data CSVs.
void cmd_run_trial(const RunConfig& config);

// Prints a text summary of the artifacts in the output directory.
void cmd_report(const RunConfig& config);

}  // namespace cogsim
