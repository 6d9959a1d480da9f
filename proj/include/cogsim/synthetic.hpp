#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "cogsim/cohort.hpp"

namespace cogsim {

// Marginal distributions for the baseline covariates, loosely shaped like
// an elderly memory-clinic research cohort.
struct CovariateModel {
    double p_male = 0.345;
    double education_mean = 15.8;
    double education_sd = 2.86;
    double age_mean = 70.7;
    double age_sd = 10.1;
    double p_race_black = 0.136;
    double p_race_asian = 0.02;
    double p_race_other = 0.003;
    double p_apoe4_one = 0.276;
    double p_apoe4_two = 0.025;
    double p_hypertension = 0.49;
    double p_diabetes = 0.113;
    double p_ever_smoked = 0.40;
    double smoking_years_mean = 24.0;
    double smoking_years_sd = 12.0;
    double p_obese = 0.251;
    double p_tbi = 0.108;
    double p_depression = 0.283;
};

// Logistic model for trial-window conversion on the true factor values at
// the trial-baseline (second) visit plus the covariates.
struct OutcomeModel {
    double intercept = 0.0;
    Eigen::VectorXd factor_coefs;     // n_factors
    Eigen::VectorXd covariate_coefs;  // n_covariates
};

struct GenConfig {
    int n_subjects = 0;
    int visits_min = 3;
    int visits_max = 8;
    double gap_years_min = 0.4;
    double gap_years_max = 1.4;
    Eigen::MatrixXd true_loadings;   // n_tests x n_factors
    Eigen::VectorXd true_sigma_eps;  // n_tests
    Eigen::MatrixXd true_sigma_eta;  // n_factors correlation matrix
    CovariateModel covariates;
    OutcomeModel outcome;
    double ltfu_prob = 0.08;            // no visits after trial baseline
    double death_hazard_per_year = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
    // Ten-test / four-factor configuration with conversion risk driven by
    // the memory and language factors plus age/apoe4/education effects.
    static GenConfig defaults(int n_subjects, std::uint64_t seed);
};

// Simulates subject trajectories from the factor random walk, emits noisy
// test scores, and assigns conversion/censoring/death outcomes.
// Deterministic given the seed.
Cohort generate_cohort(const GenConfig& config);

}  // namespace cogsim
