#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cogsim {

// One entry of the test battery. sign_flip marks tests where a higher raw
// score means worse cognition; those columns are negated before
// standardization so all tests point the same way.
struct CognitiveTest {
    int index = 0;
    std::string name;
    bool sign_flip = false;

    bool operator==(const CognitiveTest&) const = default;
};

struct Endpoint {
    bool converted = false;
    double endpoint_days = 0.0;  // days since the subject's first visit
    std::optional<double> death_days;

    bool operator==(const Endpoint&) const = default;
};

// One subject's longitudinal record: irregularly spaced visits with a full
// score vector at each visit, baseline covariates, and the outcome fields.
struct SubjectSeries {
    std::string subject_id;
    std::vector<double> visit_days;  // strictly increasing, size >= 2
    Eigen::MatrixXd scores;          // n_visits x n_tests
    Eigen::VectorXd covariates;
    Endpoint endpoint;

    std::size_t n_visits() const { return visit_days.size(); }
    bool operator==(const SubjectSeries& other) const;
};

struct Standardization {
    Eigen::VectorXd mean;  // per test
    Eigen::VectorXd sd;    // per test, all > 0

    bool operator==(const Standardization& other) const;
};

struct Cohort {
    std::vector<SubjectSeries> subjects;
    std::vector<CognitiveTest> tests;
    std::vector<std::string> covariate_names;
    // Present once scores are standardized; frozen stats travel with the
    // cohort so test-set transforms reuse training-set statistics.
    std::optional<Standardization> standardization;
    bool residualized = false;

    int n_tests() const { return static_cast<int>(tests.size()); }
    int n_covariates() const { return static_cast<int>(covariate_names.size()); }
    std::size_t total_visits() const;
    int covariate_index(const std::string& name) const;  // -1 if absent

    bool operator==(const Cohort& other) const;
};

// The ten-test battery; digit span forward/backward carry sign_flip.
std::vector<CognitiveTest> default_test_catalog();
// Numeric covariate schema: binaries as 0/1, race as dummies against a
// white reference, apoe4 as 0/1/2 allele count.
std::vector<std::string> default_covariate_names();

struct LoadReport {
    std::size_t rows_dropped_missing = 0;
    std::size_t subjects_dropped_short = 0;  // reduced below 2 visits
    std::size_t subjects_loaded = 0;
};

// Reads the cohort CSV (one row per visit, complete cases only). Rows with
// any missing required cell are dropped; subjects left with fewer than two
// visits are dropped. Column order is fixed:
//   subject_id, visit_days, <tests...>, <covariates...>,
//   endpoint_days, converted, death_days(optional)
Cohort load_cohort(const std::string& path,
                   const std::vector<CognitiveTest>& tests,
                   const std::vector<std::string>& covariate_names,
                   LoadReport* report = nullptr);

void write_cohort(const Cohort& cohort, const std::string& path);

// Sign-flips flagged tests (raw cohorts only), then centers/scales every
// test column to mean 0, sd 1 (population sd) across all subject-visits.
Cohort standardize_tests(const Cohort& cohort);
// Same transform with frozen statistics from another (training) cohort.
Cohort standardize_tests(const Cohort& cohort, const Standardization& stats);

struct ResidualizeResult {
    Cohort cohort;
    // (1 + n_covariates) x n_tests; row 0 is the intercept.
    Eigen::MatrixXd beta;
};

// Pooled OLS of each test column on [intercept, covariates] over all
// visits; returns the adjusted scores y* = y - X beta_hat.
ResidualizeResult residualize_covariates(const Cohort& cohort);
// Applies previously estimated coefficients (test-set adjustment).
Cohort apply_residualization(const Cohort& cohort, const Eigen::MatrixXd& beta);

// Covariate columns that take a single value across all subjects (e.g. a
// race dummy with no members in a small cohort); such columns cannot enter
// adjustment models.
std::vector<std::string> constant_covariates(const Cohort& cohort);
// Cohort restricted to the named covariate columns, order preserved.
Cohort select_covariates(const Cohort& cohort,
                         const std::vector<std::string>& keep);

}  // namespace cogsim
