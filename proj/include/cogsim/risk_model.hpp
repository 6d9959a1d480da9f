#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cogsim/cohort.hpp"
#include "cogsim/gibbs.hpp"

namespace cogsim {

class separation_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// One row per subject at the trial-baseline visit: the leading
// n_main_terms columns are the cognitive predictors subject to pruning,
// the rest are covariates that always stay in a model.
struct RiskDataset {
    std::vector<std::string> term_names;  // predictor columns (no intercept)
    Eigen::MatrixXd x;                    // n_rows x n_terms
    Eigen::VectorXd y;                    // binary outcome, 0/1
    std::vector<std::string> subject_ids;
    int n_main_terms = 0;

    Eigen::Index n_rows() const { return x.rows(); }
};

struct LogisticFit {
    std::vector<std::string> term_names;  // "(intercept)" first
    std::vector<int> columns;             // dataset columns used, fit order
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd wald_p;
    double log_likelihood = 0.0;
    bool converged = false;
    double threshold = 0.5;
    bool covariate_only_fallback = false;

    Eigen::VectorXd predict(const RiskDataset& data) const;
};

// Newton/IRLS maximum likelihood with step halving, run on an internally
// standardized design; coefficients and covariance are reported on the
// original scale. Throws separation_error when coefficients diverge and
// std::runtime_error for rank-deficient designs.
LogisticFit fit_logistic(const RiskDataset& data);
LogisticFit fit_logistic(const RiskDataset& data,
                         const std::vector<int>& columns);

// Drops main-term predictors with Wald p >= alpha (covariates always
// kept) and refits once. If no main term survives, returns the
// covariate-only fit with covariate_only_fallback set.
LogisticFit select_final_model(const LogisticFit& full_fit,
                               const RiskDataset& data, double alpha = 0.05);

struct Classification {
    double sensitivity = 0.0;
    double specificity = 0.0;
    bool sensitivity_defined = false;
    bool specificity_defined = false;
};

// Positive call: predicted probability >= threshold.
Classification classification_metrics(const LogisticFit& fit,
                                      const RiskDataset& data,
                                      double threshold);

struct ThresholdScan {
    double threshold = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    bool degenerate = false;  // uninformative (constant) predictions
};

// Scans thresholds 0.001..0.999 in 0.001 steps for the smallest
// |sensitivity - specificity|; ties break toward the lower threshold.
ThresholdScan balanced_threshold(const LogisticFit& fit,
                                 const RiskDataset& data);

// Reference operating point for high-risk selection in cohorts with
// mid-teens conversion rates; fitted models normally carry their own
// balanced-scan threshold instead.
constexpr double kReferenceHighRiskThreshold = 0.15;

// Subjects whose predicted conversion probability strictly exceeds the
// threshold.
std::set<std::string> high_risk_subset(const LogisticFit& fit,
                                       const RiskDataset& data,
                                       double threshold);

// --- dataset builders -----------------------------------------------------
// Rows are taken at the trial-baseline (second) visit; the outcome is
// conversion within horizon_days of that visit.

constexpr double kRiskHorizonDays = 3.0 * 365.25;

// factor_scores: per subject (cohort order), per visit. Uses the listed
// factor columns as main terms.
RiskDataset make_factor_risk_dataset(
    const Cohort& cohort,
    const std::vector<std::vector<Eigen::VectorXd>>& factor_scores,
    const std::vector<std::string>& factor_names,
    const std::vector<int>& factor_columns,
    double horizon_days = kRiskHorizonDays);

// Single standardized test score as the main term.
RiskDataset make_test_risk_dataset(const Cohort& cohort, int test_index,
                                   double horizon_days = kRiskHorizonDays);

// Covariates only (no cognitive main terms).
RiskDataset make_covariate_risk_dataset(const Cohort& cohort,
                                        double horizon_days = kRiskHorizonDays);

}  // namespace cogsim
