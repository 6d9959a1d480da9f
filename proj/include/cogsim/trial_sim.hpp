#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cogsim/cohort.hpp"
#include "cogsim/rng.hpp"

namespace cogsim {

constexpr double kTrialCensorDays = 3.0 * 365.25;    // exactly three years
constexpr double kTrialWindowDays = 3.5 * 365.25;    // event observation window

enum class EventKind {
    Converted,
    Censored,        // cognitively normal visit closest to three years
    DeathCensored,
    LostToFollowUp,  // no visit in the window; excluded from risk sets
};

struct SurvivalRecord {
    std::string subject_id;
    double time_days = 0.0;  // from trial baseline (second visit)
    EventKind kind = EventKind::Censored;
    double apoe4 = 0.0;
    double education = 0.0;
    double sex = 0.0;

    bool event() const { return kind == EventKind::Converted; }
    bool analyzable() const { return kind != EventKind::LostToFollowUp; }
};

struct OutcomeReport {
    std::size_t n_converted = 0;
    std::size_t n_censored = 0;
    std::size_t n_death_censored = 0;
    std::size_t n_lost_to_follow_up = 0;
};

// Derives each subject's pre-treatment time-to-conversion outcome from the
// trial baseline (the second visit): conversion inside 3.5 years is an
// event at the conversion time; otherwise censoring at the visit closest
// to three years, or at death if it comes first.
std::vector<SurvivalRecord> derive_true_outcomes(const Cohort& cohort,
                                                 OutcomeReport* report = nullptr);

enum class SelectionMethod { Random, FactorModel, CovariateModel };

const char* selection_method_name(SelectionMethod method);

// Index pools into the survival records for each selection strategy.
struct SelectionPools {
    std::vector<int> all;
    std::vector<int> factor_model;
    std::vector<int> covariate_model;

    const std::vector<int>& pool(SelectionMethod method) const;
};

// n draws with replacement from the method's pool.
std::vector<int> select_participants(SelectionMethod method,
                                     const SelectionPools& pools, int n,
                                     Rng& rng);

struct Enrollee {
    int record = 0;  // index into the base records
    bool treated = false;
    double time_days = 0.0;
    bool event = false;
    bool analyzable = true;
};

// Randomizes each enrollee 1:1 and applies the drug: control outcomes are
// untouched; treated would-be converters keep their event with probability
// 1 - effect, otherwise they are censored at exactly three years.
std::vector<Enrollee> apply_treatment(const std::vector<SurvivalRecord>& records,
                                      const std::vector<int>& chosen,
                                      double effect, Rng& rng);

struct CoxRow {
    double time = 0.0;
    bool event = false;
    Eigen::VectorXd x;
};

struct CoxFit {
    Eigen::VectorXd beta;      // treatment first, then adjusters
    Eigen::MatrixXd covariance;
    double hr_treatment = 1.0;
    double log_hr_se = 0.0;
    double p_value = 1.0;
    double score_norm = 0.0;
    bool converged = false;
    bool monotone_flag = false;  // boundary likelihood, no finite MLE
};

// Cox partial likelihood with Breslow tie handling, Newton-Raphson to
// gradient norm < 1e-8. Throws when there are no events or the treatment
// indicator (column 0) does not vary.
CoxFit fit_cox(const std::vector<CoxRow>& rows);

// Schoenfeld required event count for a two-arm trial; infinite at hr = 1.
double required_events(double hr, double alpha, double power,
                       double allocation = 0.5);

struct TrialConfig {
    int n_enrolled = 1000;
    std::vector<double> effects = {0.05, 0.10, 0.15, 0.20, 0.25,
                                   0.30, 0.35, 0.40, 0.45, 0.50};
    int n_replicates = 10000;
    double alpha = 0.05;
    double target_power = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrialReplicate {
    double hr_hat = 1.0;
    double log_hr_se = 0.0;
    double p_value = 1.0;
    int n_events = 0;
    double event_probability = 0.0;
    double power = 0.0;
    double required_n = 0.0;  // may be +inf
    bool flagged = false;     // hr > 1 or boundary fit: power 0, N infinite
};

// Post-hoc power from the observed event count and hazard ratio by
// inverting the Schoenfeld relation; applies the power-0 / infinite-N rule
// for hazard ratios above one and flagged fits.
TrialReplicate replicate_summary(const CoxFit& fit, int n_events,
                                 int n_analyzable, const TrialConfig& config);

struct TrialCell {
    SelectionMethod method;
    double effect = 0.0;
    double median_power = 0.0;
    double median_required_n = 0.0;
    double median_power_excluding_zero = 0.0;
    double median_hr = 1.0;
    int n_zero_power = 0;
    int n_failed = 0;  // hard errors (no events, degenerate arms)
    std::vector<double> hr_draws;      // unflagged replicates
    std::vector<double> power_draws;   // all replicates
    std::vector<double> p_values;      // unflagged replicates
};

struct TrialGridResult {
    std::vector<TrialCell> cells;

    const TrialCell& cell(SelectionMethod method, double effect) const;
};

// Runs n_replicates independent trials per (method, effect) combination.
// Replicate RNG substreams are derived from (seed, method, effect index,
// replicate), so the grid is deterministic and order-independent.
TrialGridResult run_trial_grid(const std::vector<SurvivalRecord>& records,
                               const SelectionPools& pools,
                               const TrialConfig& config);

double median(std::vector<double> values);

}  // namespace cogsim
