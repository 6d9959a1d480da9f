#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cogsim/cohort.hpp"
#include "cogsim/rng.hpp"

namespace cogsim {

constexpr double kDaysPerYear = 365.25;

// Parameters of the latent-factor random walk: scores = loadings * state +
// measurement noise; state increments between visits have covariance
// delta * sigma_eta where delta is the gap in years.
struct StateSpaceParams {
    Eigen::MatrixXd loadings;   // n_tests x n_factors
    Eigen::VectorXd sigma_eps;  // measurement variances (diagonal)
    Eigen::MatrixXd sigma_eta;  // per-unit-time innovation covariance
    Eigen::VectorXd m0;         // initial-state prior mean
    Eigen::MatrixXd p0;         // initial-state prior covariance

    Eigen::Index n_tests() const { return loadings.rows(); }
    Eigen::Index n_factors() const { return loadings.cols(); }
    void validate() const;  // throws std::invalid_argument
};

// Forward pass output. Gaps are kept so the smoother and the backward
// sampler need only (filter, params).
struct FilterResult {
    std::vector<Eigen::VectorXd> predicted_mean;
    std::vector<Eigen::MatrixXd> predicted_cov;
    std::vector<Eigen::VectorXd> updated_mean;
    std::vector<Eigen::MatrixXd> updated_cov;
    std::vector<double> gaps_years;  // size n_visits - 1
    double log_likelihood = 0.0;

    std::size_t n_visits() const { return updated_mean.size(); }
};

struct SmootherResult {
    std::vector<Eigen::VectorXd> mean;  // marginal smoothed means
    std::vector<Eigen::MatrixXd> cov;
};

enum class TrajectoryKind { SmoothedMean, SampledDraw };

struct FactorTrajectory {
    std::vector<Eigen::VectorXd> states;  // one per visit
    TrajectoryKind kind = TrajectoryKind::SampledDraw;
};

// Inter-visit gaps in years (days / 365.25), length n_visits - 1.
std::vector<double> visit_gaps_years(const std::vector<double>& visit_days);

// Predict/update recursions with identity transition and delta-scaled
// innovations. The first visit takes (m0, p0) as its predicted state.
// Returns the exact Gaussian log-likelihood of the observation stack.
FilterResult kalman_filter(const SubjectSeries& series,
                           const StateSpaceParams& params);

// Backward (RTS) recursion for the marginal smoothed moments; the final
// visit equals the filtered update.
SmootherResult kalman_smoother(const FilterResult& filter,
                               const StateSpaceParams& params);

// Draws a full state trajectory from its joint posterior: sample the last
// filtered state, then walk backward through the conditional Gaussians.
FactorTrajectory ffbs_sample(const FilterResult& filter,
                             const StateSpaceParams& params, Rng& rng);

// Dense-algebra reference: builds the exact joint Gaussian over stacked
// states and observations and conditions on the observations. Only for
// small instances (test oracle).
struct JointGaussian {
    Eigen::VectorXd state_mean;  // stacked, n_visits * n_factors
    Eigen::MatrixXd state_cov;
    double log_likelihood = 0.0;
};

JointGaussian joint_gaussian_oracle(const SubjectSeries& series,
                                    const StateSpaceParams& params);

}  // namespace cogsim
