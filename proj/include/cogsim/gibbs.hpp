#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cogsim/cohort.hpp"
#include "cogsim/rng.hpp"
#include "cogsim/state_space.hpp"

namespace cogsim {

// Which tests load on which factors. Each test loads on at least one
// factor; the first masked-in test of a factor is its sign anchor.
struct LoadingStructure {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // tests x factors
    std::vector<std::string> factor_names;

    Eigen::Index n_tests() const { return mask.rows(); }
    Eigen::Index n_factors() const { return mask.cols(); }
    Eigen::Index anchor_row(Eigen::Index factor) const;
    void validate() const;

    // The four-domain map for the ten-test battery: memory (immediate,
    // delayed recall), working memory (digit spans), language (fluencies,
    // naming), psychomotor speed (trails, digit symbol).
    static LoadingStructure four_domain_default();
};

struct GibbsPriors {
    Eigen::VectorXd m0;
    Eigen::MatrixXd p0;
    Eigen::MatrixXd loading_mean;  // tests x factors, per-row prior means
    double loading_var = 1.0;      // isotropic prior variance per row
    double sigma_eps_shape = 0.01;  // c0
    double sigma_eps_rate = 0.01;   // d0
    double eta_dof = 0.0;           // defaults to n_factors + 2
    Eigen::MatrixXd eta_scale;      // defaults to identity

    static GibbsPriors defaults(Eigen::Index n_tests, Eigen::Index n_factors);
};

struct GibbsConfig {
    int n_iter = 10000;
    int burn_in = 5000;
    GibbsPriors priors;
    LoadingStructure structure;
    std::uint64_t seed = 0;
    int thin = 0;  // 0 = keep no draws; otherwise store every thin-th draw

    void validate() const;
    static GibbsConfig defaults(const LoadingStructure& structure,
                                std::uint64_t seed);
};

struct ParameterDiagnostic {
    std::string name;
    double mean = 0.0;
    double split_rhat = 1.0;  // split-chain potential scale reduction
};

struct PosteriorSummary {
    Eigen::MatrixXd loadings_hat;   // masked-out entries exactly zero
    Eigen::VectorXd sigma_eps_hat;
    Eigen::MatrixXd sigma_eta_hat;  // unit diagonal
    std::vector<std::string> subject_ids;
    // Posterior-mean factor score per subject-visit.
    std::vector<std::vector<Eigen::VectorXd>> factor_scores;
    std::vector<Eigen::MatrixXd> loading_draws;  // thinned, may be empty
    std::vector<ParameterDiagnostic> diagnostics;
};

// One loading row's conditional draw. alpha_stack holds all subject-visit
// state draws (rows), y_k the matching adjusted observations for test k.
// Masked-out coordinates are fixed at zero.
Eigen::VectorXd sample_loading_row(
    const Eigen::MatrixXd& alpha_stack, const Eigen::VectorXd& y_k,
    double sigma_eps_k, const Eigen::VectorXd& prior_mean, double prior_var,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& mask_row, Rng& rng);

// Inverse-gamma posterior (shape, rate) for one measurement variance.
std::pair<double, double> sigma_eps_posterior(double residual_ss,
                                              std::size_t n_obs, double shape0,
                                              double rate0);
double sample_sigma_eps(const Eigen::MatrixXd& alpha_stack,
                        const Eigen::VectorXd& y_k,
                        const Eigen::VectorXd& loading_row, double shape0,
                        double rate0, Rng& rng);

// Inverse-Wishart posterior (dof, scatter) over gap-scaled state
// increments; increments are divided by sqrt(delta) so the posterior
// targets the per-unit-time innovation covariance.
std::pair<double, Eigen::MatrixXd> sigma_eta_posterior(
    const std::vector<FactorTrajectory>& trajectories,
    const std::vector<std::vector<double>>& gaps_years,
    const GibbsPriors& priors);
// Draws the posterior and rescales it to a correlation matrix
// (unit diagonal).
Eigen::MatrixXd sample_sigma_eta(
    const std::vector<FactorTrajectory>& trajectories,
    const std::vector<std::vector<double>>& gaps_years,
    const GibbsPriors& priors, Rng& rng);

// Full sampler: FFBS over subjects, then loading rows, measurement
// variances, and the innovation correlation, per iteration. Deterministic
// given the seed; per-subject and per-test substreams are derived from
// (seed, phase, iteration, index).
PosteriorSummary run_gibbs(const Cohort& cohort, const GibbsConfig& config);

}  // namespace cogsim
