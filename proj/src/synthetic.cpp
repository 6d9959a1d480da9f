#include "cogsim/synthetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cogsim/gibbs.hpp"
#include "cogsim/rng.hpp"
#include "cogsim/state_space.hpp"

namespace cogsim {

namespace {

constexpr std::uint64_t kStreamCovariates = 11;
constexpr std::uint64_t kStreamTrajectory = 12;
constexpr std::uint64_t kStreamOutcome = 13;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void GenConfig::validate() const {
    if (n_subjects <= 0) {
        throw std::invalid_argument("gen config: n_subjects must be positive");
    }
    if (visits_min < 2 || visits_max < visits_min) {
        throw std::invalid_argument(
            "gen config: need visits_max >= visits_min >= 2");
    }
    if (gap_years_min <= 0.0 || gap_years_max < gap_years_min) {
        throw std::invalid_argument("gen config: invalid visit gap range");
    }
    StateSpaceParams params;
    params.loadings = true_loadings;
    params.sigma_eps = true_sigma_eps;
    params.sigma_eta = true_sigma_eta;
    params.m0 = Eigen::VectorXd::Zero(true_loadings.cols());
    params.p0 = Eigen::MatrixXd::Identity(true_loadings.cols(),
                                          true_loadings.cols());
    params.validate();
    if (outcome.factor_coefs.size() != true_loadings.cols()) {
        throw std::invalid_argument(
            "gen config: outcome factor coefficient count mismatch");
    }
    if (!outcome.factor_coefs.allFinite() ||
        !outcome.covariate_coefs.allFinite()) {
        throw std::invalid_argument(
            "gen config: outcome coefficients must be finite");
    }
    if (ltfu_prob < 0.0 || ltfu_prob >= 1.0 || death_hazard_per_year < 0.0) {
        throw std::invalid_argument("gen config: invalid censoring settings");
    }
}

GenConfig GenConfig::defaults(int n_subjects, std::uint64_t seed) {
    GenConfig c;
    c.n_subjects = n_subjects;
    c.seed = seed;

    const auto structure = LoadingStructure::four_domain_default();
    const Eigen::Index n_tests = structure.n_tests();
    const Eigen::Index n_factors = structure.n_factors();
    c.true_loadings = Eigen::MatrixXd::Zero(n_tests, n_factors);
    const double values[10] = {0.95, 1.10, 0.70, 0.80, 1.00,
                               0.85, 0.75, 1.20, 0.90, 0.60};
    for (Eigen::Index k = 0; k < n_tests; ++k) {
        for (Eigen::Index q = 0; q < n_factors; ++q) {
            if (structure.mask(k, q)) {
                c.true_loadings(k, q) = values[k];
            }
        }
    }
    c.true_sigma_eps.resize(n_tests);
    c.true_sigma_eps << 0.35, 0.30, 0.50, 0.45, 0.40, 0.40, 0.45, 0.30, 0.35,
        0.50;
    c.true_sigma_eta.resize(n_factors, n_factors);
    c.true_sigma_eta << 1.00, 0.45, 0.35, 0.30,
                        0.45, 1.00, 0.40, 0.25,
                        0.35, 0.40, 1.00, 0.50,
                        0.30, 0.25, 0.50, 1.00;

    // Risk runs through memory and language; better cognition protects.
    c.outcome.factor_coefs = Eigen::VectorXd::Zero(n_factors);
    c.outcome.factor_coefs[0] = -0.70;  // memory
    c.outcome.factor_coefs[2] = -0.55;  // language
    const auto cov_names = default_covariate_names();
    c.outcome.covariate_coefs =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cov_names.size()));
    auto coef = [&](const std::string& name, double value) {
        for (std::size_t i = 0; i < cov_names.size(); ++i) {
            if (cov_names[i] == name) {
                c.outcome.covariate_coefs[static_cast<Eigen::Index>(i)] =
                    value;
                return;
            }
        }
        throw std::logic_error("unknown covariate: " + name);
    };
    coef("age_baseline", 0.08);
    coef("education_years", -0.08);
    coef("apoe4_count", 0.85);
    coef("sex_male", 0.20);
    // Intercept calibrated so the default cohort converts at roughly 9%,
    // in the range of referral-based research cohorts. Higher event rates
    // visibly deflate observed trial hazard ratios (drug-responders hold
    // their risk-set slots until the three-year censoring point).
    c.outcome.intercept = -8.30;
    return c;
}

namespace {

Eigen::VectorXd draw_covariates(const CovariateModel& m, Rng& rng) {
    Eigen::VectorXd x(13);
    x[0] = rng.bernoulli(m.p_male) ? 1.0 : 0.0;
    x[1] = std::max(2.0, std::round(rng.normal(m.education_mean,
                                               m.education_sd)));
    x[2] = std::max(45.0, std::min(95.0, std::round(rng.normal(m.age_mean,
                                                               m.age_sd))));
    const double race = rng.uniform();
    x[3] = race < m.p_race_black ? 1.0 : 0.0;
    x[4] = (race >= m.p_race_black && race < m.p_race_black + m.p_race_asian)
               ? 1.0
               : 0.0;
    x[5] = (race >= m.p_race_black + m.p_race_asian &&
            race < m.p_race_black + m.p_race_asian + m.p_race_other)
               ? 1.0
               : 0.0;
    const double apoe = rng.uniform();
    x[6] = apoe < m.p_apoe4_two ? 2.0
           : apoe < m.p_apoe4_two + m.p_apoe4_one ? 1.0
                                                  : 0.0;
    x[7] = rng.bernoulli(m.p_hypertension) ? 1.0 : 0.0;
    x[8] = rng.bernoulli(m.p_diabetes) ? 1.0 : 0.0;
    x[9] = rng.bernoulli(m.p_ever_smoked)
               ? std::max(1.0, std::round(rng.normal(m.smoking_years_mean,
                                                     m.smoking_years_sd)))
               : 0.0;
    x[10] = rng.bernoulli(m.p_obese) ? 1.0 : 0.0;
    x[11] = rng.bernoulli(m.p_tbi) ? 1.0 : 0.0;
    x[12] = rng.bernoulli(m.p_depression) ? 1.0 : 0.0;
    return x;
}

}  // namespace

Cohort generate_cohort(const GenConfig& config) {
    config.validate();
    const Eigen::Index n_tests = config.true_loadings.rows();
    const Eigen::Index n_factors = config.true_loadings.cols();
    const Eigen::MatrixXd eta_chol = cholesky_with_jitter(config.true_sigma_eta);
    const Eigen::VectorXd eps_sd = config.true_sigma_eps.array().sqrt();

    Cohort cohort;
    cohort.tests = default_test_catalog();
    if (static_cast<Eigen::Index>(cohort.tests.size()) != n_tests) {
        // Non-default battery sizes get generic test names.
        cohort.tests.clear();
        for (Eigen::Index k = 0; k < n_tests; ++k) {
            cohort.tests.push_back(
                {static_cast<int>(k), "test_" + std::to_string(k + 1), false});
        }
    }
    cohort.covariate_names = default_covariate_names();

    for (int i = 0; i < config.n_subjects; ++i) {
        const auto id = static_cast<std::uint64_t>(i);
        Rng cov_rng = Rng::substream(config.seed, {kStreamCovariates, id});
        Rng traj_rng = Rng::substream(config.seed, {kStreamTrajectory, id});
        Rng out_rng = Rng::substream(config.seed, {kStreamOutcome, id});

        SubjectSeries s;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "S%05d", i);
        s.subject_id = buf;
        s.covariates = draw_covariates(config.covariates, cov_rng);

        const std::uint64_t visit_span =
            static_cast<std::uint64_t>(config.visits_max) -
            static_cast<std::uint64_t>(config.visits_min) + 1;
        const int n_visits =
            config.visits_min +
            static_cast<int>(traj_rng.uniform_index(visit_span));
        s.visit_days.resize(n_visits);
        s.visit_days[0] = 0.0;
        for (int j = 1; j < n_visits; ++j) {
            s.visit_days[j] =
                s.visit_days[j - 1] +
                traj_rng.uniform(config.gap_years_min, config.gap_years_max) *
                    kDaysPerYear;
        }

        // Latent random walk; the first state is spread N(0, I).
        Eigen::MatrixXd states(n_visits, n_factors);
        Eigen::VectorXd state = traj_rng.normal_vector(n_factors);
        states.row(0) = state.transpose();
        for (int j = 1; j < n_visits; ++j) {
            const double delta =
                (s.visit_days[j] - s.visit_days[j - 1]) / kDaysPerYear;
            state += std::sqrt(delta) *
                     (eta_chol * traj_rng.normal_vector(n_factors));
            states.row(j) = state.transpose();
        }
        s.scores.resize(n_visits, n_tests);
        for (int j = 0; j < n_visits; ++j) {
            s.scores.row(j) =
                (config.true_loadings * states.row(j).transpose() +
                 eps_sd.cwiseProduct(traj_rng.normal_vector(n_tests)))
                    .transpose();
        }
        // Raw files carry the battery's native polarity: flagged tests
        // score high when cognition is poor, and the loader flips them.
        for (int k = 0; k < n_tests; ++k) {
            if (cohort.tests[static_cast<std::size_t>(k)].sign_flip) {
                s.scores.col(k) *= -1.0;
            }
        }

        // Conversion risk evaluated at the trial-baseline (second) visit.
        const double baseline_day = s.visit_days[1];
        const double lin = config.outcome.intercept +
                           config.outcome.factor_coefs.dot(
                               states.row(1).transpose()) +
                           config.outcome.covariate_coefs.dot(s.covariates);
        bool converted = out_rng.bernoulli(logistic(lin));
        double endpoint_days = s.visit_days.back();
        if (converted) {
            endpoint_days =
                baseline_day + out_rng.uniform(0.25, 3.45) * kDaysPerYear;
        }

        // Death competes with conversion inside the follow-up window.
        std::optional<double> death_days;
        if (config.death_hazard_per_year > 0.0) {
            const double death =
                out_rng.exponential(config.death_hazard_per_year) *
                kDaysPerYear;
            if (death > baseline_day + 30.0 &&
                death < s.visit_days.back() + 4.0 * kDaysPerYear) {
                death_days = death;
            }
        }
        if (death_days.has_value() && converted &&
            *death_days < endpoint_days) {
            converted = false;
            endpoint_days = s.visit_days.back();
        }
        if (death_days.has_value()) {
            // Visits recorded after death make no sense; trim them.
            while (s.visit_days.size() > 2 &&
                   s.visit_days.back() >= *death_days) {
                s.visit_days.pop_back();
            }
            s.scores.conservativeResize(
                static_cast<Eigen::Index>(s.visit_days.size()), n_tests);
            if (!converted) {
                endpoint_days = s.visit_days.back();
            }
        }

        // Lost to follow-up: nothing observed after the trial baseline.
        if (!converted && !death_days.has_value() &&
            out_rng.bernoulli(config.ltfu_prob)) {
            s.visit_days.resize(2);
            s.scores.conservativeResize(2, n_tests);
            endpoint_days = s.visit_days.back();
        }

        s.endpoint.converted = converted;
        s.endpoint.endpoint_days = endpoint_days;
        s.endpoint.death_days = death_days;
        cohort.subjects.push_back(std::move(s));
    }
    return cohort;
}

}  // namespace cogsim
