#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "cogsim/cohort.hpp"
#include "cogsim/gibbs.hpp"
#include "cogsim/rng.hpp"
#include "cogsim/synthetic.hpp"

using namespace cogsim;

namespace {

// Standardize + residualize, the state run_gibbs expects. Small cohorts
// can leave rare dummies constant; those columns are excluded the way the
// pipeline excludes them.
Cohort prepared(const Cohort& raw) {
    std::vector<std::string> keep;
    const auto constants = constant_covariates(raw);
    for (const auto& name : raw.covariate_names) {
        if (std::find(constants.begin(), constants.end(), name) ==
            constants.end()) {
            keep.push_back(name);
        }
    }
    const Cohort modeling = select_covariates(raw, keep);
    return residualize_covariates(standardize_tests(modeling)).cohort;
}

GibbsConfig quick_config(std::uint64_t seed, int n_iter, int burn_in) {
    GibbsConfig c =
        GibbsConfig::defaults(LoadingStructure::four_domain_default(), seed);
    c.n_iter = n_iter;
    c.burn_in = burn_in;
    return c;
}

}  // namespace

TEST_SUITE_BEGIN("gibbs");

TEST_CASE("four-domain structure is one factor per test") {
    const auto s = LoadingStructure::four_domain_default();
    s.validate();
    CHECK(s.n_tests() == 10);
    CHECK(s.n_factors() == 4);
    for (Eigen::Index k = 0; k < 10; ++k) {
        int count = 0;
        for (Eigen::Index q = 0; q < 4; ++q) {
            count += s.mask(k, q) ? 1 : 0;
        }
        CHECK(count == 1);
    }
    CHECK(s.anchor_row(0) == 0);  // immediate recall anchors memory
    CHECK(s.anchor_row(1) == 2);
    CHECK(s.anchor_row(2) == 4);
    CHECK(s.anchor_row(3) == 7);
}

TEST_CASE("loading row: flat prior limit matches least squares") {
    Rng rng(3);
    const int m = 4000;
    Eigen::MatrixXd alpha(m, 2);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        alpha(i, 0) = rng.normal();
        alpha(i, 1) = rng.normal();
        y[i] = 0.8 * alpha(i, 0) - 0.4 * alpha(i, 1) + 0.1 * rng.normal();
    }
    Eigen::Array<bool, Eigen::Dynamic, 1> mask(2);
    mask << true, true;
    const Eigen::VectorXd ols =
        (alpha.transpose() * alpha).ldlt().solve(alpha.transpose() * y);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    const int n_draws = 2000;
    Rng draw_rng(9);
    for (int d = 0; d < n_draws; ++d) {
        mean += sample_loading_row(alpha, y, 0.01, Eigen::VectorXd::Zero(2),
                                   1e10, mask, draw_rng);
    }
    mean /= n_draws;
    CHECK((mean - ols).cwiseAbs().maxCoeff() < 5e-3);
}

TEST_CASE("loading row: no data falls back to the prior") {
    Eigen::MatrixXd alpha(0, 3);
    Eigen::VectorXd y(0);
    Eigen::Array<bool, Eigen::Dynamic, 1> mask(3);
    mask << true, false, true;
    Eigen::VectorXd prior_mean(3);
    prior_mean << 0.7, -9.0, -0.3;
    Rng rng(21);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd second = Eigen::VectorXd::Zero(3);
    const int n_draws = 50000;
    for (int d = 0; d < n_draws; ++d) {
        const Eigen::VectorXd g =
            sample_loading_row(alpha, y, 1.0, prior_mean, 0.25, mask, rng);
        REQUIRE(g[1] == 0.0);  // masked out stays exactly zero
        mean += g;
        second += g.cwiseProduct(g);
    }
    mean /= n_draws;
    second /= n_draws;
    CHECK(mean[0] == doctest::Approx(0.7).epsilon(0.02));
    CHECK(mean[2] == doctest::Approx(-0.3).epsilon(0.05));
    CHECK(second[0] - mean[0] * mean[0] ==
          doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("loading row: draw mean matches the closed-form posterior") {
    Rng rng(5);
    const int m = 60;
    Eigen::MatrixXd alpha(m, 2);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        alpha(i, 0) = rng.normal();
        alpha(i, 1) = rng.normal();
        y[i] = 0.5 * alpha(i, 0) + 0.9 * alpha(i, 1) + rng.normal();
    }
    const double sigma_eps = 1.3;
    const double prior_var = 0.8;
    Eigen::VectorXd prior_mean(2);
    prior_mean << 0.2, -0.1;

    const Eigen::MatrixXd precision =
        alpha.transpose() * alpha / sigma_eps +
        Eigen::MatrixXd::Identity(2, 2) / prior_var;
    const Eigen::VectorXd expected = precision.ldlt().solve(
        prior_mean / prior_var + alpha.transpose() * y / sigma_eps);
    const Eigen::MatrixXd post_cov =
        precision.ldlt().solve(Eigen::MatrixXd::Identity(2, 2));

    Eigen::Array<bool, Eigen::Dynamic, 1> mask(2);
    mask << true, true;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    const int n_draws = 50000;
    Rng draw_rng(77);
    for (int d = 0; d < n_draws; ++d) {
        mean += sample_loading_row(alpha, y, sigma_eps, prior_mean, prior_var,
                                   mask, draw_rng);
    }
    mean /= n_draws;
    for (int q = 0; q < 2; ++q) {
        const double se = std::sqrt(post_cov(q, q) / n_draws);
        CHECK(std::abs(mean[q] - expected[q]) < 3.0 * se);
    }
}

TEST_CASE("sigma_eps posterior parameters") {
    // Zero residuals with c0 = d0 = 2: InvGamma((NJ+2)/2, 1).
    const auto [shape, rate] = sigma_eps_posterior(0.0, 120, 2.0, 2.0);
    CHECK(shape == doctest::Approx(61.0));
    CHECK(rate == doctest::Approx(1.0));

    // Doubling the residual sum doubles the rate (d0 = 0 keeps it exact).
    const auto [s1, r1] = sigma_eps_posterior(3.5, 50, 0.0, 0.0);
    const auto [s2, r2] = sigma_eps_posterior(7.0, 50, 0.0, 0.0);
    CHECK(s1 == s2);
    CHECK(r2 == doctest::Approx(2.0 * r1));
}

TEST_CASE("sigma_eps draws have the inverse-gamma mean") {
    Rng rng(6);
    const int m = 200;
    Eigen::MatrixXd alpha(m, 1);
    Eigen::VectorXd y(m);
    Eigen::VectorXd row(1);
    row << 0.7;
    for (int i = 0; i < m; ++i) {
        alpha(i, 0) = rng.normal();
        y[i] = 0.7 * alpha(i, 0) + 0.5 * rng.normal();
    }
    const double rss = (y - alpha * row).squaredNorm();
    const auto [shape, rate] = sigma_eps_posterior(rss, m, 0.01, 0.01);
    double mean = 0.0;
    const int n_draws = 100000;
    Rng draw_rng(8);
    for (int d = 0; d < n_draws; ++d) {
        mean += sample_sigma_eps(alpha, y, row, 0.01, 0.01, draw_rng);
    }
    mean /= n_draws;
    CHECK(mean == doctest::Approx(rate / (shape - 1.0)).epsilon(0.01));
}

TEST_CASE("sigma_eta: one factor collapses to exactly one") {
    std::vector<FactorTrajectory> traj(1);
    traj[0].states = {Eigen::VectorXd::Constant(1, 0.3),
                      Eigen::VectorXd::Constant(1, -0.4)};
    std::vector<std::vector<double>> gaps = {{1.0}};
    const auto priors = GibbsPriors::defaults(3, 1);
    Rng rng(12);
    const Eigen::MatrixXd draw = sample_sigma_eta(traj, gaps, priors, rng);
    CHECK(draw.rows() == 1);
    CHECK(draw(0, 0) == 1.0);
}

TEST_CASE("sigma_eta draws are correlation matrices") {
    Rng rng(14);
    std::vector<FactorTrajectory> traj;
    std::vector<std::vector<double>> gaps;
    for (int i = 0; i < 40; ++i) {
        FactorTrajectory t;
        std::vector<double> g;
        Eigen::VectorXd state = rng.normal_vector(3);
        t.states.push_back(state);
        for (int j = 0; j < 3; ++j) {
            const double gap = rng.uniform(0.5, 1.5);
            state += std::sqrt(gap) * rng.normal_vector(3);
            t.states.push_back(state);
            g.push_back(gap);
        }
        traj.push_back(std::move(t));
        gaps.push_back(std::move(g));
    }
    const auto priors = GibbsPriors::defaults(5, 3);
    Rng draw_rng(15);
    for (int d = 0; d < 10000; ++d) {
        const Eigen::MatrixXd s =
            sample_sigma_eta(traj, gaps, priors, draw_rng);
        for (int q = 0; q < 3; ++q) {
            REQUIRE(s(q, q) == 1.0);
        }
        REQUIRE(s.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("sigma_eta scatter divides increments by sqrt(gap)") {
    std::vector<FactorTrajectory> traj(1);
    traj[0].states = {Eigen::VectorXd::Zero(2),
                      Eigen::VectorXd::Constant(2, 2.0)};
    std::vector<std::vector<double>> gaps = {{4.0}};
    const auto priors = GibbsPriors::defaults(3, 2);
    const auto [dof, scatter] = sigma_eta_posterior(traj, gaps, priors);
    CHECK(dof == doctest::Approx(priors.eta_dof + 1.0));
    // Increment / sqrt(4) = (1,1): scatter = I + outer product of ones.
    CHECK(scatter(0, 0) == doctest::Approx(2.0));
    CHECK(scatter(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("negating a factor column and its states preserves residuals") {
    Rng rng(16);
    Eigen::MatrixXd loadings(4, 2);
    Eigen::MatrixXd alpha(6, 2);
    for (int i = 0; i < 4; ++i) {
        loadings(i, 0) = rng.normal();
        loadings(i, 1) = rng.normal();
    }
    for (int i = 0; i < 6; ++i) {
        alpha(i, 0) = rng.normal();
        alpha(i, 1) = rng.normal();
    }
    const Eigen::MatrixXd y = alpha * loadings.transpose();
    Eigen::MatrixXd flipped_g = loadings;
    Eigen::MatrixXd flipped_a = alpha;
    flipped_g.col(1) *= -1.0;
    flipped_a.col(1) *= -1.0;
    const Eigen::MatrixXd resid =
        y - alpha * loadings.transpose();
    const Eigen::MatrixXd resid_flipped =
        y - flipped_a * flipped_g.transpose();
    CHECK((resid - resid_flipped).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("run_gibbs with one retained iteration reports that draw") {
    const Cohort raw = generate_cohort(GenConfig::defaults(40, 2024));
    const Cohort cohort = prepared(raw);
    GibbsConfig config = quick_config(5, 6, 5);
    config.thin = 1;
    const PosteriorSummary summary = run_gibbs(cohort, config);
    REQUIRE(summary.loading_draws.size() == 1);
    CHECK((summary.loadings_hat - summary.loading_draws[0])
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("run_gibbs is deterministic given the seed") {
    const Cohort raw = generate_cohort(GenConfig::defaults(30, 99));
    const Cohort cohort = prepared(raw);
    const GibbsConfig config = quick_config(1234, 40, 20);
    const PosteriorSummary a = run_gibbs(cohort, config);
    const PosteriorSummary b = run_gibbs(cohort, config);
    CHECK((a.loadings_hat - b.loadings_hat).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.sigma_eps_hat - b.sigma_eps_hat).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.sigma_eta_hat - b.sigma_eta_hat).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < a.factor_scores.size(); ++i) {
        for (std::size_t v = 0; v < a.factor_scores[i].size(); ++v) {
            REQUIRE((a.factor_scores[i][v] - b.factor_scores[i][v])
                        .cwiseAbs()
                        .maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("posterior summary respects mask and anchors") {
    const Cohort raw = generate_cohort(GenConfig::defaults(60, 7));
    const Cohort cohort = prepared(raw);
    GibbsConfig config = quick_config(77, 120, 60);
    config.thin = 10;
    const PosteriorSummary summary = run_gibbs(cohort, config);
    const auto structure = LoadingStructure::four_domain_default();
    for (Eigen::Index k = 0; k < 10; ++k) {
        for (Eigen::Index q = 0; q < 4; ++q) {
            if (!structure.mask(k, q)) {
                REQUIRE(summary.loadings_hat(k, q) == 0.0);
            }
        }
    }
    for (Eigen::Index q = 0; q < 4; ++q) {
        CHECK(summary.loadings_hat(structure.anchor_row(q), q) >= 0.0);
    }
    for (const auto& draw : summary.loading_draws) {
        for (Eigen::Index q = 0; q < 4; ++q) {
            REQUIRE(draw(structure.anchor_row(q), q) >= 0.0);
        }
    }
    // Unit diagonal survives averaging.
    for (Eigen::Index q = 0; q < 4; ++q) {
        CHECK(summary.sigma_eta_hat(q, q) == 1.0);
    }
    CHECK(summary.diagnostics.size() == 10 + 10 + 6);
}

TEST_CASE("independent factors in truth stay uncorrelated in the fit") {
    // Longer follow-up and moderate noise sharpen the increment
    // correlations enough for a 200-subject check against zero.
    GenConfig gen = GenConfig::defaults(200, 615);
    gen.true_sigma_eta = Eigen::MatrixXd::Identity(4, 4);
    gen.visits_min = 6;
    gen.visits_max = 10;
    gen.true_sigma_eps = Eigen::VectorXd::Constant(10, 0.2);
    const Cohort cohort = prepared(generate_cohort(gen));
    const PosteriorSummary summary =
        run_gibbs(cohort, quick_config(17, 800, 400));
    for (Eigen::Index a = 0; a < 4; ++a) {
        for (Eigen::Index b = a + 1; b < 4; ++b) {
            CHECK(std::abs(summary.sigma_eta_hat(a, b)) < 0.05);
        }
    }
}

TEST_CASE("noise-free data drives sigma_eps estimates to zero") {
    GenConfig gen = GenConfig::defaults(80, 31);
    gen.true_sigma_eps = Eigen::VectorXd::Constant(10, 1e-4);
    const Cohort cohort = prepared(generate_cohort(gen));
    const PosteriorSummary summary =
        run_gibbs(cohort, quick_config(8, 200, 100));
    CHECK(summary.sigma_eps_hat.maxCoeff() < 1e-2);
}

TEST_CASE("loading-draw spread shrinks as the cohort grows") {
    auto spread = [](int n_subjects) {
        GenConfig gen = GenConfig::defaults(n_subjects, 404);
        const Cohort cohort = prepared(generate_cohort(gen));
        GibbsConfig config = quick_config(11, 300, 100);
        config.thin = 1;
        const PosteriorSummary summary = run_gibbs(cohort, config);
        double mean = 0.0;
        for (const auto& draw : summary.loading_draws) {
            mean += draw(0, 0);
        }
        mean /= static_cast<double>(summary.loading_draws.size());
        double var = 0.0;
        for (const auto& draw : summary.loading_draws) {
            var += (draw(0, 0) - mean) * (draw(0, 0) - mean);
        }
        return var / static_cast<double>(summary.loading_draws.size() - 1);
    };
    CHECK(spread(320) < spread(80));
}

TEST_CASE("run_gibbs rejects unprepared or mismatched input") {
    GibbsConfig config = quick_config(1, 10, 5);
    Cohort empty;
    empty.tests = default_test_catalog();
    CHECK_THROWS_AS((void)run_gibbs(empty, config), std::invalid_argument);
    config.burn_in = 20;
    const Cohort raw = generate_cohort(GenConfig::defaults(40, 1));
    CHECK_THROWS_AS((void)run_gibbs(prepared(raw), config),
                    std::invalid_argument);
}

TEST_SUITE_END();
