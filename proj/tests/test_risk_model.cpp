#include <doctest.h>

#include <cmath>

#include "cogsim/rng.hpp"
#include "cogsim/risk_model.hpp"
#include "cogsim/stats.hpp"

using namespace cogsim;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Simulated logistic data with known coefficients. Terms beyond
// n_main_terms act as always-kept covariates.
RiskDataset simulate(int n, const Eigen::VectorXd& beta, int n_main,
                     std::uint64_t seed) {
    const int p = static_cast<int>(beta.size()) - 1;
    RiskDataset data;
    for (int j = 0; j < p; ++j) {
        data.term_names.push_back("x" + std::to_string(j + 1));
    }
    data.n_main_terms = n_main;
    data.x.resize(n, p);
    data.y.resize(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        double eta = beta[0];
        for (int j = 0; j < p; ++j) {
            data.x(i, j) = rng.normal();
            eta += beta[j + 1] * data.x(i, j);
        }
        data.y[i] = rng.bernoulli(logistic(eta)) ? 1.0 : 0.0;
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    return data;
}

double grid_log_likelihood(const RiskDataset& data, double b0, double b1) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
        const double p = logistic(b0 + b1 * data.x(i, 0));
        ll += data.y[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
    }
    return ll;
}

// Coarse-to-fine grid maximization of the 2-parameter log-likelihood.
std::pair<double, double> grid_search_oracle(const RiskDataset& data) {
    double b0 = 0.0;
    double b1 = 0.0;
    double half = 4.0;
    for (int level = 0; level < 24; ++level) {
        double best = -1e300;
        double best0 = b0;
        double best1 = b1;
        for (int i = -10; i <= 10; ++i) {
            for (int j = -10; j <= 10; ++j) {
                const double c0 = b0 + half * i / 10.0;
                const double c1 = b1 + half * j / 10.0;
                const double ll = grid_log_likelihood(data, c0, c1);
                if (ll > best) {
                    best = ll;
                    best0 = c0;
                    best1 = c1;
                }
            }
        }
        b0 = best0;
        b1 = best1;
        half *= 0.25;
    }
    return {b0, b1};
}

}  // namespace

TEST_SUITE_BEGIN("risk_model");

TEST_CASE("intercept-only fit equals the logit of the event rate") {
    RiskDataset data;
    data.n_main_terms = 0;
    data.x.resize(10, 0);
    data.y.resize(10);
    data.y << 1, 0, 0, 1, 0, 0, 0, 0, 0, 1;
    for (int i = 0; i < 10; ++i) {
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    const LogisticFit fit = fit_logistic(data);
    CHECK(fit.coefficients[0] ==
          doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-10));
    CHECK(fit.converged);
}

TEST_CASE("null predictor stays near zero with a calibrated p-value") {
    Eigen::VectorXd beta(3);
    beta << -1.0, 0.0, 0.8;
    const RiskDataset data = simulate(5000, beta, 1, 42);
    const LogisticFit fit = fit_logistic(data);
    CHECK(std::abs(fit.coefficients[1]) < 0.1);
    CHECK(fit.wald_p[1] > 0.001);
}

TEST_CASE("estimates match the grid-search oracle") {
    Eigen::VectorXd beta(2);
    beta << -0.5, 0.9;
    const RiskDataset data = simulate(400, beta, 1, 7);
    const LogisticFit fit = fit_logistic(data);
    const auto [b0, b1] = grid_search_oracle(data);
    CHECK(fit.coefficients[0] == doctest::Approx(b0).epsilon(2e-3));
    CHECK(fit.coefficients[1] == doctest::Approx(b1).epsilon(2e-3));
}

TEST_CASE("analytic gradient matches finite differences") {
    Eigen::VectorXd beta(3);
    beta << -0.7, 0.5, -0.4;
    const RiskDataset data = simulate(300, beta, 1, 11);
    Eigen::MatrixXd x(data.n_rows(), 3);
    x.col(0).setOnes();
    x.col(1) = data.x.col(0);
    x.col(2) = data.x.col(1);
    auto loglik = [&](const Eigen::VectorXd& b) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
            const double p = logistic(x.row(i).dot(b));
            ll += data.y[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
        }
        return ll;
    };
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd b = rng.normal_vector(3);
        const Eigen::VectorXd prob =
            (x * b).unaryExpr([](double v) { return logistic(v); });
        const Eigen::VectorXd grad = x.transpose() * (data.y - prob);
        for (int j = 0; j < 3; ++j) {
            const double h = 1e-6;
            Eigen::VectorXd bp = b;
            Eigen::VectorXd bm = b;
            bp[j] += h;
            bm[j] -= h;
            const double fd = (loglik(bp) - loglik(bm)) / (2.0 * h);
            CHECK(grad[j] ==
                  doctest::Approx(fd).epsilon(1e-6).scale(
                      std::max(1.0, std::abs(grad[j]))));
        }
    }
}

TEST_CASE("fitted probabilities are invariant to affine predictor changes") {
    Eigen::VectorXd beta(3);
    beta << -0.8, 0.6, -0.5;
    const RiskDataset data = simulate(500, beta, 1, 17);
    RiskDataset scaled = data;
    scaled.x.col(0) = 2.0 * data.x.col(0).array() + 1.0;
    const Eigen::VectorXd p1 = fit_logistic(data).predict(data);
    const Eigen::VectorXd p2 = fit_logistic(scaled).predict(scaled);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("risk increases along a positive coefficient") {
    Eigen::VectorXd beta(2);
    beta << -1.0, 0.9;
    const RiskDataset data = simulate(2000, beta, 1, 19);
    const LogisticFit fit = fit_logistic(data);
    RiskDataset probe = data;
    probe.x.col(0).setLinSpaced(data.n_rows(), -3.0, 3.0);
    const Eigen::VectorXd p = fit.predict(probe);
    for (Eigen::Index i = 1; i < p.size(); ++i) {
        REQUIRE(p[i] > p[i - 1]);
    }
}

TEST_CASE("complete separation raises separation_error") {
    RiskDataset data;
    data.term_names = {"x1"};
    data.n_main_terms = 1;
    data.x.resize(20, 1);
    data.y.resize(20);
    for (int i = 0; i < 20; ++i) {
        data.x(i, 0) = i < 10 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i;
        data.y[i] = i < 10 ? 0.0 : 1.0;
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    CHECK_THROWS_AS((void)fit_logistic(data), separation_error);
}

TEST_CASE("single-class outcomes are rejected") {
    Eigen::VectorXd beta(2);
    beta << -1.0, 0.5;
    RiskDataset data = simulate(50, beta, 1, 23);
    data.y.setZero();
    CHECK_THROWS_AS((void)fit_logistic(data), std::runtime_error);
}

TEST_CASE("rank-deficient design names the duplicated column") {
    Eigen::VectorXd beta(3);
    beta << -1.0, 0.5, 0.0;
    RiskDataset data = simulate(100, beta, 1, 29);
    data.x.col(1) = 3.0 * data.x.col(0);
    CHECK_THROWS_WITH_AS((void)fit_logistic(data),
                         doctest::Contains("collinear"), std::runtime_error);
}

TEST_CASE("select_final_model keeps exactly the signal factors") {
    // Factors 1 and 3 carry signal; factors 2 and 4 are null. Covariate
    // column is always retained.
    Eigen::VectorXd beta(6);
    beta << -1.2, 0.6, 0.0, -0.6, 0.0, 0.4;
    const RiskDataset data = simulate(5000, beta, 4, 31);
    const LogisticFit full = fit_logistic(data);
    const LogisticFit final_fit = select_final_model(full, data);
    REQUIRE(final_fit.columns.size() == 3);  // two factors + covariate
    CHECK(final_fit.columns[0] == 0);
    CHECK(final_fit.columns[1] == 2);
    CHECK(final_fit.columns[2] == 4);
    CHECK_FALSE(final_fit.covariate_only_fallback);
}

TEST_CASE("all-null factors fall back to the covariate-only model") {
    Eigen::VectorXd beta(4);
    beta << -1.0, 0.0, 0.0, 0.7;
    const RiskDataset data = simulate(4000, beta, 2, 38);
    const LogisticFit full = fit_logistic(data);
    const LogisticFit final_fit = select_final_model(full, data);
    CHECK(final_fit.covariate_only_fallback);
    REQUIRE(final_fit.columns.size() == 1);
    CHECK(final_fit.columns[0] == 2);
}

TEST_CASE("all-significant factors leave the model unchanged") {
    Eigen::VectorXd beta(4);
    beta << -1.0, 0.8, -0.7, 0.5;
    const RiskDataset data = simulate(5000, beta, 3, 41);
    const LogisticFit full = fit_logistic(data);
    const LogisticFit final_fit = select_final_model(full, data);
    CHECK(final_fit.columns == full.columns);
    CHECK((final_fit.coefficients - full.coefficients).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("classification boundaries behave at extreme thresholds") {
    Eigen::VectorXd beta(2);
    beta << 0.0, 1.0;
    const RiskDataset data = simulate(500, beta, 1, 43);
    const LogisticFit fit = fit_logistic(data);
    const Classification at0 = classification_metrics(fit, data, 0.0);
    CHECK(at0.sensitivity == 1.0);
    CHECK(at0.specificity == 0.0);
    const Classification at1 = classification_metrics(fit, data, 1.0);
    CHECK(at1.sensitivity == 0.0);
    CHECK(at1.specificity == 1.0);
}

TEST_CASE("perfect predictor scores perfectly at interior thresholds") {
    RiskDataset data;
    data.term_names = {"x1"};
    data.n_main_terms = 1;
    data.x.resize(10, 1);
    data.y.resize(10);
    for (int i = 0; i < 10; ++i) {
        data.y[i] = i < 5 ? 0.0 : 1.0;
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    LogisticFit fit;
    fit.term_names = {"(intercept)", "x1"};
    fit.columns = {0};
    fit.coefficients.resize(2);
    fit.coefficients << -10.0, 20.0;
    data.x.col(0) = data.y;
    for (double t : {0.2, 0.5, 0.8}) {
        const Classification m = classification_metrics(fit, data, t);
        CHECK(m.sensitivity == 1.0);
        CHECK(m.specificity == 1.0);
    }
}

TEST_CASE("undefined sensitivity is flagged when no positives exist") {
    RiskDataset data;
    data.term_names = {"x1"};
    data.n_main_terms = 1;
    data.x = Eigen::MatrixXd::Random(6, 1);
    data.y = Eigen::VectorXd::Zero(6);
    for (int i = 0; i < 6; ++i) {
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    LogisticFit fit;
    fit.term_names = {"(intercept)", "x1"};
    fit.columns = {0};
    fit.coefficients.resize(2);
    fit.coefficients << 0.0, 1.0;
    const Classification m = classification_metrics(fit, data, 0.5);
    CHECK_FALSE(m.sensitivity_defined);
    CHECK(m.specificity_defined);
}

TEST_CASE("balanced threshold tracks the event rate on symmetric scores") {
    Eigen::VectorXd beta(2);
    beta << -2.0, 1.0;
    const RiskDataset data = simulate(20000, beta, 1, 47);
    const LogisticFit fit = fit_logistic(data);
    const ThresholdScan scan = balanced_threshold(fit, data);
    CHECK_FALSE(scan.degenerate);
    CHECK(std::abs(scan.sensitivity - scan.specificity) < 0.02);
    const double rate = data.y.mean();
    CHECK(std::abs(scan.threshold - rate) < 0.05);

    // Exhaustive re-scan confirms the grid minimum.
    double best_gap = 1e9;
    for (int s = 1; s <= 999; ++s) {
        const double t = s / 1000.0;
        const Classification m = classification_metrics(fit, data, t);
        best_gap = std::min(best_gap,
                            std::abs(m.sensitivity - m.specificity));
    }
    CHECK(std::abs(scan.sensitivity - scan.specificity) ==
          doctest::Approx(best_gap));
}

TEST_CASE("degenerate constant predictions flag and pick the lowest step") {
    RiskDataset data;
    data.term_names = {"x1"};
    data.n_main_terms = 1;
    data.x = Eigen::MatrixXd::Zero(10, 1);
    data.y.resize(10);
    data.y << 1, 0, 1, 0, 0, 0, 0, 1, 0, 0;
    for (int i = 0; i < 10; ++i) {
        data.subject_ids.push_back("S" + std::to_string(i));
    }
    LogisticFit fit;
    fit.term_names = {"(intercept)", "x1"};
    fit.columns = {0};
    fit.coefficients.resize(2);
    fit.coefficients << -0.5, 0.3;
    const ThresholdScan scan = balanced_threshold(fit, data);
    CHECK(scan.degenerate);
    CHECK(scan.threshold == doctest::Approx(0.001));
    CHECK(scan.sensitivity + scan.specificity == doctest::Approx(1.0));
}

TEST_CASE("high-risk subset obeys strict-threshold set semantics") {
    Eigen::VectorXd beta(2);
    beta << -1.0, 1.0;
    const RiskDataset data = simulate(200, beta, 1, 53);
    const LogisticFit fit = fit_logistic(data);
    CHECK(high_risk_subset(fit, data, 1.0).empty());
    CHECK(high_risk_subset(fit, data, 0.0).size() ==
          static_cast<std::size_t>(data.n_rows()));
    const Eigen::VectorXd p = fit.predict(data);
    const double cut = p[10];
    const auto subset = high_risk_subset(fit, data, cut);
    CHECK(subset.count(data.subject_ids[10]) == 0);  // strictly greater
}

TEST_SUITE_END();
