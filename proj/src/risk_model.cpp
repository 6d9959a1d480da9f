#include "cogsim/risk_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "cogsim/stats.hpp"

namespace cogsim {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bernoulli_log_likelihood(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        // log p = -log(1 + exp(-eta)) for y=1, -log(1 + exp(eta)) for y=0.
        const double sign = y[i] > 0.5 ? 1.0 : -1.0;
        const double v = -sign * eta[i];
        ll -= v > 35.0 ? v : std::log1p(std::exp(v));
    }
    return ll;
}

}  // namespace

Eigen::VectorXd LogisticFit::predict(const RiskDataset& data) const {
    Eigen::VectorXd eta =
        Eigen::VectorXd::Constant(data.n_rows(), coefficients[0]);
    for (std::size_t j = 0; j < columns.size(); ++j) {
        eta += coefficients[static_cast<Eigen::Index>(j) + 1] *
               data.x.col(columns[j]);
    }
    return eta.unaryExpr([](double v) { return logistic(v); });
}

LogisticFit fit_logistic(const RiskDataset& data) {
    std::vector<int> all(data.term_names.size());
    std::iota(all.begin(), all.end(), 0);
    return fit_logistic(data, all);
}

LogisticFit fit_logistic(const RiskDataset& data,
                         const std::vector<int>& columns) {
    const Eigen::Index n = data.n_rows();
    const Eigen::Index p = static_cast<Eigen::Index>(columns.size()) + 1;
    if (n < p) {
        throw std::runtime_error("fit_logistic: more terms than rows");
    }
    const double events = data.y.sum();
    if (events <= 0.0 || events >= static_cast<double>(n)) {
        throw std::runtime_error(
            "fit_logistic: outcome has a single class, cannot fit");
    }

    // Original-scale design with intercept.
    Eigen::MatrixXd x(n, p);
    x.col(0).setOnes();
    for (Eigen::Index j = 1; j < p; ++j) {
        x.col(j) = data.x.col(columns[static_cast<std::size_t>(j - 1)]);
    }

    // Standardize non-intercept columns for conditioning and so the
    // separation monitor sees per-sd effect sizes.
    Eigen::VectorXd center = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
    Eigen::MatrixXd xs = x;
    for (Eigen::Index j = 1; j < p; ++j) {
        center[j] = x.col(j).mean();
        const double sd =
            std::sqrt((x.col(j).array() - center[j]).square().sum() /
                      static_cast<double>(n));
        if (sd <= 0.0) {
            throw std::runtime_error(
                "fit_logistic: constant predictor column '" +
                data.term_names[columns[static_cast<std::size_t>(j - 1)]] +
                "'");
        }
        scale[j] = sd;
        xs.col(j) = (x.col(j).array() - center[j]) / sd;
    }

    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
        qr.setThreshold(1e-8);
        if (qr.rank() < p) {
            std::string names;
            const auto perm = qr.colsPermutation().indices();
            for (Eigen::Index i = qr.rank(); i < p; ++i) {
                if (!names.empty()) {
                    names += ", ";
                }
                const Eigen::Index col = perm[i];
                names += col == 0 ? "(intercept)"
                                  : data.term_names[columns[static_cast<
                                        std::size_t>(col - 1)]];
            }
            throw std::runtime_error(
                "fit_logistic: rank-deficient design; collinear columns: " +
                names);
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = xs * beta;
    double ll = bernoulli_log_likelihood(data.y, eta);
    bool converged = false;
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::VectorXd prob =
            eta.unaryExpr([](double v) { return logistic(v); });
        const Eigen::VectorXd grad = xs.transpose() * (data.y - prob);
        if (grad.norm() < 1e-8) {
            converged = true;
            break;
        }
        const Eigen::VectorXd w =
            (prob.array() * (1.0 - prob.array())).max(1e-12);
        const Eigen::MatrixXd info =
            xs.transpose() * w.asDiagonal() * xs;
        Eigen::VectorXd step = info.ldlt().solve(grad);
        // Step halving keeps the log-likelihood non-decreasing.
        double new_ll = bernoulli_log_likelihood(data.y, xs * (beta + step));
        int halvings = 0;
        while (new_ll < ll && halvings < 30) {
            step *= 0.5;
            new_ll = bernoulli_log_likelihood(data.y, xs * (beta + step));
            ++halvings;
        }
        beta += step;
        eta = xs * beta;
        ll = new_ll;
        for (Eigen::Index j = 1; j < p; ++j) {
            if (std::abs(beta[j]) > 15.0) {
                throw separation_error(
                    "fit_logistic: complete separation suspected (|beta| > 15 "
                    "on standardized predictor '" +
                    data.term_names[columns[static_cast<std::size_t>(j - 1)]] +
                    "')");
            }
        }
    }

    // Map back to the original scale.
    LogisticFit fit;
    fit.columns = columns;
    fit.term_names.push_back("(intercept)");
    for (int c : columns) {
        fit.term_names.push_back(data.term_names[c]);
    }
    fit.coefficients.resize(p);
    fit.coefficients[0] = beta[0];
    for (Eigen::Index j = 1; j < p; ++j) {
        fit.coefficients[j] = beta[j] / scale[j];
        fit.coefficients[0] -= beta[j] * center[j] / scale[j];
    }

    // Observed information on the original design at the optimum.
    const Eigen::VectorXd prob =
        (x * fit.coefficients).unaryExpr([](double v) { return logistic(v); });
    const Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).max(1e-12);
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
    fit.wald_p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double se = std::sqrt(std::max(fit.covariance(j, j), 0.0));
        fit.wald_p[j] = se > 0.0 ? wald_p_value(fit.coefficients[j] / se) : 1.0;
    }
    fit.log_likelihood = bernoulli_log_likelihood(data.y, x * fit.coefficients);
    fit.converged = converged;
    return fit;
}

LogisticFit select_final_model(const LogisticFit& full_fit,
                               const RiskDataset& data, double alpha) {
    std::vector<int> keep;
    for (std::size_t j = 0; j < full_fit.columns.size(); ++j) {
        const int col = full_fit.columns[j];
        const bool is_main = col < data.n_main_terms;
        if (!is_main ||
            full_fit.wald_p[static_cast<Eigen::Index>(j) + 1] < alpha) {
            keep.push_back(col);
        }
    }
    bool fallback = true;
    for (int col : keep) {
        if (col < data.n_main_terms) {
            fallback = false;
            break;
        }
    }
    if (keep.size() == full_fit.columns.size()) {
        return full_fit;  // nothing pruned
    }
    LogisticFit refit = fit_logistic(data, keep);
    refit.covariate_only_fallback = fallback;
    return refit;
}

Classification classification_metrics(const LogisticFit& fit,
                                      const RiskDataset& data,
                                      double threshold) {
    const Eigen::VectorXd prob = fit.predict(data);
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
        const bool call = prob[i] >= threshold;
        if (data.y[i] > 0.5) {
            call ? ++tp : ++fn;
        } else {
            call ? ++fp : ++tn;
        }
    }
    Classification out;
    if (tp + fn > 0) {
        out.sensitivity = static_cast<double>(tp) /
                          static_cast<double>(tp + fn);
        out.sensitivity_defined = true;
    }
    if (tn + fp > 0) {
        out.specificity = static_cast<double>(tn) /
                          static_cast<double>(tn + fp);
        out.specificity_defined = true;
    }
    return out;
}

ThresholdScan balanced_threshold(const LogisticFit& fit,
                                 const RiskDataset& data) {
    const Eigen::VectorXd prob = fit.predict(data);
    std::size_t n_pos = 0;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
        if (data.y[i] > 0.5) {
            ++n_pos;
        }
    }
    const std::size_t n_neg = static_cast<std::size_t>(data.n_rows()) - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::runtime_error(
            "balanced_threshold: both outcome classes required");
    }

    ThresholdScan best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int step = 1; step <= 999; ++step) {
        const double t = static_cast<double>(step) / 1000.0;
        std::size_t tp = 0;
        std::size_t tn = 0;
        for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
            const bool call = prob[i] >= t;
            if (data.y[i] > 0.5 && call) {
                ++tp;
            } else if (data.y[i] <= 0.5 && !call) {
                ++tn;
            }
        }
        const double sens = static_cast<double>(tp) /
                            static_cast<double>(n_pos);
        const double spec = static_cast<double>(tn) /
                            static_cast<double>(n_neg);
        const double gap = std::abs(sens - spec);
        if (gap < best_gap) {
            best_gap = gap;
            best.threshold = t;
            best.sensitivity = sens;
            best.specificity = spec;
        }
    }
    best.degenerate = prob.maxCoeff() - prob.minCoeff() < 1e-12;
    return best;
}

std::set<std::string> high_risk_subset(const LogisticFit& fit,
                                       const RiskDataset& data,
                                       double threshold) {
    const Eigen::VectorXd prob = fit.predict(data);
    std::set<std::string> ids;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
        if (prob[i] > threshold) {
            ids.insert(data.subject_ids[static_cast<std::size_t>(i)]);
        }
    }
    return ids;
}

namespace {

double trial_window_outcome(const SubjectSeries& s, double horizon_days) {
    const double baseline = s.visit_days[1];
    return (s.endpoint.converted &&
            s.endpoint.endpoint_days > baseline &&
            s.endpoint.endpoint_days - baseline <= horizon_days)
               ? 1.0
               : 0.0;
}

void append_covariates(const Cohort& cohort, RiskDataset& data) {
    for (const auto& name : cohort.covariate_names) {
        data.term_names.push_back(name);
    }
}

}  // namespace

RiskDataset make_factor_risk_dataset(
    const Cohort& cohort,
    const std::vector<std::vector<Eigen::VectorXd>>& factor_scores,
    const std::vector<std::string>& factor_names,
    const std::vector<int>& factor_columns, double horizon_days) {
    if (factor_scores.size() != cohort.subjects.size()) {
        throw std::invalid_argument(
            "make_factor_risk_dataset: factor scores do not match cohort");
    }
    RiskDataset data;
    for (int q : factor_columns) {
        data.term_names.push_back(factor_names[static_cast<std::size_t>(q)]);
    }
    data.n_main_terms = static_cast<int>(factor_columns.size());
    append_covariates(cohort, data);

    const Eigen::Index n = static_cast<Eigen::Index>(cohort.subjects.size());
    data.x.resize(n, static_cast<Eigen::Index>(data.term_names.size()));
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = cohort.subjects[static_cast<std::size_t>(i)];
        const auto& scores = factor_scores[static_cast<std::size_t>(i)];
        if (scores.size() != s.n_visits()) {
            throw std::invalid_argument(
                "make_factor_risk_dataset: per-visit score count mismatch");
        }
        for (std::size_t c = 0; c < factor_columns.size(); ++c) {
            data.x(i, static_cast<Eigen::Index>(c)) =
                scores[1][factor_columns[c]];
        }
        data.x.row(i).tail(cohort.n_covariates()) = s.covariates.transpose();
        data.y[i] = trial_window_outcome(s, horizon_days);
        data.subject_ids.push_back(s.subject_id);
    }
    return data;
}

RiskDataset make_test_risk_dataset(const Cohort& cohort, int test_index,
                                   double horizon_days) {
    RiskDataset data;
    data.term_names.push_back(cohort.tests[test_index].name);
    data.n_main_terms = 1;
    append_covariates(cohort, data);

    const Eigen::Index n = static_cast<Eigen::Index>(cohort.subjects.size());
    data.x.resize(n, static_cast<Eigen::Index>(data.term_names.size()));
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = cohort.subjects[static_cast<std::size_t>(i)];
        data.x(i, 0) = s.scores(1, test_index);  // trial-baseline visit
        data.x.row(i).tail(cohort.n_covariates()) = s.covariates.transpose();
        data.y[i] = trial_window_outcome(s, horizon_days);
        data.subject_ids.push_back(s.subject_id);
    }
    return data;
}

RiskDataset make_covariate_risk_dataset(const Cohort& cohort,
                                        double horizon_days) {
    RiskDataset data;
    data.n_main_terms = 0;
    append_covariates(cohort, data);

    const Eigen::Index n = static_cast<Eigen::Index>(cohort.subjects.size());
    data.x.resize(n, static_cast<Eigen::Index>(data.term_names.size()));
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = cohort.subjects[static_cast<std::size_t>(i)];
        data.x.row(i) = s.covariates.transpose();
        data.y[i] = trial_window_outcome(s, horizon_days);
        data.subject_ids.push_back(s.subject_id);
    }
    return data;
}

}  // namespace cogsim
