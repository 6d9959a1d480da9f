#include "cogsim/trial_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "cogsim/stats.hpp"

namespace cogsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<SurvivalRecord> derive_true_outcomes(const Cohort& cohort,
                                                 OutcomeReport* report) {
    OutcomeReport local{};
    const int apoe4 = cohort.covariate_index("apoe4_count");
    const int educ = cohort.covariate_index("education_years");
    const int sex = cohort.covariate_index("sex_male");
    if (apoe4 < 0 || educ < 0 || sex < 0) {
        throw std::invalid_argument(
            "derive_true_outcomes: cohort lacks apoe4/education/sex columns");
    }

    std::vector<SurvivalRecord> records;
    records.reserve(cohort.subjects.size());
    for (const auto& s : cohort.subjects) {
        SurvivalRecord rec;
        rec.subject_id = s.subject_id;
        rec.apoe4 = s.covariates[apoe4];
        rec.education = s.covariates[educ];
        rec.sex = s.covariates[sex];

        const double baseline = s.visit_days[1];
        const double event_time = s.endpoint.endpoint_days - baseline;
        const bool death_in_window =
            s.endpoint.death_days.has_value() &&
            *s.endpoint.death_days > baseline &&
            *s.endpoint.death_days - baseline <= kTrialWindowDays;

        if (s.endpoint.converted && event_time > 0.0 &&
            event_time <= kTrialWindowDays) {
            rec.kind = EventKind::Converted;
            rec.time_days = event_time;
            ++local.n_converted;
        } else if (death_in_window) {
            rec.kind = EventKind::DeathCensored;
            rec.time_days = *s.endpoint.death_days - baseline;
            ++local.n_death_censored;
        } else {
            // Censor at the post-baseline visit (inside the window) closest
            // to three years.
            double best = -1.0;
            double best_gap = kInf;
            for (double day : s.visit_days) {
                const double t = day - baseline;
                if (t <= 0.0 || t > kTrialWindowDays) {
                    continue;
                }
                const double gap = std::abs(t - kTrialCensorDays);
                if (gap < best_gap) {
                    best_gap = gap;
                    best = t;
                }
            }
            if (best > 0.0) {
                rec.kind = EventKind::Censored;
                rec.time_days = best;
                ++local.n_censored;
            } else {
                rec.kind = EventKind::LostToFollowUp;
                rec.time_days = 0.0;
                ++local.n_lost_to_follow_up;
            }
        }
        records.push_back(std::move(rec));
    }
    if (report != nullptr) {
        *report = local;
    }
    return records;
}

const char* selection_method_name(SelectionMethod method) {
    switch (method) {
        case SelectionMethod::Random:
            return "random";
        case SelectionMethod::FactorModel:
            return "factor_model";
        case SelectionMethod::CovariateModel:
            return "covariate_model";
    }
    return "unknown";
}

const std::vector<int>& SelectionPools::pool(SelectionMethod method) const {
    switch (method) {
        case SelectionMethod::Random:
            return all;
        case SelectionMethod::FactorModel:
            return factor_model;
        case SelectionMethod::CovariateModel:
            return covariate_model;
    }
    throw std::logic_error("unknown selection method");
}

std::vector<int> select_participants(SelectionMethod method,
                                     const SelectionPools& pools, int n,
                                     Rng& rng) {
    const auto& pool = pools.pool(method);
    if (pool.empty()) {
        throw std::runtime_error(
            std::string("select_participants: empty pool for method ") +
            selection_method_name(method));
    }
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        chosen.push_back(
            pool[rng.uniform_index(static_cast<std::uint64_t>(pool.size()))]);
    }
    return chosen;
}

std::vector<Enrollee> apply_treatment(const std::vector<SurvivalRecord>& records,
                                      const std::vector<int>& chosen,
                                      double effect, Rng& rng) {
    if (effect < 0.0 || effect >= 1.0) {
        throw std::invalid_argument("apply_treatment: effect must be in [0, 1)");
    }
    std::vector<Enrollee> out;
    out.reserve(chosen.size());
    for (int idx : chosen) {
        const SurvivalRecord& rec = records[static_cast<std::size_t>(idx)];
        Enrollee e;
        e.record = idx;
        e.treated = rng.bernoulli(0.5);
        e.time_days = rec.time_days;
        e.event = rec.event();
        e.analyzable = rec.analyzable();
        if (e.treated && e.event) {
            // Conversion survives the drug with probability 1 - effect;
            // otherwise censored at exactly three years.
            if (!rng.bernoulli(1.0 - effect)) {
                e.event = false;
                e.time_days = kTrialCensorDays;
            }
        }
        out.push_back(e);
    }
    return out;
}

namespace {

double cox_log_likelihood(const std::vector<CoxRow>& sorted,
                          const Eigen::VectorXd& beta) {
    // Breslow: iterate times descending, the risk set accumulates.
    double ll = 0.0;
    double s0 = 0.0;
    std::size_t i = sorted.size();
    while (i > 0) {
        std::size_t j = i;
        const double t = sorted[i - 1].time;
        double event_eta = 0.0;
        int d = 0;
        while (j > 0 && sorted[j - 1].time == t) {
            const double eta = beta.dot(sorted[j - 1].x);
            s0 += std::exp(eta);
            if (sorted[j - 1].event) {
                event_eta += eta;
                ++d;
            }
            --j;
        }
        if (d > 0) {
            ll += event_eta - static_cast<double>(d) * std::log(s0);
        }
        i = j;
    }
    return ll;
}

void cox_derivatives(const std::vector<CoxRow>& sorted,
                     const Eigen::VectorXd& beta, Eigen::VectorXd& grad,
                     Eigen::MatrixXd& info) {
    const Eigen::Index p = beta.size();
    grad = Eigen::VectorXd::Zero(p);
    info = Eigen::MatrixXd::Zero(p, p);
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    std::size_t i = sorted.size();
    while (i > 0) {
        std::size_t j = i;
        const double t = sorted[i - 1].time;
        Eigen::VectorXd event_x = Eigen::VectorXd::Zero(p);
        int d = 0;
        while (j > 0 && sorted[j - 1].time == t) {
            const auto& row = sorted[j - 1];
            const double w = std::exp(beta.dot(row.x));
            s0 += w;
            s1 += w * row.x;
            s2 += w * row.x * row.x.transpose();
            if (row.event) {
                event_x += row.x;
                ++d;
            }
            --j;
        }
        if (d > 0) {
            const Eigen::VectorXd mean = s1 / s0;
            grad += event_x - static_cast<double>(d) * mean;
            info += static_cast<double>(d) *
                    (s2 / s0 - mean * mean.transpose());
        }
        i = j;
    }
}

}  // namespace

CoxFit fit_cox(const std::vector<CoxRow>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("fit_cox: no rows");
    }
    const Eigen::Index p = rows.front().x.size();
    int n_events = 0;
    bool treat_any = false;
    bool control_any = false;
    for (const auto& r : rows) {
        if (r.event) {
            ++n_events;
        }
        (r.x[0] > 0.5 ? treat_any : control_any) = true;
    }
    if (n_events == 0) {
        throw std::runtime_error("fit_cox: no events");
    }
    if (!treat_any || !control_any) {
        throw std::runtime_error("fit_cox: treatment indicator does not vary");
    }

    std::vector<CoxRow> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const CoxRow& a, const CoxRow& b) {
                         return a.time < b.time;
                     });

    CoxFit fit;
    fit.beta = Eigen::VectorXd::Zero(p);
    double ll = cox_log_likelihood(sorted, fit.beta);
    Eigen::VectorXd grad(p);
    Eigen::MatrixXd info(p, p);
    for (int iter = 0; iter < 50; ++iter) {
        cox_derivatives(sorted, fit.beta, grad, info);
        fit.score_norm = grad.norm();
        if (fit.score_norm < 1e-8) {
            fit.converged = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            fit.monotone_flag = true;
            break;
        }
        Eigen::VectorXd step = ldlt.solve(grad);
        double new_ll = cox_log_likelihood(sorted, fit.beta + step);
        int halvings = 0;
        while (new_ll < ll && halvings < 30) {
            step *= 0.5;
            new_ll = cox_log_likelihood(sorted, fit.beta + step);
            ++halvings;
        }
        fit.beta += step;
        ll = new_ll;
        if (std::abs(fit.beta[0]) > 10.0) {
            fit.monotone_flag = true;  // boundary likelihood
            break;
        }
    }
    if (!fit.converged) {
        fit.monotone_flag = true;
    }

    cox_derivatives(sorted, fit.beta, grad, info);
    fit.score_norm = grad.norm();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    } else {
        fit.covariance = Eigen::MatrixXd::Constant(
            p, p, std::numeric_limits<double>::quiet_NaN());
        fit.monotone_flag = true;
    }
    fit.hr_treatment = std::exp(fit.beta[0]);
    fit.log_hr_se = std::sqrt(std::max(fit.covariance(0, 0), 0.0));
    fit.p_value = fit.log_hr_se > 0.0
                      ? wald_p_value(fit.beta[0] / fit.log_hr_se)
                      : 1.0;
    return fit;
}

double required_events(double hr, double alpha, double power,
                       double allocation) {
    if (hr <= 0.0) {
        throw std::invalid_argument("required_events: hr must be positive");
    }
    if (hr == 1.0) {
        return kInf;
    }
    const double z_alpha = normal_quantile(1.0 - alpha / 2.0);
    const double z_power = normal_quantile(power);
    const double log_hr = std::log(hr);
    const double d = (z_alpha + z_power) * (z_alpha + z_power) /
                     (allocation * (1.0 - allocation) * log_hr * log_hr);
    return std::ceil(d);
}

void TrialConfig::validate() const {
    if (n_enrolled < 2) {
        throw std::invalid_argument("trial config: n_enrolled must be >= 2");
    }
    if (n_replicates < 1) {
        throw std::invalid_argument("trial config: n_replicates must be >= 1");
    }
    for (double e : effects) {
        if (e < 0.0 || e >= 1.0) {
            throw std::invalid_argument(
                "trial config: effects must lie in [0, 1)");
        }
    }
    if (alpha <= 0.0 || alpha >= 1.0 || target_power <= 0.0 ||
        target_power >= 1.0) {
        throw std::invalid_argument("trial config: invalid alpha/power");
    }
}

TrialReplicate replicate_summary(const CoxFit& fit, int n_events,
                                 int n_analyzable, const TrialConfig& config) {
    if (n_analyzable <= 0) {
        throw std::runtime_error("replicate_summary: no analyzable subjects");
    }
    TrialReplicate rep;
    rep.hr_hat = fit.hr_treatment;
    rep.log_hr_se = fit.log_hr_se;
    rep.p_value = fit.p_value;
    rep.n_events = n_events;
    rep.event_probability =
        static_cast<double>(n_events) / static_cast<double>(n_analyzable);
    if (fit.monotone_flag || rep.hr_hat > 1.0) {
        rep.flagged = true;
        rep.power = 0.0;
        rep.required_n = kInf;
        return rep;
    }
    const double z_alpha = normal_quantile(1.0 - config.alpha / 2.0);
    rep.power = normal_cdf(
        std::sqrt(static_cast<double>(n_events) * 0.25) *
            std::abs(std::log(rep.hr_hat)) -
        z_alpha);
    const double d_req =
        required_events(rep.hr_hat, config.alpha, config.target_power);
    rep.required_n = std::isinf(d_req)
                         ? kInf
                         : std::ceil(d_req / rep.event_probability);
    return rep;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (values.size() % 2 == 1) {
        return hi;
    }
    std::nth_element(values.begin(), values.begin() + mid - 1,
                     values.begin() + mid);
    const double lo = values[mid - 1];
    if (std::isinf(hi) && std::isinf(lo)) {
        return hi;
    }
    return 0.5 * (lo + hi);
}

const TrialCell& TrialGridResult::cell(SelectionMethod method,
                                       double effect) const {
    for (const auto& c : cells) {
        if (c.method == method && std::abs(c.effect - effect) < 1e-12) {
            return c;
        }
    }
    throw std::out_of_range("trial grid: no such cell");
}

TrialGridResult run_trial_grid(const std::vector<SurvivalRecord>& records,
                               const SelectionPools& pools,
                               const TrialConfig& config) {
    config.validate();
    const SelectionMethod methods[] = {SelectionMethod::Random,
                                       SelectionMethod::FactorModel,
                                       SelectionMethod::CovariateModel};
    TrialGridResult grid;
    for (SelectionMethod method : methods) {
        if (pools.pool(method).empty()) {
            throw std::runtime_error(
                std::string("run_trial_grid: empty selection pool for ") +
                selection_method_name(method));
        }
    }
    for (std::size_t mi = 0; mi < 3; ++mi) {
        const SelectionMethod method = methods[mi];
        for (std::size_t ei = 0; ei < config.effects.size(); ++ei) {
            const double effect = config.effects[ei];
            TrialCell cell;
            cell.method = method;
            cell.effect = effect;
            std::vector<double> powers;
            std::vector<double> required;
            for (int rep = 0; rep < config.n_replicates; ++rep) {
                Rng rng = Rng::substream(
                    config.seed,
                    {21, static_cast<std::uint64_t>(mi),
                     static_cast<std::uint64_t>(ei),
                     static_cast<std::uint64_t>(rep)});
                try {
                    const auto chosen = select_participants(
                        method, pools, config.n_enrolled, rng);
                    const auto enrollees =
                        apply_treatment(records, chosen, effect, rng);
                    std::vector<CoxRow> rows;
                    rows.reserve(enrollees.size());
                    int n_events = 0;
                    int n_analyzable = 0;
                    for (const auto& e : enrollees) {
                        if (!e.analyzable) {
                            continue;
                        }
                        ++n_analyzable;
                        n_events += e.event ? 1 : 0;
                        const auto& base =
                            records[static_cast<std::size_t>(e.record)];
                        CoxRow row;
                        row.time = e.time_days;
                        row.event = e.event;
                        row.x.resize(4);
                        row.x << (e.treated ? 1.0 : 0.0), base.apoe4,
                            base.education, base.sex;
                        rows.push_back(std::move(row));
                    }
                    const CoxFit fit = fit_cox(rows);
                    const TrialReplicate summary =
                        replicate_summary(fit, n_events, n_analyzable, config);
                    powers.push_back(summary.power);
                    required.push_back(summary.required_n);
                    cell.power_draws.push_back(summary.power);
                    if (summary.power == 0.0) {
                        ++cell.n_zero_power;
                    }
                    if (!fit.monotone_flag) {
                        // Observed HRs above one still belong in the
                        // distribution; only boundary fits are dropped.
                        cell.hr_draws.push_back(summary.hr_hat);
                        cell.p_values.push_back(summary.p_value);
                    }
                } catch (const std::exception&) {
                    ++cell.n_failed;
                }
            }
            cell.median_power = median(powers);
            cell.median_required_n = median(required);
            cell.median_hr = median(cell.hr_draws);
            std::vector<double> nonzero;
            for (double v : powers) {
                if (v > 0.0) {
                    nonzero.push_back(v);
                }
            }
            cell.median_power_excluding_zero = median(nonzero);
            grid.cells.push_back(std::move(cell));
        }
    }
    return grid;
}

}  // namespace cogsim
