#include <doctest.h>

#include <cmath>

#include "cogsim/rng.hpp"
#include "cogsim/stats.hpp"
#include "cogsim/synthetic.hpp"
#include "cogsim/trial_sim.hpp"

using namespace cogsim;

namespace {

SubjectSeries trial_subject(const std::string& id,
                            std::vector<double> visit_days, bool converted,
                            double endpoint_days,
                            std::optional<double> death_days = std::nullopt) {
    SubjectSeries s;
    s.subject_id = id;
    s.visit_days = std::move(visit_days);
    s.scores = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(s.visit_days.size()), 1);
    s.covariates = Eigen::VectorXd::Zero(3);
    s.endpoint.converted = converted;
    s.endpoint.endpoint_days = endpoint_days;
    s.endpoint.death_days = death_days;
    return s;
}

Cohort trial_cohort(std::vector<SubjectSeries> subjects) {
    Cohort c;
    c.tests = {{0, "test_a", false}};
    c.covariate_names = {"apoe4_count", "education_years", "sex_male"};
    c.subjects = std::move(subjects);
    return c;
}

// Exponential survival data with a known treatment hazard ratio.
std::vector<CoxRow> exponential_rows(int n, double hr, double censor_at,
                                     Rng& rng) {
    std::vector<CoxRow> rows;
    for (int i = 0; i < n; ++i) {
        CoxRow row;
        const bool treated = rng.bernoulli(0.5);
        row.x.resize(1);
        row.x << (treated ? 1.0 : 0.0);
        const double rate = 0.2 * (treated ? hr : 1.0);
        const double t = rng.exponential(rate);
        row.event = t <= censor_at;
        row.time = row.event ? t : censor_at;
        rows.push_back(std::move(row));
    }
    return rows;
}

double cox_loglik_1d(const std::vector<CoxRow>& rows, double beta) {
    // Independent Breslow evaluation: explicit risk sets per event.
    double ll = 0.0;
    for (const auto& r : rows) {
        if (!r.event) {
            continue;
        }
        double denom = 0.0;
        for (const auto& s : rows) {
            if (s.time >= r.time) {
                denom += std::exp(beta * s.x[0]);
            }
        }
        ll += beta * r.x[0] - std::log(denom);
    }
    return ll;
}

}  // namespace

TEST_SUITE_BEGIN("trial_sim");

TEST_CASE("outcome derivation follows the event, censor, and death rules") {
    // Baseline is the second visit (day 200).
    auto converter =
        trial_subject("C", {0.0, 200.0, 600.0}, true, 600.0);
    auto censored = trial_subject(
        "N", {0.0, 200.0, 500.0, 1350.0, 1900.0}, false, 1900.0);
    auto dead = trial_subject("D", {0.0, 200.0, 500.0}, false, 500.0, 700.0);
    auto lost = trial_subject("L", {0.0, 200.0}, false, 200.0);
    OutcomeReport report;
    const auto records = derive_true_outcomes(
        trial_cohort({converter, censored, dead, lost}), &report);

    CHECK(records[0].kind == EventKind::Converted);
    CHECK(records[0].time_days == doctest::Approx(400.0));

    // Candidate censoring visits at 300 and 1150 days past baseline; 1150
    // is closer to three years (1095.75).
    CHECK(records[1].kind == EventKind::Censored);
    CHECK(records[1].time_days == doctest::Approx(1150.0));

    CHECK(records[2].kind == EventKind::DeathCensored);
    CHECK(records[2].time_days == doctest::Approx(500.0));

    CHECK(records[3].kind == EventKind::LostToFollowUp);
    CHECK_FALSE(records[3].analyzable());

    CHECK(report.n_converted == 1);
    CHECK(report.n_censored == 1);
    CHECK(report.n_death_censored == 1);
    CHECK(report.n_lost_to_follow_up == 1);
}

TEST_CASE("conversions beyond the window censor at the closest visit") {
    // Event at 1500 days past baseline falls outside the 3.5-year window.
    auto late =
        trial_subject("X", {0.0, 100.0, 500.0, 1000.0, 1700.0}, true, 1600.0);
    const auto records = derive_true_outcomes(trial_cohort({late}));
    CHECK(records[0].kind == EventKind::Censored);
    CHECK(records[0].time_days == doctest::Approx(900.0));
}

TEST_CASE("selection draws with replacement from the right pool") {
    SelectionPools pools;
    pools.all = {0, 1, 2, 3, 4, 5};
    pools.factor_model = {1, 3};
    pools.covariate_model = {2};
    Rng rng(5);
    CHECK(select_participants(SelectionMethod::Random, pools, 0, rng).empty());
    const auto f =
        select_participants(SelectionMethod::FactorModel, pools, 100, rng);
    for (int idx : f) {
        REQUIRE((idx == 1 || idx == 3));
    }
    Rng r1(9);
    Rng r2(9);
    CHECK(select_participants(SelectionMethod::Random, pools, 50, r1) ==
          select_participants(SelectionMethod::Random, pools, 50, r2));
    SelectionPools empty;
    empty.all = {0};
    Rng r3(1);
    CHECK_THROWS_AS((void)select_participants(SelectionMethod::FactorModel,
                                              empty, 5, r3),
                    std::runtime_error);
}

TEST_CASE("treatment leaves the control arm untouched") {
    std::vector<SurvivalRecord> records(3);
    records[0].kind = EventKind::Converted;
    records[0].time_days = 350.0;
    records[1].kind = EventKind::Censored;
    records[1].time_days = 1000.0;
    records[2].kind = EventKind::LostToFollowUp;
    std::vector<int> chosen = {0, 0, 1, 2, 0, 1};
    Rng rng(31);
    const auto enrollees = apply_treatment(records, chosen, 0.4, rng);
    REQUIRE(enrollees.size() == chosen.size());
    for (const auto& e : enrollees) {
        const auto& base = records[static_cast<std::size_t>(e.record)];
        if (!e.treated) {
            CHECK(e.time_days == base.time_days);
            CHECK(e.event == base.event());
        } else if (!base.event()) {
            CHECK(e.time_days == base.time_days);
            CHECK_FALSE(e.event);
        } else if (!e.event) {
            CHECK(e.time_days == kTrialCensorDays);
        } else {
            CHECK(e.time_days == base.time_days);
        }
        CHECK(e.analyzable == base.analyzable());
    }
}

TEST_CASE("a near-total effect censors almost every treated converter") {
    std::vector<SurvivalRecord> records(1);
    records[0].kind = EventKind::Converted;
    records[0].time_days = 400.0;
    std::vector<int> chosen(4000, 0);
    Rng rng(77);
    const auto enrollees = apply_treatment(records, chosen, 0.999, rng);
    int treated = 0;
    int treated_events = 0;
    for (const auto& e : enrollees) {
        if (e.treated) {
            ++treated;
            treated_events += e.event ? 1 : 0;
        }
    }
    CHECK(treated > 1800);
    CHECK(treated_events < 0.01 * treated);
}

TEST_CASE("treated event count drops by the effect on average") {
    std::vector<SurvivalRecord> records(1);
    records[0].kind = EventKind::Converted;
    records[0].time_days = 600.0;
    std::vector<int> chosen(1000, 0);
    double kept = 0.0;
    double treated = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        Rng rng = Rng::substream(123, {static_cast<std::uint64_t>(rep)});
        for (const auto& e : apply_treatment(records, chosen, 0.2, rng)) {
            if (e.treated) {
                treated += 1.0;
                kept += e.event ? 1.0 : 0.0;
            }
        }
    }
    CHECK(kept / treated == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("monotone two-subject likelihood is flagged") {
    std::vector<CoxRow> rows(2);
    rows[0].time = 400.0;
    rows[0].event = true;
    rows[0].x.resize(1);
    rows[0].x << 0.0;  // control converts
    rows[1].time = 1095.75;
    rows[1].event = false;
    rows[1].x.resize(1);
    rows[1].x << 1.0;  // treated censored later
    const CoxFit fit = fit_cox(rows);
    CHECK(fit.monotone_flag);
}

TEST_CASE("cox requires events and arm variation") {
    std::vector<CoxRow> rows(2);
    rows[0].time = 100.0;
    rows[0].event = false;
    rows[0].x.resize(1);
    rows[0].x << 0.0;
    rows[1].time = 200.0;
    rows[1].event = false;
    rows[1].x.resize(1);
    rows[1].x << 1.0;
    CHECK_THROWS_WITH_AS((void)fit_cox(rows), doctest::Contains("no events"),
                         std::runtime_error);
    rows[1].event = true;
    rows[1].x << 0.0;
    rows[0].event = true;
    CHECK_THROWS_WITH_AS((void)fit_cox(rows),
                         doctest::Contains("does not vary"),
                         std::runtime_error);
}

TEST_CASE("cox estimate matches a partial-likelihood grid search") {
    Rng rng(11);
    const auto rows = exponential_rows(20, 0.5, 15.0, rng);
    const CoxFit fit = fit_cox(rows);
    REQUIRE(fit.converged);
    CHECK(fit.score_norm < 1e-8);

    double best = 0.0;
    double best_ll = -1e300;
    for (double b = -3.0; b <= 3.0; b += 1e-4) {
        const double ll = cox_loglik_1d(rows, b);
        if (ll > best_ll) {
            best_ll = ll;
            best = b;
        }
    }
    CHECK(std::abs(fit.beta[0] - best) < 1e-3);
}

TEST_CASE("cox handles breslow ties from duplicated enrollees") {
    Rng rng(13);
    auto rows = exponential_rows(60, 0.6, 12.0, rng);
    // Duplicate a block of rows exactly, as with-replacement sampling does.
    for (int i = 0; i < 20; ++i) {
        rows.push_back(rows[static_cast<std::size_t>(i)]);
    }
    const CoxFit fit = fit_cox(rows);
    CHECK(fit.converged);
    CHECK(fit.score_norm < 1e-8);

    double best = 0.0;
    double best_ll = -1e300;
    for (double b = -3.0; b <= 3.0; b += 1e-4) {
        const double ll = cox_loglik_1d(rows, b);
        if (ll > best_ll) {
            best_ll = ll;
            best = b;
        }
    }
    CHECK(std::abs(fit.beta[0] - best) < 1e-3);
}

TEST_CASE("null-effect cox is centered at hazard ratio one") {
    std::vector<double> hrs;
    for (int rep = 0; rep < 400; ++rep) {
        Rng rng = Rng::substream(17, {static_cast<std::uint64_t>(rep)});
        const auto rows = exponential_rows(400, 1.0, 10.0, rng);
        const CoxFit fit = fit_cox(rows);
        if (!fit.monotone_flag) {
            hrs.push_back(fit.hr_treatment);
        }
    }
    CHECK(median(hrs) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("required events reproduces the textbook value") {
    CHECK(required_events(0.8, 0.05, 0.8, 0.5) == 631.0);
    CHECK(std::isinf(required_events(1.0, 0.05, 0.8)));
    // Symmetric in hr <-> 1/hr.
    CHECK(required_events(0.7, 0.05, 0.8) ==
          required_events(1.0 / 0.7, 0.05, 0.8));
    CHECK_THROWS_AS((void)required_events(-0.5, 0.05, 0.8),
                    std::invalid_argument);
}

TEST_CASE("replicate summary applies the power-zero rule") {
    TrialConfig config;
    CoxFit fit;
    fit.hr_treatment = 1.2;
    fit.log_hr_se = 0.1;
    fit.converged = true;
    const TrialReplicate bad = replicate_summary(fit, 100, 900, config);
    CHECK(bad.flagged);
    CHECK(bad.power == 0.0);
    CHECK(std::isinf(bad.required_n));

    fit.hr_treatment = 0.8;
    const TrialReplicate good = replicate_summary(fit, 631, 6310, config);
    CHECK_FALSE(good.flagged);
    CHECK(good.power == doctest::Approx(0.80).epsilon(0.01));
    CHECK(good.event_probability == doctest::Approx(0.1));
    // 631 required events at a 10% event rate.
    CHECK(good.required_n == doctest::Approx(6310.0));
    CHECK_THROWS_AS((void)replicate_summary(fit, 0, 0, config),
                    std::runtime_error);
}

TEST_CASE("median handles even counts and infinities") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(std::isinf(median({1.0, inf, inf})));
    CHECK(median({1.0, 3.0, inf}) == 3.0);
    CHECK(std::isinf(median({1.0, 2.0, inf, inf})));
}

TEST_CASE("grid runs a small deterministic configuration") {
    // Synthetic derived outcomes: a pool with elevated risk in the factor
    // subset, lower in the covariate subset.
    Rng rng(21);
    std::vector<SurvivalRecord> records;
    SelectionPools pools;
    for (int i = 0; i < 300; ++i) {
        SurvivalRecord rec;
        rec.subject_id = "S" + std::to_string(i);
        const bool high = i < 120;
        const bool mid = i < 200;
        const double u = rng.uniform();
        const double p_event = high ? 0.35 : (mid ? 0.22 : 0.10);
        if (u < p_event) {
            rec.kind = EventKind::Converted;
            rec.time_days = rng.uniform(30.0, kTrialWindowDays);
        } else if (u < p_event + 0.05) {
            rec.kind = EventKind::LostToFollowUp;
        } else {
            rec.kind = EventKind::Censored;
            rec.time_days = rng.uniform(800.0, 1250.0);
        }
        rec.apoe4 = rng.bernoulli(0.3) ? 1.0 : 0.0;
        rec.education = std::round(rng.uniform(12.0, 20.0));
        rec.sex = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const int idx = i;
        pools.all.push_back(idx);
        if (high) {
            pools.factor_model.push_back(idx);
        }
        if (mid) {
            pools.covariate_model.push_back(idx);
        }
        records.push_back(std::move(rec));
    }

    TrialConfig config;
    config.n_enrolled = 400;
    config.n_replicates = 60;
    config.effects = {0.1, 0.3};
    config.seed = 99;
    const TrialGridResult grid = run_trial_grid(records, pools, config);
    REQUIRE(grid.cells.size() == 6);

    const TrialGridResult again = run_trial_grid(records, pools, config);
    for (std::size_t c = 0; c < grid.cells.size(); ++c) {
        REQUIRE(grid.cells[c].median_power == again.cells[c].median_power);
        REQUIRE(grid.cells[c].hr_draws == again.cells[c].hr_draws);
    }

    for (const auto& method : {SelectionMethod::Random,
                               SelectionMethod::FactorModel,
                               SelectionMethod::CovariateModel}) {
        const auto& weak = grid.cell(method, 0.1);
        const auto& strong = grid.cell(method, 0.3);
        CHECK(weak.n_failed == 0);
        CHECK(strong.median_power >= weak.median_power);
    }
    // More events in the factor pool buys more power at the same effect.
    CHECK(grid.cell(SelectionMethod::FactorModel, 0.3).median_power >=
          grid.cell(SelectionMethod::Random, 0.3).median_power);
}

TEST_SUITE_END();
