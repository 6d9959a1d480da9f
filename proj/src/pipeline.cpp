#include "cogsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <vector>

#include "cogsim/cohort.hpp"
#include "cogsim/csv.hpp"
#include "cogsim/gibbs.hpp"
#include "cogsim/risk_model.hpp"
#include "cogsim/rng.hpp"
#include "cogsim/state_space.hpp"
#include "cogsim/synthetic.hpp"
#include "cogsim/trial_sim.hpp"

namespace cogsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeedGenerate = 1;
constexpr std::uint64_t kSeedSplit = 2;
constexpr std::uint64_t kSeedGibbs = 3;
constexpr std::uint64_t kSeedTrial = 4;

json eigen_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json eigen_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v[i]);
    }
    return out;
}

Eigen::MatrixXd json_to_matrix(const json& j) {
    const auto rows = j.size();
    if (rows == 0) {
        return Eigen::MatrixXd(0, 0);
    }
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                j.at(i).at(c).get<double>();
        }
    }
    return m;
}

Eigen::VectorXd json_to_vector(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
    }
    return v;
}

void require_file(const fs::path& path, const std::string& role) {
    if (!fs::exists(path)) {
        throw usage_error(role + " file not found: " + path.string());
    }
}

json load_json_file(const fs::path& path, const std::string& role) {
    require_file(path, role);
    std::ifstream in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw usage_error(role + " file " + path.string() +
                          " is not valid JSON: " + e.what());
    }
    return j;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out << text;
}

void write_json_file(const fs::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

fs::path section_path(const RunConfig& config, const json& section,
                      const std::string& key, const std::string& fallback) {
    if (section.contains(key)) {
        return fs::path(section.at(key).get<std::string>());
    }
    return config.out_dir / fallback;
}

GenConfig generate_config(const RunConfig& config) {
    const json section = config.section("generate");
    const int default_n = config.profile == Profile::Desk ? 500 : 5000;
    GenConfig gen = GenConfig::defaults(
        section.value("n_subjects", default_n), mix_seed(config.seed,
                                                         kSeedGenerate));
    gen.visits_min = section.value("visits_min", gen.visits_min);
    gen.visits_max = section.value("visits_max", gen.visits_max);
    gen.gap_years_min = section.value("gap_years_min", gen.gap_years_min);
    gen.gap_years_max = section.value("gap_years_max", gen.gap_years_max);
    gen.ltfu_prob = section.value("ltfu_prob", gen.ltfu_prob);
    gen.death_hazard_per_year =
        section.value("death_hazard_per_year", gen.death_hazard_per_year);
    gen.outcome.intercept =
        section.value("outcome_intercept", gen.outcome.intercept);
    if (section.contains("outcome_factor_coefs")) {
        gen.outcome.factor_coefs =
            json_to_vector(section.at("outcome_factor_coefs"));
    }
    if (section.contains("outcome_covariate_coefs")) {
        gen.outcome.covariate_coefs =
            json_to_vector(section.at("outcome_covariate_coefs"));
    }
    if (section.contains("true_loadings")) {
        gen.true_loadings = json_to_matrix(section.at("true_loadings"));
    }
    if (section.contains("true_sigma_eps")) {
        gen.true_sigma_eps = json_to_vector(section.at("true_sigma_eps"));
    }
    if (section.contains("true_sigma_eta")) {
        gen.true_sigma_eta = json_to_matrix(section.at("true_sigma_eta"));
    }
    return gen;
}

constexpr const char* kGenerateSchemaHint =
    "generate section keys: n_subjects, visits_min, visits_max, "
    "gap_years_min, gap_years_max, ltfu_prob, death_hazard_per_year, "
    "outcome_intercept, outcome_factor_coefs, outcome_covariate_coefs, "
    "true_loadings, true_sigma_eps, true_sigma_eta";

struct PredictiveModel {
    std::vector<int> factor_indices;  // empty for the covariate-only model
    Eigen::VectorXd coefficients;     // intercept, factors..., covariates...
    double threshold = 0.5;
};

json predictive_model_to_json(const LogisticFit& fit,
                              const std::vector<int>& factor_indices,
                              const std::vector<std::string>& factor_names) {
    json j;
    json factors = json::array();
    for (int q : factor_indices) {
        factors.push_back(factor_names[static_cast<std::size_t>(q)]);
    }
    j["retained_factors"] = factors;
    j["retained_factor_indices"] = factor_indices;
    j["terms"] = fit.term_names;
    j["coefficients"] = eigen_to_json(fit.coefficients);
    j["wald_p"] = eigen_to_json(fit.wald_p);
    j["threshold"] = fit.threshold;
    j["covariate_only_fallback"] = fit.covariate_only_fallback;
    return j;
}

PredictiveModel predictive_model_from_json(const json& j) {
    PredictiveModel m;
    for (const auto& idx : j.at("retained_factor_indices")) {
        m.factor_indices.push_back(idx.get<int>());
    }
    m.coefficients = json_to_vector(j.at("coefficients"));
    m.threshold = j.at("threshold").get<double>();
    return m;
}

double predict_probability(const PredictiveModel& m,
                           const Eigen::VectorXd& factor_scores,
                           const Eigen::VectorXd& covariates) {
    double eta = m.coefficients[0];
    Eigen::Index pos = 1;
    for (int q : m.factor_indices) {
        eta += m.coefficients[pos++] * factor_scores[q];
    }
    for (Eigen::Index c = 0; c < covariates.size(); ++c) {
        eta += m.coefficients[pos++] * covariates[c];
    }
    return 1.0 / (1.0 + std::exp(-eta));
}

// Constant covariate columns (possible in small cohorts) cannot enter
// adjustment models; the kept set is frozen into posterior.json so the
// test-set transform matches the training one.
Cohort drop_constant_covariates(const Cohort& cohort) {
    const auto constants = constant_covariates(cohort);
    if (constants.empty()) {
        return cohort;
    }
    std::vector<std::string> keep;
    for (const auto& name : cohort.covariate_names) {
        if (std::find(constants.begin(), constants.end(), name) ==
            constants.end()) {
            keep.push_back(name);
        }
    }
    std::cout << "note: excluding constant covariates:";
    for (const auto& name : constants) {
        std::cout << ' ' << name;
    }
    std::cout << "\n";
    return select_covariates(cohort, keep);
}

}  // namespace

json RunConfig::section(const std::string& name) const {
    if (sections.contains(name)) {
        return sections.at(name);
    }
    return json::object();
}

RunConfig load_run_config(const std::string& config_path) {
    RunConfig config;
    if (config_path.empty()) {
        return config;
    }
    const json j = load_json_file(config_path, "config");
    config.sections = j;
    config.seed = j.value("seed", config.seed);
    if (j.contains("out")) {
        config.out_dir = fs::path(j.at("out").get<std::string>());
    }
    if (j.contains("profile")) {
        const std::string p = j.at("profile").get<std::string>();
        if (p == "desk") {
            config.profile = Profile::Desk;
        } else if (p == "full") {
            config.profile = Profile::Full;
        } else {
            throw usage_error("profile must be 'desk' or 'full', got '" + p +
                              "'");
        }
    }
    return config;
}

void cmd_generate(const RunConfig& config) {
    GenConfig gen;
    try {
        gen = generate_config(config);
        gen.validate();
    } catch (const std::invalid_argument& e) {
        throw usage_error(std::string(e.what()) + "\n" + kGenerateSchemaHint);
    }
    fs::create_directories(config.out_dir);

    const Cohort cohort = generate_cohort(gen);
    Rng split_rng(mix_seed(config.seed, kSeedSplit));
    Cohort train;
    Cohort test;
    train.tests = test.tests = cohort.tests;
    train.covariate_names = test.covariate_names = cohort.covariate_names;
    for (const auto& s : cohort.subjects) {
        (split_rng.bernoulli(0.5) ? train : test).subjects.push_back(s);
    }
    write_cohort(train, (config.out_dir / "train.csv").string());
    write_cohort(test, (config.out_dir / "test.csv").string());

    auto count_converted = [](const Cohort& c) {
        std::size_t n = 0;
        for (const auto& s : c.subjects) {
            n += s.endpoint.converted ? 1 : 0;
        }
        return n;
    };
    json report;
    report["n_subjects"] = cohort.subjects.size();
    report["n_train"] = train.subjects.size();
    report["n_test"] = test.subjects.size();
    report["n_train_converted"] = count_converted(train);
    report["n_test_converted"] = count_converted(test);
    report["seed"] = config.seed;
    write_json_file(config.out_dir / "generate_report.json", report);
    std::cout << "generate: " << train.subjects.size() << " train / "
              << test.subjects.size() << " test subjects -> "
              << config.out_dir.string() << "\n";
}

void cmd_fit_factors(const RunConfig& config) {
    const json section = config.section("fit_factors");
    const fs::path train_path =
        section_path(config, section, "train", "train.csv");
    require_file(train_path, "training cohort");
    fs::create_directories(config.out_dir);

    const Cohort loaded = load_cohort(
        train_path.string(), default_test_catalog(), default_covariate_names());
    if (loaded.subjects.empty()) {
        throw usage_error("training cohort is empty: " + train_path.string());
    }
    const Cohort raw = drop_constant_covariates(loaded);
    const Cohort standardized = standardize_tests(raw);
    const ResidualizeResult resid = residualize_covariates(standardized);

    const auto structure = LoadingStructure::four_domain_default();
    GibbsConfig gibbs =
        GibbsConfig::defaults(structure, mix_seed(config.seed, kSeedGibbs));
    gibbs.n_iter = config.profile == Profile::Desk ? 2000 : 10000;
    gibbs.burn_in = config.profile == Profile::Desk ? 1000 : 5000;
    gibbs.n_iter = section.value("n_iter", gibbs.n_iter);
    gibbs.burn_in = section.value("burn_in", gibbs.burn_in);
    gibbs.thin = section.value("thin", gibbs.thin);
    try {
        gibbs.validate();
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }

    const PosteriorSummary posterior = run_gibbs(resid.cohort, gibbs);

    json j;
    j["loadings_hat"] = eigen_to_json(posterior.loadings_hat);
    j["sigma_eps_hat"] = eigen_to_json(posterior.sigma_eps_hat);
    j["sigma_eta_hat"] = eigen_to_json(posterior.sigma_eta_hat);
    j["factor_names"] = structure.factor_names;
    json test_names = json::array();
    for (const auto& t : raw.tests) {
        test_names.push_back(t.name);
    }
    j["test_names"] = test_names;
    j["covariate_names"] = raw.covariate_names;
    j["standardization"] = {
        {"mean", eigen_to_json(standardized.standardization->mean)},
        {"sd", eigen_to_json(standardized.standardization->sd)}};
    j["residual_beta"] = eigen_to_json(resid.beta);
    j["state_prior"] = {{"m0", eigen_to_json(gibbs.priors.m0)},
                        {"p0", eigen_to_json(gibbs.priors.p0)}};
    j["gibbs"] = {{"n_iter", gibbs.n_iter},
                  {"burn_in", gibbs.burn_in},
                  {"seed", gibbs.seed}};
    json diags = json::array();
    for (const auto& d : posterior.diagnostics) {
        diags.push_back({{"name", d.name},
                         {"mean", d.mean},
                         {"split_rhat", d.split_rhat}});
    }
    j["diagnostics"] = diags;
    write_json_file(config.out_dir / "posterior.json", j);

    std::string csv = "subject_id,visit_days";
    for (Eigen::Index q = 0; q < structure.n_factors(); ++q) {
        csv += ",factor_" + std::to_string(q + 1);
    }
    csv += "\n";
    for (std::size_t i = 0; i < posterior.subject_ids.size(); ++i) {
        const auto& s = resid.cohort.subjects[i];
        for (std::size_t v = 0; v < s.n_visits(); ++v) {
            csv += posterior.subject_ids[i];
            csv += ',' + format_double(s.visit_days[v]);
            for (Eigen::Index q = 0; q < structure.n_factors(); ++q) {
                csv += ',' + format_double(posterior.factor_scores[i][v][q]);
            }
            csv += '\n';
        }
    }
    write_text_file(config.out_dir / "factor_scores.csv", csv);

    std::cout << "fit-factors: " << raw.subjects.size() << " subjects, "
              << gibbs.n_iter << " iterations (" << gibbs.burn_in
              << " burn-in)\n";
    std::cout << "parameter                                      mean  "
                 "split-Rhat\n";
    for (const auto& d : posterior.diagnostics) {
        std::printf("%-42s %9.4f   %7.3f\n", d.name.c_str(), d.mean,
                    d.split_rhat);
    }
}

namespace {

// Per-subject factor scores read back from factor_scores.csv, in cohort
// order.
std::vector<std::vector<Eigen::VectorXd>> read_factor_scores(
    const fs::path& path, const Cohort& cohort, Eigen::Index n_factors) {
    const CsvTable table = read_csv(path.string());
    if (table.header.size() != 2 + static_cast<std::size_t>(n_factors)) {
        throw usage_error("factor score file has wrong column count: " +
                          path.string());
    }
    std::map<std::string, std::vector<Eigen::VectorXd>> by_subject;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        Eigen::VectorXd score(n_factors);
        for (Eigen::Index q = 0; q < n_factors; ++q) {
            score[q] = parse_double(
                table.rows[r][2 + static_cast<std::size_t>(q)],
                table.line_numbers[r]);
        }
        by_subject[table.rows[r][0]].push_back(std::move(score));
    }
    std::vector<std::vector<Eigen::VectorXd>> out;
    for (const auto& s : cohort.subjects) {
        auto it = by_subject.find(s.subject_id);
        if (it == by_subject.end() || it->second.size() != s.n_visits()) {
            throw usage_error(
                "factor scores do not cover subject " + s.subject_id +
                " (regenerate with fit-factors)");
        }
        out.push_back(it->second);
    }
    return out;
}

struct FittedRow {
    std::string model;
    std::string predictor;
    std::string odds_ratio;
    std::string ci_low;
    std::string ci_high;
    std::string p_value;
    std::string sensitivity;
    std::string specificity;
    std::string flagged;
};

FittedRow summarize_fit(const std::string& model_name, const LogisticFit& fit,
                        const RiskDataset& data, int n_main) {
    FittedRow row;
    row.model = model_name;
    row.flagged = "";
    const ThresholdScan scan = balanced_threshold(fit, data);
    const Classification metrics =
        classification_metrics(fit, data, scan.threshold);
    row.sensitivity = format_double(metrics.sensitivity);
    row.specificity = format_double(metrics.specificity);
    std::string preds;
    std::string ors;
    std::string lows;
    std::string highs;
    std::string ps;
    for (int m = 0; m < n_main; ++m) {
        const Eigen::Index j = m + 1;  // after intercept
        const double beta = fit.coefficients[j];
        const double se = std::sqrt(std::max(fit.covariance(j, j), 0.0));
        if (m > 0) {
            preds += ';';
            ors += ';';
            lows += ';';
            highs += ';';
            ps += ';';
        }
        preds += fit.term_names[static_cast<std::size_t>(j)];
        ors += format_double(std::exp(beta));
        lows += format_double(std::exp(beta - 1.959963984540054 * se));
        highs += format_double(std::exp(beta + 1.959963984540054 * se));
        ps += format_double(fit.wald_p[j]);
    }
    row.predictor = preds;
    row.odds_ratio = ors;
    row.ci_low = lows;
    row.ci_high = highs;
    row.p_value = ps;
    return row;
}

}  // namespace

void cmd_fit_risk(const RunConfig& config) {
    const json section = config.section("fit_risk");
    const fs::path train_path =
        section_path(config, section, "train", "train.csv");
    const fs::path posterior_path =
        section_path(config, section, "posterior", "posterior.json");
    const fs::path scores_path =
        section_path(config, section, "scores", "factor_scores.csv");
    require_file(train_path, "training cohort");
    const json posterior = load_json_file(posterior_path, "posterior");
    require_file(scores_path, "factor scores");
    fs::create_directories(config.out_dir);
    const double horizon =
        section.value("horizon_days", kRiskHorizonDays);

    const Cohort loaded = load_cohort(
        train_path.string(), default_test_catalog(), default_covariate_names());
    const Cohort raw = select_covariates(
        loaded, posterior.at("covariate_names").get<std::vector<std::string>>());
    const Standardization stats{
        json_to_vector(posterior.at("standardization").at("mean")),
        json_to_vector(posterior.at("standardization").at("sd"))};
    const Cohort standardized = standardize_tests(raw, stats);
    const std::vector<std::string> factor_names =
        posterior.at("factor_names").get<std::vector<std::string>>();
    const Eigen::Index n_factors =
        static_cast<Eigen::Index>(factor_names.size());
    const auto factor_scores =
        read_factor_scores(scores_path, standardized, n_factors);

    std::vector<FittedRow> rows;
    // Ten single-test models.
    for (int k = 0; k < standardized.n_tests(); ++k) {
        const RiskDataset data =
            make_test_risk_dataset(standardized, k, horizon);
        try {
            const LogisticFit fit = fit_logistic(data);
            rows.push_back(summarize_fit(standardized.tests[k].name, fit,
                                         data, 1));
        } catch (const std::exception& e) {
            FittedRow row;
            row.model = standardized.tests[k].name;
            row.predictor = standardized.tests[k].name;
            row.flagged = e.what();
            rows.push_back(row);
        }
    }
    // Four single-factor models.
    std::vector<int> all_factors;
    for (Eigen::Index q = 0; q < n_factors; ++q) {
        all_factors.push_back(static_cast<int>(q));
        const RiskDataset data = make_factor_risk_dataset(
            standardized, factor_scores, factor_names,
            {static_cast<int>(q)}, horizon);
        try {
            const LogisticFit fit = fit_logistic(data);
            rows.push_back(summarize_fit(
                factor_names[static_cast<std::size_t>(q)] + "_factor", fit,
                data, 1));
        } catch (const std::exception& e) {
            FittedRow row;
            row.model = factor_names[static_cast<std::size_t>(q)] + "_factor";
            row.predictor = factor_names[static_cast<std::size_t>(q)];
            row.flagged = e.what();
            rows.push_back(row);
        }
    }
    // All-factor model, pruned final model, covariate-only model.
    const RiskDataset all_data = make_factor_risk_dataset(
        standardized, factor_scores, factor_names, all_factors, horizon);
    const LogisticFit all_fit = fit_logistic(all_data);
    LogisticFit final_fit = select_final_model(all_fit, all_data);
    const ThresholdScan final_scan = balanced_threshold(final_fit, all_data);
    final_fit.threshold = final_scan.threshold;
    std::vector<int> retained;
    for (int col : final_fit.columns) {
        if (col < all_data.n_main_terms) {
            retained.push_back(col);
        }
    }
    rows.push_back(summarize_fit("final", final_fit, all_data,
                                 static_cast<int>(retained.size())));
    if (final_fit.covariate_only_fallback) {
        rows.back().flagged = "no significant factors; covariate-only";
        std::cout << "fit-risk: warning: no factor passed the 0.05 rule; "
                     "final model is covariate-only\n";
    }

    const RiskDataset cov_data =
        make_covariate_risk_dataset(standardized, horizon);
    LogisticFit cov_fit = fit_logistic(cov_data);
    const ThresholdScan cov_scan = balanced_threshold(cov_fit, cov_data);
    cov_fit.threshold = cov_scan.threshold;

    std::string csv =
        "model,predictor,odds_ratio,or_ci_low,or_ci_high,p_value,"
        "sensitivity,specificity,flagged\n";
    for (const auto& row : rows) {
        csv += row.model + ',' + row.predictor + ',' + row.odds_ratio + ',' +
               row.ci_low + ',' + row.ci_high + ',' + row.p_value + ',' +
               row.sensitivity + ',' + row.specificity + ',' + row.flagged +
               '\n';
    }
    write_text_file(config.out_dir / "risk_models.csv", csv);

    json out;
    out["horizon_days"] = horizon;
    out["factor_model"] =
        predictive_model_to_json(final_fit, retained, factor_names);
    out["covariate_model"] = predictive_model_to_json(cov_fit, {}, factor_names);
    out["all_factor_model"] =
        predictive_model_to_json(all_fit, all_factors, factor_names);
    write_json_file(config.out_dir / "final_model.json", out);

    std::cout << "fit-risk: " << rows.size() << " model rows -> "
              << (config.out_dir / "risk_models.csv").string() << "\n";
    std::cout << "final model threshold " << final_fit.threshold
              << " (sens " << final_scan.sensitivity << ", spec "
              << final_scan.specificity << ")\n";
}

void cmd_run_trial(const RunConfig& config) {
    const json section = config.section("run_trial");
    const fs::path test_path = section_path(config, section, "test", "test.csv");
    const fs::path posterior_path =
        section_path(config, section, "posterior", "posterior.json");
    const fs::path final_path =
        section_path(config, section, "final", "final_model.json");
    require_file(test_path, "test cohort");
    const json posterior = load_json_file(posterior_path, "posterior");
    const json final_models = load_json_file(final_path, "final model");
    fs::create_directories(config.out_dir);

    const Cohort loaded = load_cohort(
        test_path.string(), default_test_catalog(), default_covariate_names());
    if (loaded.subjects.empty()) {
        throw usage_error("test cohort is empty: " + test_path.string());
    }
    const Cohort raw = select_covariates(
        loaded, posterior.at("covariate_names").get<std::vector<std::string>>());
    const Standardization stats{
        json_to_vector(posterior.at("standardization").at("mean")),
        json_to_vector(posterior.at("standardization").at("sd"))};
    const Cohort standardized = standardize_tests(raw, stats);
    const Cohort adjusted = apply_residualization(
        standardized, json_to_matrix(posterior.at("residual_beta")));

    // Plug-in factor scores for test subjects: Kalman smoothing under the
    // posterior-mean parameters.
    StateSpaceParams params;
    params.loadings = json_to_matrix(posterior.at("loadings_hat"));
    params.sigma_eps = json_to_vector(posterior.at("sigma_eps_hat"));
    params.sigma_eta = json_to_matrix(posterior.at("sigma_eta_hat"));
    params.m0 = json_to_vector(posterior.at("state_prior").at("m0"));
    params.p0 = json_to_matrix(posterior.at("state_prior").at("p0"));
    params.validate();

    const PredictiveModel factor_model =
        predictive_model_from_json(final_models.at("factor_model"));
    const PredictiveModel covariate_model =
        predictive_model_from_json(final_models.at("covariate_model"));

    OutcomeReport outcomes;
    const std::vector<SurvivalRecord> records =
        derive_true_outcomes(raw, &outcomes);

    SelectionPools pools;
    for (std::size_t i = 0; i < adjusted.subjects.size(); ++i) {
        const auto& s = adjusted.subjects[i];
        const FilterResult filter = kalman_filter(s, params);
        const SmootherResult smoothed = kalman_smoother(filter, params);
        const Eigen::VectorXd& baseline_scores = smoothed.mean[1];
        const int idx = static_cast<int>(i);
        pools.all.push_back(idx);
        if (predict_probability(factor_model, baseline_scores,
                                s.covariates) > factor_model.threshold) {
            pools.factor_model.push_back(idx);
        }
        if (predict_probability(covariate_model, baseline_scores,
                                s.covariates) > covariate_model.threshold) {
            pools.covariate_model.push_back(idx);
        }
    }

    TrialConfig trial;
    trial.seed = mix_seed(config.seed, kSeedTrial);
    trial.n_replicates = config.profile == Profile::Desk ? 2000 : 10000;
    trial.n_enrolled = section.value("n_enrolled", trial.n_enrolled);
    trial.n_replicates = section.value("n_replicates", trial.n_replicates);
    trial.alpha = section.value("alpha", trial.alpha);
    trial.target_power = section.value("target_power", trial.target_power);
    if (section.contains("effects")) {
        trial.effects.clear();
        for (const auto& e : section.at("effects")) {
            trial.effects.push_back(e.get<double>());
        }
    }
    try {
        trial.validate();
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }

    const TrialGridResult grid = run_trial_grid(records, pools, trial);

    std::string grid_csv =
        "method,effect,median_power,median_required_n,n_failed_replicates\n";
    std::string power_csv = "method,effect,median_power\n";
    std::string n_csv = "method,effect,median_required_n\n";
    std::string hr_csv = "method,effect,replicate,hr_hat\n";
    for (const auto& cell : grid.cells) {
        const std::string method = selection_method_name(cell.method);
        grid_csv += method + ',' + format_double(cell.effect) + ',' +
                    format_double(cell.median_power) + ',' +
                    format_double(cell.median_required_n) + ',' +
                    std::to_string(cell.n_failed) + '\n';
        power_csv += method + ',' + format_double(cell.effect) + ',' +
                     format_double(cell.median_power) + '\n';
        n_csv += method + ',' + format_double(cell.effect) + ',' +
                 format_double(cell.median_required_n) + '\n';
        for (std::size_t r = 0; r < cell.hr_draws.size(); ++r) {
            hr_csv += method + ',' + format_double(cell.effect) + ',' +
                      std::to_string(r) + ',' +
                      format_double(cell.hr_draws[r]) + '\n';
        }
    }
    write_text_file(config.out_dir / "trial_grid.csv", grid_csv);
    write_text_file(config.out_dir / "power_vs_effect.csv", power_csv);
    write_text_file(config.out_dir / "required_n_vs_effect.csv", n_csv);
    write_text_file(config.out_dir / "hr_distribution.csv", hr_csv);

    // Histogram of observed hazard ratios at the effect closest to 0.2.
    double hist_effect = trial.effects.front();
    for (double e : trial.effects) {
        if (std::abs(e - 0.2) < std::abs(hist_effect - 0.2)) {
            hist_effect = e;
        }
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& cell : grid.cells) {
        if (cell.effect == hist_effect && !cell.hr_draws.empty()) {
            lo = std::min(lo, *std::min_element(cell.hr_draws.begin(),
                                                cell.hr_draws.end()));
            hi = std::max(hi, *std::max_element(cell.hr_draws.begin(),
                                                cell.hr_draws.end()));
        }
    }
    std::string hist_csv = "method,effect,bin_low,bin_high,count\n";
    if (lo < hi) {
        const int n_bins = 40;
        const double width = (hi - lo) / n_bins;
        for (const auto& cell : grid.cells) {
            if (cell.effect != hist_effect) {
                continue;
            }
            std::vector<int> counts(n_bins, 0);
            for (double hr : cell.hr_draws) {
                int bin = static_cast<int>((hr - lo) / width);
                bin = std::clamp(bin, 0, n_bins - 1);
                ++counts[static_cast<std::size_t>(bin)];
            }
            for (int b = 0; b < n_bins; ++b) {
                hist_csv += std::string(selection_method_name(cell.method)) +
                            ',' + format_double(cell.effect) + ',' +
                            format_double(lo + b * width) + ',' +
                            format_double(lo + (b + 1) * width) + ',' +
                            std::to_string(counts[static_cast<std::size_t>(b)]) +
                            '\n';
            }
        }
    }
    write_text_file(config.out_dir / "hr_histogram.csv", hist_csv);

    json report;
    report["outcomes"] = {{"converted", outcomes.n_converted},
                          {"censored", outcomes.n_censored},
                          {"death_censored", outcomes.n_death_censored},
                          {"lost_to_follow_up", outcomes.n_lost_to_follow_up}};
    std::set<int> factor_set(pools.factor_model.begin(),
                             pools.factor_model.end());
    std::size_t overlap = 0;
    for (int idx : pools.covariate_model) {
        overlap += factor_set.count(idx);
    }
    report["pools"] = {{"all", pools.all.size()},
                       {"factor_model", pools.factor_model.size()},
                       {"covariate_model", pools.covariate_model.size()},
                       {"overlap", overlap}};
    json cells = json::array();
    for (const auto& cell : grid.cells) {
        cells.push_back(
            {{"method", selection_method_name(cell.method)},
             {"effect", cell.effect},
             {"median_power", cell.median_power},
             {"median_power_excluding_zero",
              cell.median_power_excluding_zero},
             {"median_required_n", cell.median_required_n},
             {"median_hr", cell.median_hr},
             {"n_zero_power", cell.n_zero_power},
             {"n_failed", cell.n_failed}});
    }
    report["cells"] = cells;
    write_json_file(config.out_dir / "trial_report.json", report);

    std::cout << "run-trial: " << grid.cells.size() << " grid cells, pools "
              << pools.all.size() << "/" << pools.factor_model.size() << "/"
              << pools.covariate_model.size()
              << " (all/factor/covariate) -> "
              << (config.out_dir / "trial_grid.csv").string() << "\n";
}

void cmd_report(const RunConfig& config) {
    const fs::path dir = config.out_dir;
    std::cout << "artifacts in " << dir.string() << ":\n";
    bool any = false;
    for (const char* name :
         {"generate_report.json", "posterior.json", "factor_scores.csv",
          "risk_models.csv", "final_model.json", "trial_grid.csv",
          "trial_report.json"}) {
        if (fs::exists(dir / name)) {
            std::cout << "  " << name << "\n";
            any = true;
        }
    }
    if (!any) {
        throw usage_error("no artifacts found in " + dir.string());
    }
    if (fs::exists(dir / "trial_grid.csv")) {
        const CsvTable grid = read_csv((dir / "trial_grid.csv").string());
        std::cout << "\nmethod            effect  median_power  "
                     "median_required_n\n";
        for (const auto& row : grid.rows) {
            std::printf("%-16s %7s %13s %18s\n", row[0].c_str(),
                        row[1].c_str(), row[2].c_str(), row[3].c_str());
        }
    }
}

}  // namespace cogsim
