#include "cogsim/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <Eigen/QR>

#include "cogsim/csv.hpp"

namespace cogsim {

bool SubjectSeries::operator==(const SubjectSeries& other) const {
    return subject_id == other.subject_id && visit_days == other.visit_days &&
           scores == other.scores && covariates == other.covariates &&
           endpoint == other.endpoint;
}

bool Standardization::operator==(const Standardization& other) const {
    return mean == other.mean && sd == other.sd;
}

bool Cohort::operator==(const Cohort& other) const {
    return subjects == other.subjects && tests == other.tests &&
           covariate_names == other.covariate_names &&
           standardization == other.standardization &&
           residualized == other.residualized;
}

std::size_t Cohort::total_visits() const {
    std::size_t n = 0;
    for (const auto& s : subjects) {
        n += s.n_visits();
    }
    return n;
}

int Cohort::covariate_index(const std::string& name) const {
    for (std::size_t i = 0; i < covariate_names.size(); ++i) {
        if (covariate_names[i] == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

std::vector<CognitiveTest> default_test_catalog() {
    return {
        {0, "immediate_recall", false},
        {1, "delayed_recall", false},
        {2, "digit_span_forward", true},
        {3, "digit_span_backward", true},
        {4, "animal_fluency", false},
        {5, "vegetable_fluency", false},
        {6, "boston_naming", false},
        {7, "trail_making_a", false},
        {8, "trail_making_b", false},
        {9, "digit_symbol", false},
    };
}

std::vector<std::string> default_covariate_names() {
    return {"sex_male",     "education_years", "age_baseline",
            "race_black",   "race_asian",      "race_other",
            "apoe4_count",  "hypertension",    "diabetes",
            "smoking_years", "obese",          "tbi_ever",
            "depression_ever"};
}

namespace {

std::vector<std::string> expected_header(
    const std::vector<CognitiveTest>& tests,
    const std::vector<std::string>& covariate_names, bool with_death) {
    std::vector<std::string> header = {"subject_id", "visit_days"};
    for (const auto& t : tests) {
        header.push_back(t.name);
    }
    for (const auto& c : covariate_names) {
        header.push_back(c);
    }
    header.push_back("endpoint_days");
    header.push_back("converted");
    if (with_death) {
        header.push_back("death_days");
    }
    return header;
}

struct VisitRow {
    double visit_days;
    Eigen::VectorXd scores;
    Eigen::VectorXd covariates;
    Endpoint endpoint;
    std::size_t line;
};

void column_stats(const Cohort& cohort, Eigen::VectorXd& mean,
                  Eigen::VectorXd& sd);

}  // namespace

Cohort load_cohort(const std::string& path,
                   const std::vector<CognitiveTest>& tests,
                   const std::vector<std::string>& covariate_names,
                   LoadReport* report) {
    const CsvTable table = read_csv(path);
    const int n_tests = static_cast<int>(tests.size());
    const int n_cov = static_cast<int>(covariate_names.size());

    bool with_death = false;
    if (table.header == expected_header(tests, covariate_names, true)) {
        with_death = true;
    } else if (table.header != expected_header(tests, covariate_names, false)) {
        throw csv_parse_error(path + ": header does not match cohort schema");
    }

    LoadReport local{};
    // Grouped by subject in first-appearance order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<VisitRow>> grouped;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        const std::string& id = cells[0];
        if (id.empty()) {
            throw csv_parse_error(path + ": line " + std::to_string(line) +
                                  ": empty subject_id");
        }

        // Complete-case rule: any blank required cell drops the visit row.
        bool missing = false;
        const std::size_t required = cells.size() - (with_death ? 1 : 0);
        for (std::size_t c = 1; c < required; ++c) {
            if (cells[c].empty()) {
                missing = true;
                break;
            }
        }
        if (missing) {
            ++local.rows_dropped_missing;
            continue;
        }

        VisitRow row;
        row.line = line;
        row.visit_days = parse_double(cells[1], line);
        row.scores.resize(n_tests);
        for (int k = 0; k < n_tests; ++k) {
            row.scores[k] = parse_double(cells[2 + k], line);
        }
        row.covariates.resize(n_cov);
        for (int c = 0; c < n_cov; ++c) {
            row.covariates[c] = parse_double(cells[2 + n_tests + c], line);
        }
        row.endpoint.endpoint_days =
            parse_double(cells[2 + n_tests + n_cov], line);
        const double converted = parse_double(cells[3 + n_tests + n_cov], line);
        row.endpoint.converted = converted != 0.0;
        if (with_death) {
            row.endpoint.death_days =
                parse_optional_double(cells[4 + n_tests + n_cov], line);
        }

        if (grouped.find(id) == grouped.end()) {
            order.push_back(id);
        }
        grouped[id].push_back(std::move(row));
    }

    Cohort cohort;
    cohort.tests = tests;
    cohort.covariate_names = covariate_names;
    for (const auto& id : order) {
        auto& rows = grouped[id];
        std::sort(rows.begin(), rows.end(),
                  [](const VisitRow& a, const VisitRow& b) {
                      return a.visit_days < b.visit_days;
                  });
        if (rows.size() < 2) {
            ++local.subjects_dropped_short;
            continue;
        }
        SubjectSeries series;
        series.subject_id = id;
        series.scores.resize(static_cast<Eigen::Index>(rows.size()), n_tests);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (j > 0 && rows[j].visit_days <= rows[j - 1].visit_days) {
                throw csv_parse_error(
                    path + ": line " + std::to_string(rows[j].line) +
                    ": duplicate visit_days for subject " + id);
            }
            series.visit_days.push_back(rows[j].visit_days);
            series.scores.row(static_cast<Eigen::Index>(j)) =
                rows[j].scores.transpose();
        }
        series.covariates = rows.front().covariates;
        series.endpoint = rows.front().endpoint;
        cohort.subjects.push_back(std::move(series));
    }
    local.subjects_loaded = cohort.subjects.size();
    if (!cohort.subjects.empty()) {
        Eigen::VectorXd mean;
        Eigen::VectorXd sd;
        column_stats(cohort, mean, sd);
        for (int k = 0; k < n_tests; ++k) {
            if (sd[k] <= 0.0) {
                throw std::runtime_error(
                    path + ": degenerate test column '" + tests[k].name +
                    "' (zero variance)");
            }
        }
    }
    if (report != nullptr) {
        *report = local;
    }
    return cohort;
}

void write_cohort(const Cohort& cohort, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    bool any_death = false;
    for (const auto& s : cohort.subjects) {
        if (s.endpoint.death_days.has_value()) {
            any_death = true;
            break;
        }
    }
    const auto header =
        expected_header(cohort.tests, cohort.covariate_names, any_death);
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i == 0 ? "" : ",") << header[i];
    }
    out << "\n";
    for (const auto& s : cohort.subjects) {
        for (std::size_t j = 0; j < s.n_visits(); ++j) {
            out << s.subject_id << ',' << format_double(s.visit_days[j]);
            for (int k = 0; k < cohort.n_tests(); ++k) {
                out << ','
                    << format_double(s.scores(static_cast<Eigen::Index>(j), k));
            }
            for (int c = 0; c < cohort.n_covariates(); ++c) {
                out << ',' << format_double(s.covariates[c]);
            }
            out << ',' << format_double(s.endpoint.endpoint_days) << ','
                << (s.endpoint.converted ? 1 : 0);
            if (any_death) {
                out << ',';
                if (s.endpoint.death_days.has_value()) {
                    out << format_double(*s.endpoint.death_days);
                }
            }
            out << "\n";
        }
    }
}

namespace {

// Population standard deviation, matching the stored inverse transform.
void column_stats(const Cohort& cohort, Eigen::VectorXd& mean,
                  Eigen::VectorXd& sd) {
    const int n_tests = cohort.n_tests();
    const double n = static_cast<double>(cohort.total_visits());
    mean = Eigen::VectorXd::Zero(n_tests);
    for (const auto& s : cohort.subjects) {
        mean += s.scores.colwise().sum().transpose();
    }
    mean /= n;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(n_tests);
    for (const auto& s : cohort.subjects) {
        ss += (s.scores.rowwise() - mean.transpose())
                  .array()
                  .square()
                  .colwise()
                  .sum()
                  .matrix()
                  .transpose();
    }
    sd = (ss / n).array().sqrt();
}

}  // namespace

Cohort standardize_tests(const Cohort& cohort) {
    Cohort flipped = cohort;
    // Flip only raw cohorts; standardized ones already carry the convention.
    if (!cohort.standardization.has_value()) {
        for (auto& s : flipped.subjects) {
            for (int k = 0; k < cohort.n_tests(); ++k) {
                if (cohort.tests[k].sign_flip) {
                    s.scores.col(k) *= -1.0;
                }
            }
        }
    }
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    column_stats(flipped, mean, sd);
    for (int k = 0; k < cohort.n_tests(); ++k) {
        if (sd[k] <= 0.0) {
            throw std::runtime_error("standardize_tests: test column '" +
                                     cohort.tests[k].name +
                                     "' has zero variance");
        }
    }
    for (auto& s : flipped.subjects) {
        s.scores = (s.scores.rowwise() - mean.transpose()).array().rowwise() /
                   sd.transpose().array();
    }
    flipped.standardization = Standardization{mean, sd};
    return flipped;
}

Cohort standardize_tests(const Cohort& cohort, const Standardization& stats) {
    if (stats.mean.size() != cohort.n_tests()) {
        throw std::invalid_argument(
            "standardize_tests: statistics dimension mismatch");
    }
    Cohort out = cohort;
    if (!cohort.standardization.has_value()) {
        for (auto& s : out.subjects) {
            for (int k = 0; k < cohort.n_tests(); ++k) {
                if (cohort.tests[k].sign_flip) {
                    s.scores.col(k) *= -1.0;
                }
            }
        }
    }
    for (auto& s : out.subjects) {
        s.scores = (s.scores.rowwise() - stats.mean.transpose())
                       .array()
                       .rowwise() /
                   stats.sd.transpose().array();
    }
    out.standardization = stats;
    return out;
}

namespace {

Eigen::MatrixXd pooled_design(const Cohort& cohort) {
    const Eigen::Index m = static_cast<Eigen::Index>(cohort.total_visits());
    const int p = cohort.n_covariates();
    Eigen::MatrixXd x(m, p + 1);
    Eigen::Index row = 0;
    for (const auto& s : cohort.subjects) {
        for (std::size_t j = 0; j < s.n_visits(); ++j) {
            x(row, 0) = 1.0;
            x.row(row).tail(p) = s.covariates.transpose();
            ++row;
        }
    }
    return x;
}

}  // namespace

ResidualizeResult residualize_covariates(const Cohort& cohort) {
    const Eigen::MatrixXd x = pooled_design(cohort);
    const int p = cohort.n_covariates();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) {
        std::string names;
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index i = qr.rank(); i < x.cols(); ++i) {
            const Eigen::Index col = perm[i];
            if (!names.empty()) {
                names += ", ";
            }
            names += col == 0 ? "(intercept)"
                              : cohort.covariate_names[col - 1];
        }
        throw std::runtime_error(
            "residualize_covariates: design is rank deficient; collinear "
            "columns involve: " +
            names);
    }

    const Eigen::Index m = x.rows();
    Eigen::MatrixXd y(m, cohort.n_tests());
    Eigen::Index row = 0;
    for (const auto& s : cohort.subjects) {
        y.block(row, 0, static_cast<Eigen::Index>(s.n_visits()),
                cohort.n_tests()) = s.scores;
        row += static_cast<Eigen::Index>(s.n_visits());
    }

    Eigen::MatrixXd beta(p + 1, cohort.n_tests());
    for (int k = 0; k < cohort.n_tests(); ++k) {
        beta.col(k) = qr.solve(y.col(k));
    }

    ResidualizeResult result{apply_residualization(cohort, beta), beta};
    return result;
}

std::vector<std::string> constant_covariates(const Cohort& cohort) {
    std::vector<std::string> names;
    if (cohort.subjects.empty()) {
        return names;
    }
    for (int c = 0; c < cohort.n_covariates(); ++c) {
        const double first = cohort.subjects.front().covariates[c];
        bool varies = false;
        for (const auto& s : cohort.subjects) {
            if (s.covariates[c] != first) {
                varies = true;
                break;
            }
        }
        if (!varies) {
            names.push_back(cohort.covariate_names[c]);
        }
    }
    return names;
}

Cohort select_covariates(const Cohort& cohort,
                         const std::vector<std::string>& keep) {
    std::vector<int> indices;
    for (const auto& name : keep) {
        const int idx = cohort.covariate_index(name);
        if (idx < 0) {
            throw std::invalid_argument("select_covariates: no covariate '" +
                                        name + "'");
        }
        indices.push_back(idx);
    }
    Cohort out = cohort;
    out.covariate_names = keep;
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
        Eigen::VectorXd sub(static_cast<Eigen::Index>(indices.size()));
        for (std::size_t c = 0; c < indices.size(); ++c) {
            sub[static_cast<Eigen::Index>(c)] =
                cohort.subjects[i].covariates[indices[c]];
        }
        out.subjects[i].covariates = std::move(sub);
    }
    return out;
}

Cohort apply_residualization(const Cohort& cohort, const Eigen::MatrixXd& beta) {
    if (beta.rows() != cohort.n_covariates() + 1 ||
        beta.cols() != cohort.n_tests()) {
        throw std::invalid_argument(
            "apply_residualization: coefficient dimension mismatch");
    }
    Cohort out = cohort;
    for (auto& s : out.subjects) {
        Eigen::VectorXd xrow(cohort.n_covariates() + 1);
        xrow[0] = 1.0;
        xrow.tail(cohort.n_covariates()) = s.covariates;
        const Eigen::RowVectorXd fitted = xrow.transpose() * beta;
        s.scores.rowwise() -= fitted;
    }
    out.residualized = true;
    return out;
}

}  // namespace cogsim
