#include "cogsim/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace cogsim {

Eigen::Index LoadingStructure::anchor_row(Eigen::Index factor) const {
    for (Eigen::Index k = 0; k < mask.rows(); ++k) {
        if (mask(k, factor)) {
            return k;
        }
    }
    throw std::logic_error("loading structure: factor has no tests");
}

void LoadingStructure::validate() const {
    if (mask.rows() == 0 || mask.cols() == 0) {
        throw std::invalid_argument("loading structure: empty mask");
    }
    for (Eigen::Index k = 0; k < mask.rows(); ++k) {
        if (!mask.row(k).any()) {
            throw std::invalid_argument(
                "loading structure: test " + std::to_string(k) +
                " loads on no factor");
        }
    }
    for (Eigen::Index q = 0; q < mask.cols(); ++q) {
        if (!mask.col(q).any()) {
            throw std::invalid_argument(
                "loading structure: factor " + std::to_string(q) +
                " has no tests");
        }
    }
    if (factor_names.size() != static_cast<std::size_t>(mask.cols())) {
        throw std::invalid_argument(
            "loading structure: factor name count mismatch");
    }
}

LoadingStructure LoadingStructure::four_domain_default() {
    LoadingStructure s;
    s.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
        10, 4, false);
    const int factor_of_test[10] = {0, 0, 1, 1, 2, 2, 2, 3, 3, 3};
    for (int k = 0; k < 10; ++k) {
        s.mask(k, factor_of_test[k]) = true;
    }
    s.factor_names = {"memory", "working_memory", "language",
                      "psychomotor_speed"};
    return s;
}

GibbsPriors GibbsPriors::defaults(Eigen::Index n_tests,
                                  Eigen::Index n_factors) {
    GibbsPriors p;
    p.m0 = Eigen::VectorXd::Zero(n_factors);
    p.p0 = 10.0 * Eigen::MatrixXd::Identity(n_factors, n_factors);
    p.loading_mean = Eigen::MatrixXd::Zero(n_tests, n_factors);
    p.loading_var = 1.0;
    p.sigma_eps_shape = 0.01;
    p.sigma_eps_rate = 0.01;
    p.eta_dof = static_cast<double>(n_factors) + 2.0;
    p.eta_scale = Eigen::MatrixXd::Identity(n_factors, n_factors);
    return p;
}

void GibbsConfig::validate() const {
    structure.validate();
    if (n_iter <= 0 || burn_in < 0 || burn_in >= n_iter) {
        throw std::invalid_argument("gibbs config: need 0 <= burn_in < n_iter");
    }
    if (priors.eta_dof <= static_cast<double>(structure.n_factors()) - 1.0) {
        throw std::invalid_argument(
            "gibbs config: eta_dof must exceed n_factors - 1");
    }
    if (priors.loading_var <= 0.0) {
        throw std::invalid_argument("gibbs config: loading_var must be > 0");
    }
}

GibbsConfig GibbsConfig::defaults(const LoadingStructure& structure,
                                  std::uint64_t seed) {
    GibbsConfig c;
    c.structure = structure;
    c.priors = GibbsPriors::defaults(structure.n_tests(),
                                     structure.n_factors());
    c.seed = seed;
    return c;
}

Eigen::VectorXd sample_loading_row(
    const Eigen::MatrixXd& alpha_stack, const Eigen::VectorXd& y_k,
    double sigma_eps_k, const Eigen::VectorXd& prior_mean, double prior_var,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& mask_row, Rng& rng) {
    if (sigma_eps_k <= 0.0 || prior_var <= 0.0) {
        throw std::invalid_argument("sample_loading_row: variances must be > 0");
    }
    const Eigen::Index q = mask_row.size();
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < q; ++j) {
        if (mask_row[j]) {
            active.push_back(j);
        }
    }
    const Eigen::Index qa = static_cast<Eigen::Index>(active.size());
    if (qa == 0) {
        return Eigen::VectorXd::Zero(q);
    }

    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(qa, qa);
    Eigen::VectorXd cross = Eigen::VectorXd::Zero(qa);
    if (alpha_stack.rows() > 0) {
        Eigen::MatrixXd sub(alpha_stack.rows(), qa);
        for (Eigen::Index c = 0; c < qa; ++c) {
            sub.col(c) = alpha_stack.col(active[c]);
        }
        scatter = sub.transpose() * sub;
        cross = sub.transpose() * y_k;
    }

    // Posterior precision = scatter / sigma_eps + I / prior_var; the
    // draw is restricted to the masked-in coordinates.
    Eigen::MatrixXd precision =
        scatter / sigma_eps_k +
        Eigen::MatrixXd::Identity(qa, qa) / prior_var;
    Eigen::VectorXd lin = cross / sigma_eps_k;
    for (Eigen::Index c = 0; c < qa; ++c) {
        lin[c] += prior_mean[active[c]] / prior_var;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error(
            "sample_loading_row: singular posterior precision");
    }
    const Eigen::VectorXd mean = llt.solve(lin);
    // cov = precision^{-1}; draw via L^{-T} z.
    const Eigen::VectorXd z = rng.normal_vector(qa);
    const Eigen::VectorXd perturb =
        llt.matrixU().solve(z);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(q);
    for (Eigen::Index c = 0; c < qa; ++c) {
        row[active[c]] = mean[c] + perturb[c];
    }
    return row;
}

std::pair<double, double> sigma_eps_posterior(double residual_ss,
                                              std::size_t n_obs, double shape0,
                                              double rate0) {
    return {(static_cast<double>(n_obs) + shape0) / 2.0,
            (rate0 + residual_ss) / 2.0};
}

double sample_sigma_eps(const Eigen::MatrixXd& alpha_stack,
                        const Eigen::VectorXd& y_k,
                        const Eigen::VectorXd& loading_row, double shape0,
                        double rate0, Rng& rng) {
    const Eigen::VectorXd resid = y_k - alpha_stack * loading_row;
    const auto [shape, rate] = sigma_eps_posterior(
        resid.squaredNorm(), static_cast<std::size_t>(y_k.size()), shape0,
        rate0);
    return std::max(rng.inverse_gamma(shape, rate), 1e-12);
}

std::pair<double, Eigen::MatrixXd> sigma_eta_posterior(
    const std::vector<FactorTrajectory>& trajectories,
    const std::vector<std::vector<double>>& gaps_years,
    const GibbsPriors& priors) {
    Eigen::MatrixXd scatter = priors.eta_scale;
    double dof = priors.eta_dof;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto& states = trajectories[i].states;
        const auto& gaps = gaps_years[i];
        for (std::size_t j = 1; j < states.size(); ++j) {
            const Eigen::VectorXd incr =
                (states[j] - states[j - 1]) / std::sqrt(gaps[j - 1]);
            scatter += incr * incr.transpose();
            dof += 1.0;
        }
    }
    if (Eigen::LLT<Eigen::MatrixXd>(scatter).info() != Eigen::Success) {
        throw std::runtime_error(
            "sigma_eta_posterior: scatter matrix not positive definite");
    }
    return {dof, scatter};
}

Eigen::MatrixXd sample_sigma_eta(
    const std::vector<FactorTrajectory>& trajectories,
    const std::vector<std::vector<double>>& gaps_years,
    const GibbsPriors& priors, Rng& rng) {
    const auto [dof, scatter] =
        sigma_eta_posterior(trajectories, gaps_years, priors);
    Eigen::MatrixXd draw = rng.inverse_wishart(dof, scatter);
    // Rescale to a correlation matrix: the model fixes the diagonal at 1.
    const Eigen::VectorXd d = draw.diagonal().array().rsqrt();
    draw = d.asDiagonal() * draw * d.asDiagonal();
    draw.diagonal().setOnes();
    return 0.5 * (draw + draw.transpose()).eval();
}

namespace {

constexpr std::uint64_t kPhaseStates = 1;
constexpr std::uint64_t kPhaseLoadings = 2;
constexpr std::uint64_t kPhaseSigmaEps = 3;
constexpr std::uint64_t kPhaseSigmaEta = 4;

double split_rhat(const std::vector<double>& chain) {
    const std::size_t n = chain.size() / 2;
    if (n < 2) {
        return 1.0;
    }
    auto moments = [&](std::size_t begin) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += chain[begin + i];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = chain[begin + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n - 1);
        return std::pair<double, double>{mean, var};
    };
    const auto [m1, v1] = moments(0);
    const auto [m2, v2] = moments(chain.size() - n);
    const double w = 0.5 * (v1 + v2);
    if (w <= 0.0) {
        return 1.0;
    }
    const double grand = 0.5 * (m1 + m2);
    const double b = static_cast<double>(n) *
                     ((m1 - grand) * (m1 - grand) + (m2 - grand) * (m2 - grand));
    const double var_plus =
        (static_cast<double>(n - 1) / static_cast<double>(n)) * w +
        b / static_cast<double>(n);
    return std::sqrt(var_plus / w);
}

void check_divergence(const Eigen::MatrixXd& loadings,
                      const Eigen::VectorXd& sigma_eps,
                      const Eigen::MatrixXd& sigma_eta, int iteration) {
    const double worst =
        std::max({loadings.cwiseAbs().maxCoeff(), sigma_eps.cwiseAbs().maxCoeff(),
                  sigma_eta.cwiseAbs().maxCoeff()});
    if (!(worst < 1e6)) {
        throw std::runtime_error("run_gibbs: chain diverged at iteration " +
                                 std::to_string(iteration));
    }
}

}  // namespace

PosteriorSummary run_gibbs(const Cohort& cohort, const GibbsConfig& config) {
    config.validate();
    const Eigen::Index n_tests = config.structure.n_tests();
    const Eigen::Index n_factors = config.structure.n_factors();
    if (cohort.n_tests() != n_tests) {
        throw std::invalid_argument("run_gibbs: cohort/structure test mismatch");
    }
    const std::size_t n_subjects = cohort.subjects.size();
    if (n_subjects == 0) {
        throw std::invalid_argument("run_gibbs: empty cohort");
    }

    // Visit bookkeeping for the stacked representation.
    std::vector<std::vector<double>> gaps(n_subjects);
    std::vector<Eigen::Index> offset(n_subjects);
    Eigen::Index total_visits = 0;
    for (std::size_t i = 0; i < n_subjects; ++i) {
        gaps[i] = visit_gaps_years(cohort.subjects[i].visit_days);
        offset[i] = total_visits;
        total_visits += static_cast<Eigen::Index>(cohort.subjects[i].n_visits());
    }
    Eigen::MatrixXd y_stack(total_visits, n_tests);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        y_stack.block(offset[i], 0,
                      static_cast<Eigen::Index>(cohort.subjects[i].n_visits()),
                      n_tests) = cohort.subjects[i].scores;
    }

    // Initial parameter state: unit loadings on masked-in entries.
    StateSpaceParams params;
    params.loadings = config.structure.mask.cast<double>().matrix();
    params.sigma_eps = Eigen::VectorXd::Ones(n_tests);
    params.sigma_eta = Eigen::MatrixXd::Identity(n_factors, n_factors);
    params.m0 = config.priors.m0;
    params.p0 = config.priors.p0;

    std::vector<FactorTrajectory> trajectories(n_subjects);
    Eigen::MatrixXd alpha_stack(total_visits, n_factors);

    // Accumulators (post burn-in).
    Eigen::MatrixXd loadings_sum = Eigen::MatrixXd::Zero(n_tests, n_factors);
    Eigen::VectorXd sigma_eps_sum = Eigen::VectorXd::Zero(n_tests);
    Eigen::MatrixXd sigma_eta_sum =
        Eigen::MatrixXd::Zero(n_factors, n_factors);
    Eigen::MatrixXd alpha_sum = Eigen::MatrixXd::Zero(total_visits, n_factors);
    std::vector<Eigen::MatrixXd> loading_draws;

    // Scalar traces for split-Rhat: masked-in loadings, sigma_eps,
    // sigma_eta upper off-diagonals.
    std::vector<std::pair<std::string, std::function<double()>>> monitors;
    std::vector<std::vector<double>> traces;
    for (Eigen::Index k = 0; k < n_tests; ++k) {
        for (Eigen::Index q = 0; q < n_factors; ++q) {
            if (config.structure.mask(k, q)) {
                monitors.emplace_back(
                    "loading[" + cohort.tests[k].name + "," +
                        config.structure.factor_names[q] + "]",
                    [&params, k, q] { return params.loadings(k, q); });
            }
        }
    }
    for (Eigen::Index k = 0; k < n_tests; ++k) {
        monitors.emplace_back("sigma_eps[" + cohort.tests[k].name + "]",
                              [&params, k] { return params.sigma_eps[k]; });
    }
    for (Eigen::Index a = 0; a < n_factors; ++a) {
        for (Eigen::Index b = a + 1; b < n_factors; ++b) {
            monitors.emplace_back(
                "sigma_eta[" + config.structure.factor_names[a] + "," +
                    config.structure.factor_names[b] + "]",
                [&params, a, b] { return params.sigma_eta(a, b); });
        }
    }
    traces.resize(monitors.size());

    const int retained = config.n_iter - config.burn_in;
    for (int it = 1; it <= config.n_iter; ++it) {
        // Step 1: sample state trajectories subject by subject.
        for (std::size_t i = 0; i < n_subjects; ++i) {
            Rng rng = Rng::substream(
                config.seed,
                {kPhaseStates, static_cast<std::uint64_t>(it),
                 static_cast<std::uint64_t>(i)});
            const FilterResult filter =
                kalman_filter(cohort.subjects[i], params);
            trajectories[i] = ffbs_sample(filter, params, rng);
            for (std::size_t j = 0; j < trajectories[i].states.size(); ++j) {
                alpha_stack.row(offset[i] + static_cast<Eigen::Index>(j)) =
                    trajectories[i].states[j].transpose();
            }
        }

        // Step 2: loading rows.
        for (Eigen::Index k = 0; k < n_tests; ++k) {
            Rng rng = Rng::substream(
                config.seed,
                {kPhaseLoadings, static_cast<std::uint64_t>(it),
                 static_cast<std::uint64_t>(k)});
            params.loadings.row(k) =
                sample_loading_row(alpha_stack, y_stack.col(k),
                                   params.sigma_eps[k],
                                   config.priors.loading_mean.row(k).transpose(),
                                   config.priors.loading_var,
                                   config.structure.mask.row(k).transpose(), rng)
                    .transpose();
        }

        // Step 3: measurement variances.
        for (Eigen::Index k = 0; k < n_tests; ++k) {
            Rng rng = Rng::substream(
                config.seed,
                {kPhaseSigmaEps, static_cast<std::uint64_t>(it),
                 static_cast<std::uint64_t>(k)});
            params.sigma_eps[k] = sample_sigma_eps(
                alpha_stack, y_stack.col(k), params.loadings.row(k).transpose(),
                config.priors.sigma_eps_shape, config.priors.sigma_eps_rate,
                rng);
        }

        // Step 4: innovation covariance, identified by rescaling to a
        // correlation matrix. The scale removed from sigma_eta moves into
        // the loadings and out of the states (y = (G D)(D^{-1} a) leaves
        // residuals untouched), so the unit-diagonal constraint feeds back
        // into the chain instead of being discarded with the draw's
        // diagonal.
        {
            Rng rng = Rng::substream(
                config.seed, {kPhaseSigmaEta, static_cast<std::uint64_t>(it)});
            const auto [dof, scatter] =
                sigma_eta_posterior(trajectories, gaps, config.priors);
            const Eigen::MatrixXd draw = rng.inverse_wishart(dof, scatter);
            const Eigen::VectorXd scale_up = draw.diagonal().array().sqrt();
            const Eigen::VectorXd scale_down = scale_up.cwiseInverse();
            params.sigma_eta = scale_down.asDiagonal() * draw *
                               scale_down.asDiagonal();
            params.sigma_eta.diagonal().setOnes();
            params.sigma_eta =
                0.5 * (params.sigma_eta + params.sigma_eta.transpose()).eval();
            for (Eigen::Index q = 0; q < n_factors; ++q) {
                params.loadings.col(q) *= scale_up[q];
                alpha_stack.col(q) *= scale_down[q];
            }
            for (auto& traj : trajectories) {
                for (auto& state : traj.states) {
                    state = state.cwiseProduct(scale_down);
                }
            }
        }

        // Sign identification: anchor loading of every factor kept
        // non-negative; the factor's trajectories and its innovation
        // correlations flip with the column so residuals are unchanged.
        for (Eigen::Index q = 0; q < n_factors; ++q) {
            const Eigen::Index anchor = config.structure.anchor_row(q);
            if (params.loadings(anchor, q) < 0.0) {
                params.loadings.col(q) *= -1.0;
                alpha_stack.col(q) *= -1.0;
                for (auto& traj : trajectories) {
                    for (auto& state : traj.states) {
                        state[q] *= -1.0;
                    }
                }
                for (Eigen::Index b = 0; b < n_factors; ++b) {
                    if (b != q) {
                        params.sigma_eta(q, b) *= -1.0;
                        params.sigma_eta(b, q) *= -1.0;
                    }
                }
            }
        }

        check_divergence(params.loadings, params.sigma_eps, params.sigma_eta,
                         it);

        if (it > config.burn_in) {
            loadings_sum += params.loadings;
            sigma_eps_sum += params.sigma_eps;
            sigma_eta_sum += params.sigma_eta;
            alpha_sum += alpha_stack;
            for (std::size_t m = 0; m < monitors.size(); ++m) {
                traces[m].push_back(monitors[m].second());
            }
            if (config.thin > 0 &&
                (it - config.burn_in - 1) % config.thin == 0) {
                loading_draws.push_back(params.loadings);
            }
        }
    }

    PosteriorSummary out;
    const double inv = 1.0 / static_cast<double>(retained);
    out.loadings_hat = loadings_sum * inv;
    // Masked-out entries are structurally zero in every draw; pin them.
    for (Eigen::Index k = 0; k < n_tests; ++k) {
        for (Eigen::Index q = 0; q < n_factors; ++q) {
            if (!config.structure.mask(k, q)) {
                out.loadings_hat(k, q) = 0.0;
            }
        }
    }
    out.sigma_eps_hat = sigma_eps_sum * inv;
    out.sigma_eta_hat = sigma_eta_sum * inv;
    out.sigma_eta_hat.diagonal().setOnes();
    out.loading_draws = std::move(loading_draws);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        out.subject_ids.push_back(cohort.subjects[i].subject_id);
        std::vector<Eigen::VectorXd> scores;
        for (std::size_t j = 0; j < cohort.subjects[i].n_visits(); ++j) {
            scores.push_back(
                alpha_sum.row(offset[i] + static_cast<Eigen::Index>(j))
                    .transpose() *
                inv);
        }
        out.factor_scores.push_back(std::move(scores));
    }
    for (std::size_t m = 0; m < monitors.size(); ++m) {
        ParameterDiagnostic d;
        d.name = monitors[m].first;
        double mean = 0.0;
        for (double v : traces[m]) {
            mean += v;
        }
        d.mean = mean * inv;
        d.split_rhat = split_rhat(traces[m]);
        out.diagnostics.push_back(std::move(d));
    }
    return out;
}

}  // namespace cogsim
