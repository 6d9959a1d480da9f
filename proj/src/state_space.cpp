#include "cogsim/state_space.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace cogsim {

namespace {

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

bool is_symmetric_pd(const Eigen::MatrixXd& m) {
    if (!m.isApprox(m.transpose(), 1e-10)) {
        return false;
    }
    return Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success;
}

}  // namespace

void StateSpaceParams::validate() const {
    const Eigen::Index k = n_tests();
    const Eigen::Index q = n_factors();
    if (k == 0 || q == 0) {
        throw std::invalid_argument("state-space params: empty loading matrix");
    }
    if (q >= k) {
        throw std::invalid_argument(
            "state-space params: need fewer factors than tests");
    }
    if (sigma_eps.size() != k || (sigma_eps.array() <= 0.0).any()) {
        throw std::invalid_argument(
            "state-space params: sigma_eps must be positive, one per test");
    }
    if (sigma_eta.rows() != q || sigma_eta.cols() != q ||
        !is_symmetric_pd(sigma_eta)) {
        throw std::invalid_argument(
            "state-space params: sigma_eta must be symmetric positive definite");
    }
    if (m0.size() != q || p0.rows() != q || p0.cols() != q ||
        !is_symmetric_pd(p0)) {
        throw std::invalid_argument(
            "state-space params: invalid initial-state prior");
    }
}

std::vector<double> visit_gaps_years(const std::vector<double>& visit_days) {
    std::vector<double> gaps;
    for (std::size_t j = 1; j < visit_days.size(); ++j) {
        gaps.push_back((visit_days[j] - visit_days[j - 1]) / kDaysPerYear);
    }
    return gaps;
}

FilterResult kalman_filter(const SubjectSeries& series,
                           const StateSpaceParams& params) {
    const std::size_t n_visits = series.n_visits();
    if (n_visits == 0) {
        throw std::invalid_argument("kalman_filter: series has no visits");
    }
    const Eigen::Index k = params.n_tests();
    if (series.scores.cols() != k) {
        throw std::invalid_argument("kalman_filter: score dimension mismatch");
    }
    const Eigen::MatrixXd& g = params.loadings;
    const Eigen::MatrixXd r = params.sigma_eps.asDiagonal();
    const Eigen::MatrixXd identity =
        Eigen::MatrixXd::Identity(params.n_factors(), params.n_factors());

    FilterResult out;
    out.gaps_years = visit_gaps_years(series.visit_days);

    Eigen::VectorXd mean_pred = params.m0;
    Eigen::MatrixXd cov_pred = params.p0;
    for (std::size_t j = 0; j < n_visits; ++j) {
        if (j > 0) {
            mean_pred = out.updated_mean.back();
            cov_pred = out.updated_cov.back() +
                       out.gaps_years[j - 1] * params.sigma_eta;
            symmetrize(cov_pred);
        }
        out.predicted_mean.push_back(mean_pred);
        out.predicted_cov.push_back(cov_pred);

        const Eigen::VectorXd y =
            series.scores.row(static_cast<Eigen::Index>(j)).transpose();
        Eigen::MatrixXd innov_cov = g * cov_pred * g.transpose() + r;
        symmetrize(innov_cov);
        Eigen::LLT<Eigen::MatrixXd> llt(innov_cov);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error(
                "kalman_filter: innovation covariance not positive definite "
                "at visit " +
                std::to_string(j + 1));
        }
        const Eigen::VectorXd innovation = y - g * mean_pred;
        // Gain via solve: K = P G' S^{-1}.
        const Eigen::MatrixXd gain =
            llt.solve(g * cov_pred.transpose()).transpose();

        const Eigen::VectorXd mean_upd = mean_pred + gain * innovation;
        const Eigen::MatrixXd a = identity - gain * g;
        Eigen::MatrixXd cov_upd =
            a * cov_pred * a.transpose() + gain * r * gain.transpose();
        symmetrize(cov_upd);
        out.updated_mean.push_back(mean_upd);
        out.updated_cov.push_back(cov_upd);

        double log_det = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            log_det += 2.0 * std::log(llt.matrixL()(i, i));
        }
        const double quad = innovation.dot(llt.solve(innovation));
        out.log_likelihood -=
            0.5 * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) +
                   log_det + quad);
    }
    return out;
}

namespace {

// Smoother gain J_j = P_{j|j} (P_{j+1|j})^{-1}; shared by the RTS pass and
// the backward sampler.
Eigen::MatrixXd smoother_gain(const Eigen::MatrixXd& cov_updated,
                              const Eigen::MatrixXd& cov_pred_next) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov_pred_next);
    if (llt.info() == Eigen::Success) {
        return llt.solve(cov_updated.transpose()).transpose();
    }
    const Eigen::MatrixXd chol = cholesky_with_jitter(cov_pred_next);
    Eigen::LLT<Eigen::MatrixXd> jittered(chol * chol.transpose());
    return jittered.solve(cov_updated.transpose()).transpose();
}

}  // namespace

SmootherResult kalman_smoother(const FilterResult& filter,
                               const StateSpaceParams& params) {
    const std::size_t n = filter.n_visits();
    if (n == 0 || filter.gaps_years.size() + 1 != n) {
        throw std::invalid_argument("kalman_smoother: inconsistent filter");
    }
    if (filter.updated_mean.front().size() != params.n_factors()) {
        throw std::invalid_argument("kalman_smoother: dimension mismatch");
    }
    SmootherResult out;
    out.mean.resize(n);
    out.cov.resize(n);
    out.mean[n - 1] = filter.updated_mean[n - 1];
    out.cov[n - 1] = filter.updated_cov[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) {
        const Eigen::MatrixXd& cov_pred_next = filter.predicted_cov[j + 1];
        const Eigen::MatrixXd gain =
            smoother_gain(filter.updated_cov[j], cov_pred_next);
        out.mean[j] = filter.updated_mean[j] +
                      gain * (out.mean[j + 1] - filter.predicted_mean[j + 1]);
        Eigen::MatrixXd cov =
            filter.updated_cov[j] +
            gain * (out.cov[j + 1] - cov_pred_next) * gain.transpose();
        symmetrize(cov);
        out.cov[j] = cov;
    }
    return out;
}

FactorTrajectory ffbs_sample(const FilterResult& filter,
                             const StateSpaceParams& params, Rng& rng) {
    const std::size_t n = filter.n_visits();
    if (n == 0) {
        throw std::invalid_argument("ffbs_sample: empty filter");
    }
    FactorTrajectory traj;
    traj.kind = TrajectoryKind::SampledDraw;
    traj.states.resize(n);
    traj.states[n - 1] =
        rng.mvn(filter.updated_mean[n - 1], filter.updated_cov[n - 1]);
    for (std::size_t j = n - 1; j-- > 0;) {
        const Eigen::MatrixXd& cov_pred_next = filter.predicted_cov[j + 1];
        const Eigen::MatrixXd gain =
            smoother_gain(filter.updated_cov[j], cov_pred_next);
        const Eigen::VectorXd cond_mean =
            filter.updated_mean[j] +
            gain * (traj.states[j + 1] - filter.predicted_mean[j + 1]);
        Eigen::MatrixXd cond_cov = filter.updated_cov[j] -
                                   gain * cov_pred_next * gain.transpose();
        symmetrize(cond_cov);
        traj.states[j] = rng.mvn(cond_mean, cond_cov);
    }
    (void)params;
    return traj;
}

JointGaussian joint_gaussian_oracle(const SubjectSeries& series,
                                    const StateSpaceParams& params) {
    params.validate();
    const Eigen::Index n_visits =
        static_cast<Eigen::Index>(series.n_visits());
    if (n_visits == 0) {
        throw std::invalid_argument("joint_gaussian_oracle: no visits");
    }
    const Eigen::Index q = params.n_factors();
    const Eigen::Index k = params.n_tests();
    if (n_visits * q > 50 || n_visits * k > 50) {
        throw std::invalid_argument(
            "joint_gaussian_oracle: instance too large for the dense oracle");
    }
    const auto gaps = visit_gaps_years(series.visit_days);

    // Random-walk prior over the stacked states: Cov(a_j, a_l) =
    // P0 + sum of innovation covariances shared by both visits.
    const Eigen::Index dim_a = n_visits * q;
    Eigen::VectorXd mean_a(dim_a);
    Eigen::MatrixXd cov_a(dim_a, dim_a);
    for (Eigen::Index j = 0; j < n_visits; ++j) {
        mean_a.segment(j * q, q) = params.m0;
    }
    std::vector<Eigen::MatrixXd> cum(n_visits);
    cum[0] = params.p0;
    for (Eigen::Index j = 1; j < n_visits; ++j) {
        cum[j] = cum[j - 1] + gaps[j - 1] * params.sigma_eta;
    }
    for (Eigen::Index j = 0; j < n_visits; ++j) {
        for (Eigen::Index l = 0; l < n_visits; ++l) {
            cov_a.block(j * q, l * q, q, q) = cum[std::min(j, l)];
        }
    }

    // Observation operator: block-diagonal loadings.
    const Eigen::Index dim_y = n_visits * k;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim_y, dim_a);
    Eigen::VectorXd y(dim_y);
    for (Eigen::Index j = 0; j < n_visits; ++j) {
        h.block(j * k, j * q, k, q) = params.loadings;
        y.segment(j * k, k) = series.scores.row(j).transpose();
    }
    Eigen::MatrixXd cov_y = h * cov_a * h.transpose();
    for (Eigen::Index j = 0; j < n_visits; ++j) {
        cov_y.block(j * k, j * k, k, k) +=
            Eigen::MatrixXd(params.sigma_eps.asDiagonal());
    }
    const Eigen::VectorXd mean_y = h * mean_a;
    const Eigen::MatrixXd cov_ay = cov_a * h.transpose();

    Eigen::LLT<Eigen::MatrixXd> llt(cov_y);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error(
            "joint_gaussian_oracle: observation covariance not PD");
    }
    const Eigen::VectorXd resid = y - mean_y;

    JointGaussian out;
    out.state_mean = mean_a + cov_ay * llt.solve(resid);
    out.state_cov = cov_a - cov_ay * llt.solve(cov_ay.transpose());
    out.state_cov = 0.5 * (out.state_cov + out.state_cov.transpose()).eval();

    double log_det = 0.0;
    for (Eigen::Index i = 0; i < dim_y; ++i) {
        log_det += 2.0 * std::log(llt.matrixL()(i, i));
    }
    out.log_likelihood =
        -0.5 * (static_cast<double>(dim_y) * std::log(2.0 * std::numbers::pi) +
                log_det + resid.dot(llt.solve(resid)));
    return out;
}

}  // namespace cogsim
