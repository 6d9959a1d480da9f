#include "cogsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace cogsim {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    const Eigen::MatrixXd identity =
        Eigen::MatrixXd::Identity(m.rows(), m.cols());
    for (int exponent = -10; exponent <= -6; ++exponent) {
        const double jitter = std::pow(10.0, exponent);
        llt.compute(m + jitter * identity);
        if (llt.info() == Eigen::Success) {
            return llt.matrixL();
        }
    }
    throw std::runtime_error(
        "cholesky_with_jitter: matrix not positive definite after jitter "
        "escalation to 1e-6");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t state = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
    std::uint64_t h = splitmix64(state);
    state ^= h;
    return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t state = seed;
    engine_.seed(splitmix64(state));
}

Rng Rng::substream(std::uint64_t seed,
                   std::initializer_list<std::uint64_t> path) {
    std::uint64_t state = seed;
    std::uint64_t h = splitmix64(state);
    for (std::uint64_t word : path) {
        state = h ^ (word + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
        h = splitmix64(state);
    }
    return Rng(h);
}

double Rng::uniform() {
    // 52 random bits plus a half-ulp offset keeps the draw inside (0, 1).
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: n must be positive");
    }
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw;
    do {
        draw = engine_();
    } while (draw >= limit);
    return draw % n;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = normal();
    }
    return z;
}

double Rng::gamma(double shape, double rate) {
    if (shape <= 0.0 || rate <= 0.0) {
        throw std::invalid_argument("gamma: shape and rate must be positive");
    }
    if (shape < 1.0) {
        // Boost to shape + 1 and scale back down (Marsaglia-Tsang sec. 6).
        const double g = gamma(shape + 1.0, 1.0);
        const double u = uniform();
        return g * std::pow(u, 1.0 / shape) / rate;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
            return d * v / rate;
        }
    }
}

double Rng::inverse_gamma(double shape, double rate) {
    return rate / gamma(shape, 1.0);
}

double Rng::chi_squared(double dof) { return 2.0 * gamma(0.5 * dof, 1.0); }

double Rng::exponential(double rate) {
    return -std::log(uniform()) / rate;
}

Eigen::VectorXd Rng::mvn(const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
    const Eigen::MatrixXd chol = cholesky_with_jitter(cov);
    return mean + chol * normal_vector(mean.size());
}

Eigen::MatrixXd Rng::wishart(double dof, const Eigen::MatrixXd& scale) {
    const Eigen::Index p = scale.rows();
    if (dof <= static_cast<double>(p) - 1.0) {
        throw std::invalid_argument("wishart: dof must exceed dimension - 1");
    }
    Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        bartlett(i, i) = std::sqrt(chi_squared(dof - static_cast<double>(i)));
        for (Eigen::Index j = 0; j < i; ++j) {
            bartlett(i, j) = normal();
        }
    }
    const Eigen::MatrixXd chol = cholesky_with_jitter(scale);
    const Eigen::MatrixXd factor = chol * bartlett;
    return factor * factor.transpose();
}

Eigen::MatrixXd Rng::inverse_wishart(double dof, const Eigen::MatrixXd& scale) {
    const Eigen::MatrixXd scale_inv =
        scale.llt().solve(Eigen::MatrixXd::Identity(scale.rows(), scale.cols()));
    const Eigen::MatrixXd w = wishart(dof, scale_inv);
    Eigen::MatrixXd draw =
        w.llt().solve(Eigen::MatrixXd::Identity(w.rows(), w.cols()));
    return 0.5 * (draw + draw.transpose());
}

}  // namespace cogsim
