#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace cogsim {

/// Lower-triangular Cholesky factor with escalating diagonal jitter
/// (1e-10 up to 1e-6) before giving up. Throws std::runtime_error if the
/// matrix is not positive definite even after the largest jitter.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& m);

/// Deterministic child seed for a tagged pipeline stage.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

// Deterministic random source. All transforms are explicit (Box-Muller,
// Marsaglia-Tsang, Bartlett) so that a stream is a pure function of its
// seed path: substreams derived from (seed, iteration, unit index) give
// identical draws whether units are processed serially or in parallel.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    // Derives an independent stream from a root seed and a path of
    // identifiers (phase, iteration, subject, ...).
    static Rng substream(std::uint64_t seed,
                         std::initializer_list<std::uint64_t> path);

    // Uniform on the open interval (0, 1); never returns an endpoint.
    double uniform();
    double uniform(double lo, double hi);
    // Uniform on {0, ..., n-1}, unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n);
    bool bernoulli(double p);

    double normal();
    double normal(double mean, double sd);
    Eigen::VectorXd normal_vector(Eigen::Index n);

    // shape/rate parameterization: mean = shape / rate.
    double gamma(double shape, double rate);
    // shape/rate parameterization: density ~ x^{-shape-1} exp(-rate / x).
    double inverse_gamma(double shape, double rate);
    double chi_squared(double dof);
    double exponential(double rate);

    Eigen::VectorXd mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
    // W_p(dof, scale), E[W] = dof * scale. Requires dof > p - 1.
    Eigen::MatrixXd wishart(double dof, const Eigen::MatrixXd& scale);
    // X = W^{-1} with W ~ Wishart(dof, scale^{-1}); E[X] = scale / (dof - p - 1).
    Eigen::MatrixXd inverse_wishart(double dof, const Eigen::MatrixXd& scale);

  private:
    std::mt19937_64 engine_;
};

}  // namespace cogsim
