#include <cmath>
#include <numbers>
#include <random>

#include "atlas/regression/local_regression.hpp"
#include "checks.hpp"

namespace acceptance {

using namespace atlas;
using regression::Mat;
using regression::Vec;

namespace {

Vec circle_embedding(const Vec& z) {
    const double t = 2.0 * std::numbers::pi * z(0);
    return Vec{{std::cos(t), std::sin(t), 0.0}};
}

Vec affine_map(const Vec& z) { return Vec{{0.3 - 1.7 * z(0), 2.0 * z(0) + 0.5, -0.25 * z(0)}}; }

// Noise-free affine data: every local fit must return the exact value at its
// center, and the estimator must interpolate the grid nodes.
double affine_recovery_error() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::Index n = 2000;
    Mat latent(n, 1), values(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
        latent(r, 0) = unif(rng);
        values.row(r) = affine_map(latent.row(r).transpose()).transpose();
    }
    regression::RegressionSpec spec;
    spec.smoothness = 2;
    const auto decoder = regression::build_regression_decoder(latent, values, spec);
    double worst = 0.0;
    for (std::size_t m = 0; m < decoder.fits().size(); ++m) {
        const Vec center = decoder.grid().center(m);
        const Vec truth = affine_map(center);
        worst = std::max(worst, (decoder.fits()[m].constant - truth).cwiseAbs().maxCoeff());
        worst = std::max(worst, (decoder.evaluate(center) - truth).cwiseAbs().maxCoeff());
        for (double probe : {0.0, 0.37, 1.0}) {
            const Vec z = Vec::Constant(1, probe);
            worst = std::max(worst, (regression::evaluate(decoder.fits()[m], 1, z) - affine_map(z)).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

} // namespace

Outcome local_regression() {
    regression::ConvergenceOptions options;
    options.smoothness = 2;
    options.noise = 0.01 / std::sqrt(3.0);
    options.seed = 5;
    options.probes_per_dim = 2000;
    options.repetitions = 3;
    const auto rows = regression::convergence_experiment(circle_embedding, 1, 3, {1000, 3000, 10000}, options);
    const double slope = regression::loglog_slope(rows);
    const double affine = affine_recovery_error();
    const bool pass = slope <= -0.3 && affine <= 1e-9;
    return {pass, format("slope %.3f (need <= -0.3; errors %.4f %.4f %.4f at N = %d %d %d), affine error %.1e",
                         slope, rows[0].sup_error, rows[1].sup_error, rows[2].sup_error, rows[0].grid_resolution,
                         rows[1].grid_resolution, rows[2].grid_resolution, affine)};
}

} // namespace acceptance
