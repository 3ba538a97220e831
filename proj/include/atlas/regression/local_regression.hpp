#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "atlas/approx/approx_nets.hpp"

namespace atlas::regression {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Exponent vectors of all monomials in d variables of total degree <= degree,
/// ordered by degree (constant first).
std::vector<std::vector<int>> monomials(int dim, int degree);

struct LocalFit {
    Vec center;
    Mat coefficients;  // monomials x D, in coordinates (z - center)
    Vec constant;      // D, the value of the fitted polynomial at the center
    std::size_t neighborhood = 0;
    double radius = 0.0;      // after any fallback doubling
    bool degenerate = false;  // rank-deficient design even after fallback
};

struct FitOptions {
    int max_doublings = 3;
    std::size_t min_neighbors = 0;  // 0: the monomial count
};

/// Least-squares fit of a degree <= `degree` polynomial to (z_j, x_j) with
/// |z_j - center| <= radius, solved by column-pivoted QR. The radius doubles
/// while the neighborhood is smaller than the monomial count. Throws
/// DomainError if it stays too small.
LocalFit local_polyfit(const Mat& latent, const Mat& values, const Vec& center, double radius, int degree,
                       const FitOptions& options = {});

/// Evaluates a local fit at z.
Vec evaluate(const LocalFit& fit, int degree, const Vec& z);

struct RegressionSpec {
    int smoothness = 2;  // k: local degree k - 1
    int grid_resolution = 0;  // N; 0 couples N = round(n^(1 / (2k + d)))
    double radius = 0.0;      // 0: 1 / N
    FitOptions fit;

    int degree() const { return smoothness - 1; }
};

/// f^(z) = sum_m phi_m(z) c_m with c_m the constant term of the local fit at m / N.
class RegressionDecoder {
public:
    RegressionDecoder(approx::PouGrid grid, std::vector<LocalFit> fits, int degree);

    Vec evaluate(const Vec& z) const;
    Mat evaluate_rows(const Mat& latent) const;
    /// Grid indices whose phi_m is nonzero at z.
    std::vector<std::size_t> active(const Vec& z) const;

    const approx::PouGrid& grid() const { return grid_; }
    const std::vector<LocalFit>& fits() const { return fits_; }
    int output_dim() const;

private:
    approx::PouGrid grid_;
    std::vector<LocalFit> fits_;
    int degree_ = 0;
};

/// Samples are rows: latent n x d in [0,1]^d, values n x D.
RegressionDecoder build_regression_decoder(const Mat& latent, const Mat& values, const RegressionSpec& spec);

int coupled_resolution(std::size_t n, int smoothness, int dim);

using Function = std::function<Vec(const Vec&)>;

struct ConvergenceRow {
    std::size_t n = 0;
    int grid_resolution = 0;
    double sup_error = 0.0;
    double slope_so_far = 0.0;  // log-log slope over rows up to this one (0 for the first)
};

struct ConvergenceOptions {
    int smoothness = 2;
    double noise = 0.0;  // per-coordinate standard deviation
    std::uint64_t seed = 0;
    int probes_per_dim = 2000;
    int repetitions = 1;  // median sup error over repetitions
};

/// For each n: uniform latent samples, noisy values f(z) + N(0, noise^2 I),
/// the coupled grid, and the sup error of f^ on a dense probe grid.
std::vector<ConvergenceRow> convergence_experiment(const Function& f, int dim, int out_dim,
                                                   const std::vector<std::size_t>& n_list,
                                                   const ConvergenceOptions& options);

/// Least-squares slope of log(sup_error) against log(n).
double loglog_slope(const std::vector<ConvergenceRow>& rows);

/// Columns n, N, sup_error, slope_so_far.
void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows);

} // namespace atlas::regression
