#include "atlas/regression/local_regression.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>

#include "atlas/errors.hpp"
#include "atlas/parallel.hpp"

namespace atlas::regression {

std::vector<std::vector<int>> monomials(int dim, int degree) {
    if (dim < 1) throw ConfigError("monomial dimension must be positive");
    if (degree < 0) throw ConfigError("polynomial degree must be >= 0");
    std::vector<std::vector<int>> out;
    for (int total = 0; total <= degree; ++total) {
        // Exponent vectors with sum == total, last coordinate varying slowest.
        std::vector<int> e(static_cast<std::size_t>(dim), 0);
        std::function<void(int, int)> rec = [&](int k, int left) {
            if (k == dim - 1) {
                e[static_cast<std::size_t>(k)] = left;
                out.push_back(e);
                return;
            }
            for (int v = left; v >= 0; --v) {
                e[static_cast<std::size_t>(k)] = v;
                rec(k + 1, left - v);
            }
        };
        rec(0, total);
    }
    return out;
}

namespace {

double monomial_value(const std::vector<int>& exps, const Vec& offset) {
    double v = 1.0;
    for (std::size_t k = 0; k < exps.size(); ++k) {
        for (int p = 0; p < exps[k]; ++p) v *= offset(static_cast<Eigen::Index>(k));
    }
    return v;
}

} // namespace

LocalFit local_polyfit(const Mat& latent, const Mat& values, const Vec& center, double radius, int degree,
                       const FitOptions& options) {
    if (latent.rows() != values.rows()) throw DimensionError("latent and value rows differ");
    if (center.size() != latent.cols()) throw DimensionError("center dimension does not match the samples");
    if (!(radius > 0.0)) throw ConfigError("neighborhood radius must be positive");
    const auto terms = monomials(static_cast<int>(latent.cols()), degree);
    const std::size_t need = std::max(options.min_neighbors, terms.size());

    LocalFit fit;
    fit.center = center;
    fit.radius = radius;
    std::vector<Eigen::Index> rows;
    for (int attempt = 0;; ++attempt) {
        rows.clear();
        for (Eigen::Index j = 0; j < latent.rows(); ++j) {
            if ((latent.row(j).transpose() - center).norm() <= fit.radius) rows.push_back(j);
        }
        if (rows.size() >= need) break;
        if (attempt >= options.max_doublings) {
            throw DomainError("neighborhood of radius " + std::to_string(fit.radius) + " holds " +
                              std::to_string(rows.size()) + " samples, need " + std::to_string(need));
        }
        fit.radius *= 2.0;
    }
    fit.neighborhood = rows.size();

    Mat design(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(terms.size()));
    Mat rhs(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Vec offset = latent.row(rows[r]).transpose() - center;
        for (std::size_t t = 0; t < terms.size(); ++t) {
            design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = monomial_value(terms[t], offset);
        }
        rhs.row(static_cast<Eigen::Index>(r)) = values.row(rows[r]);
    }
    Eigen::ColPivHouseholderQR<Mat> qr(design);
    fit.degenerate = qr.rank() < design.cols();
    fit.coefficients = qr.solve(rhs);
    fit.constant = fit.coefficients.row(0).transpose();
    return fit;
}

Vec evaluate(const LocalFit& fit, int degree, const Vec& z) {
    const auto terms = monomials(static_cast<int>(fit.center.size()), degree);
    if (static_cast<Eigen::Index>(terms.size()) != fit.coefficients.rows()) {
        throw DimensionError("fit does not have the requested degree");
    }
    const Vec offset = z - fit.center;
    Vec out = Vec::Zero(fit.coefficients.cols());
    for (std::size_t t = 0; t < terms.size(); ++t) {
        out += monomial_value(terms[t], offset) * fit.coefficients.row(static_cast<Eigen::Index>(t)).transpose();
    }
    return out;
}

RegressionDecoder::RegressionDecoder(approx::PouGrid grid, std::vector<LocalFit> fits, int degree)
    : grid_(grid), fits_(std::move(fits)), degree_(degree) {
    grid_.validate();
    if (fits_.size() != grid_.size()) throw DimensionError("one local fit per grid point is required");
}

int RegressionDecoder::output_dim() const {
    return fits_.empty() ? 0 : static_cast<int>(fits_.front().constant.size());
}

std::vector<std::size_t> RegressionDecoder::active(const Vec& z) const {
    if (z.size() != grid_.dim) throw DimensionError("point dimension does not match the grid");
    const int N = grid_.resolution;
    // Per coordinate at most two grid indices can have psi > 0.
    std::vector<std::vector<int>> cand(static_cast<std::size_t>(grid_.dim));
    for (int k = 0; k < grid_.dim; ++k) {
        const int base = static_cast<int>(std::floor(z(k) * N));
        for (int m : {base, base + 1}) {
            if (m < 0 || m > N) continue;
            if (approx::psi(3.0 * N * (z(k) - static_cast<double>(m) / N)) > 0.0) {
                cand[static_cast<std::size_t>(k)].push_back(m);
            }
        }
    }
    std::vector<std::size_t> out{0};
    std::size_t stride = 1;
    for (int k = 0; k < grid_.dim; ++k) {
        std::vector<std::size_t> next;
        for (std::size_t base : out) {
            for (int m : cand[static_cast<std::size_t>(k)]) next.push_back(base + stride * static_cast<std::size_t>(m));
        }
        out = std::move(next);
        stride *= static_cast<std::size_t>(N + 1);
    }
    return out;
}

Vec RegressionDecoder::evaluate(const Vec& z) const {
    Vec out = Vec::Zero(output_dim());
    for (std::size_t i : active(z)) {
        out += approx::pou_eval(grid_, grid_.index(i), z) * fits_[i].constant;
    }
    return out;
}

Mat RegressionDecoder::evaluate_rows(const Mat& latent) const {
    Mat out(latent.rows(), output_dim());
    for (Eigen::Index r = 0; r < latent.rows(); ++r) out.row(r) = evaluate(latent.row(r).transpose()).transpose();
    return out;
}

int coupled_resolution(std::size_t n, int smoothness, int dim) {
    if (n == 0) throw ConfigError("sample count must be positive");
    const double N = std::round(std::pow(static_cast<double>(n), 1.0 / (2.0 * smoothness + dim)));
    return std::max(1, static_cast<int>(N));
}

RegressionDecoder build_regression_decoder(const Mat& latent, const Mat& values, const RegressionSpec& spec) {
    if (spec.smoothness < 1) throw ConfigError("smoothness k must be >= 1");
    if (latent.rows() == 0) throw ConfigError("no samples");
    if (latent.rows() != values.rows()) throw DimensionError("latent and value rows differ");
    const int d = static_cast<int>(latent.cols());
    approx::PouGrid grid{d, spec.grid_resolution > 0
                                ? spec.grid_resolution
                                : coupled_resolution(static_cast<std::size_t>(latent.rows()), spec.smoothness, d)};
    grid.validate();
    const double radius = spec.radius > 0.0 ? spec.radius : 1.0 / grid.resolution;
    std::vector<LocalFit> fits(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        try {
            fits[i] = local_polyfit(latent, values, grid.center(i), radius, spec.degree(), spec.fit);
        } catch (const DomainError& e) {
            std::string name;
            for (int m : grid.index(i)) name += (name.empty() ? "" : ",") + std::to_string(m);
            throw DomainError("grid point m = (" + name + "): " + e.what());
        }
    });
    return RegressionDecoder(grid, std::move(fits), spec.degree());
}

namespace {

Mat probe_grid(int dim, int per_dim) {
    std::size_t count = 1;
    for (int k = 0; k < dim; ++k) count *= static_cast<std::size_t>(per_dim);
    Mat probes(static_cast<Eigen::Index>(count), dim);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t rest = i;
        for (int k = 0; k < dim; ++k) {
            probes(static_cast<Eigen::Index>(i), k) =
                static_cast<double>(rest % static_cast<std::size_t>(per_dim)) / (per_dim - 1);
            rest /= static_cast<std::size_t>(per_dim);
        }
    }
    return probes;
}

double slope(const std::vector<ConvergenceRow>& rows, std::size_t count) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < count; ++i) {
        mx += std::log(static_cast<double>(rows[i].n));
        my += std::log(rows[i].sup_error);
    }
    mx /= static_cast<double>(count);
    my /= static_cast<double>(count);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const double dx = std::log(static_cast<double>(rows[i].n)) - mx;
        sxy += dx * (std::log(rows[i].sup_error) - my);
        sxx += dx * dx;
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

} // namespace

std::vector<ConvergenceRow> convergence_experiment(const Function& f, int dim, int out_dim,
                                                   const std::vector<std::size_t>& n_list,
                                                   const ConvergenceOptions& options) {
    if (options.probes_per_dim < 2) throw ConfigError("need at least two probes per dimension");
    if (options.repetitions < 1) throw ConfigError("repetitions must be positive");
    if (!(options.noise >= 0.0)) throw ConfigError("noise must be >= 0");
    const Mat probes = probe_grid(dim, options.probes_per_dim);
    Mat truth(probes.rows(), out_dim);
    for (Eigen::Index r = 0; r < probes.rows(); ++r) {
        const Vec y = f(probes.row(r).transpose());
        if (y.size() != out_dim) throw DimensionError("function output has the wrong dimension");
        truth.row(r) = y.transpose();
    }
    std::vector<ConvergenceRow> rows;
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        const std::size_t n = n_list[i];
        RegressionSpec spec;
        spec.smoothness = options.smoothness;
        std::vector<double> errors;
        for (int rep = 0; rep < options.repetitions; ++rep) {
            std::mt19937_64 rng(options.seed + 7919 * i + 104729 * static_cast<std::uint64_t>(rep));
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::normal_distribution<double> gauss(0.0, 1.0);
            Mat latent(static_cast<Eigen::Index>(n), dim), values(static_cast<Eigen::Index>(n), out_dim);
            for (Eigen::Index r = 0; r < latent.rows(); ++r) {
                for (int k = 0; k < dim; ++k) latent(r, k) = unif(rng);
                values.row(r) = f(latent.row(r).transpose()).transpose();
                if (options.noise > 0.0) {
                    for (int c = 0; c < out_dim; ++c) values(r, c) += options.noise * gauss(rng);
                }
            }
            const auto decoder = build_regression_decoder(latent, values, spec);
            const Mat est = decoder.evaluate_rows(probes);
            errors.push_back((est - truth).rowwise().norm().maxCoeff());
        }
        std::nth_element(errors.begin(), errors.begin() + static_cast<std::ptrdiff_t>(errors.size() / 2),
                         errors.end());
        ConvergenceRow row;
        row.n = n;
        row.grid_resolution = coupled_resolution(n, options.smoothness, dim);
        row.sup_error = errors[errors.size() / 2];
        rows.push_back(row);
        rows.back().slope_so_far = rows.size() > 1 ? slope(rows, rows.size()) : 0.0;
    }
    return rows;
}

double loglog_slope(const std::vector<ConvergenceRow>& rows) {
    if (rows.size() < 2) throw ConfigError("a slope needs at least two rows");
    return slope(rows, rows.size());
}

void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows) {
    out << "n,N,sup_error,slope_so_far\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.n << ',' << r.grid_resolution << ',' << r.sup_error << ',' << r.slope_so_far << '\n';
}

} // namespace atlas::regression
