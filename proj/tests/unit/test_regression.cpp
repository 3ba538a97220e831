#include <cmath>
#include <random>
#include <sstream>

#include "atlas/errors.hpp"
#include "atlas/regression/local_regression.hpp"
#include "doctest.h"

using namespace atlas;
using regression::Mat;
using regression::Vec;

namespace {

Mat uniform_rows(int n, int d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mat z(n, d);
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = u(rng);
    return z;
}

long binomial(int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

TEST_CASE("monomial basis") {
    for (int d = 1; d <= 3; ++d) {
        for (int k = 0; k <= 3; ++k) {
            const auto m = regression::monomials(d, k);
            CHECK(static_cast<long>(m.size()) == binomial(d + k, k));
            CHECK(m.front() == std::vector<int>(static_cast<std::size_t>(d), 0));
            int prev = 0;
            for (const auto& e : m) {
                int total = 0;
                for (int v : e) total += v;
                CHECK(total >= prev);
                CHECK(total <= k);
                prev = total;
            }
        }
    }
    CHECK_THROWS_AS(regression::monomials(0, 1), ConfigError);
}

TEST_CASE("local fits reproduce polynomials") {
    std::mt19937_64 rng(1);
    const Mat z = uniform_rows(400, 2, rng);
    Mat x(400, 2);
    for (Eigen::Index j = 0; j < 400; ++j) {
        x.row(j) << 1.0 + 2.0 * z(j, 0) - z(j, 1), -0.5 + 0.3 * z(j, 1);
    }
    const Vec c{{0.4, 0.6}};
    const auto fit = regression::local_polyfit(z, x, c, 0.3, 1);
    CHECK(!fit.degenerate);
    CHECK(std::abs(fit.constant(0) - (1.0 + 0.8 - 0.6)) <= 1e-10);
    CHECK(std::abs(fit.constant(1) - (-0.5 + 0.18)) <= 1e-10);
    for (Eigen::Index j = 0; j < 400; ++j) {
        if ((z.row(j).transpose() - c).norm() <= 0.3) {
            CHECK((regression::evaluate(fit, 1, z.row(j).transpose()) - x.row(j).transpose()).norm() <= 1e-10);
        }
    }

    Mat one(1, 1), val(1, 1);
    one << 0.5;
    val << 3.25;
    const auto single = regression::local_polyfit(one, val, Vec{{0.5}}, 0.1, 0);
    CHECK(single.neighborhood == 1);
    CHECK(single.constant(0) == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("quadratic fit matches the normal equations") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.1);
    const Mat z = uniform_rows(300, 2, rng);
    Mat x(300, 1);
    for (Eigen::Index j = 0; j < 300; ++j) x(j, 0) = std::sin(3.0 * z(j, 0)) * std::cos(2.0 * z(j, 1)) + g(rng);
    const Vec c{{0.5, 0.5}};
    const double radius = 0.35;
    const auto fit = regression::local_polyfit(z, x, c, radius, 2);
    const auto terms = regression::monomials(2, 2);

    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    LMat gram = LMat::Zero(6, 6), rhs = LMat::Zero(6, 1);
    for (Eigen::Index j = 0; j < 300; ++j) {
        const Vec off = z.row(j).transpose() - c;
        if (off.norm() > radius) continue;
        Eigen::Matrix<long double, 6, 1> row;
        for (std::size_t t = 0; t < terms.size(); ++t) {
            long double v = 1.0L;
            for (int k = 0; k < 2; ++k) {
                for (int p = 0; p < terms[t][static_cast<std::size_t>(k)]; ++p) v *= off(k);
            }
            row(static_cast<Eigen::Index>(t)) = v;
        }
        gram += row * row.transpose();
        rhs += row * static_cast<long double>(x(j, 0));
    }
    const LMat oracle = gram.ldlt().solve(rhs);
    for (Eigen::Index t = 0; t < 6; ++t) {
        CHECK(std::abs(static_cast<double>(oracle(t, 0)) - fit.coefficients(t, 0)) <= 1e-8);
    }

    // Shifting all latents and the center leaves the fit unchanged.
    const Mat shifted = (z.array() + 0.25).matrix();
    const auto moved = regression::local_polyfit(shifted, x, (c.array() + 0.25).matrix(), radius, 2);
    CHECK((moved.coefficients - fit.coefficients).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("radius fallback and degenerate designs") {
    Mat z(4, 1), x(4, 1);
    z << 0.0, 0.05, 0.9, 1.0;
    x << 1.0, 2.0, 3.0, 4.0;
    const auto fit = regression::local_polyfit(z, x, Vec{{0.5}}, 0.1, 1);
    CHECK(fit.radius == doctest::Approx(0.8));
    CHECK(fit.neighborhood == 4);  // radius 0.4 reaches only 0.9

    Mat same = Mat::Constant(5, 1, 0.3);
    const auto flat = regression::local_polyfit(same, Mat::Ones(5, 1), Vec{{0.3}}, 0.1, 1);
    CHECK(flat.degenerate);
    CHECK(flat.constant(0) == doctest::Approx(1.0));

    CHECK_THROWS_AS(regression::local_polyfit(z, x, Vec{{0.5}}, 0.01, 1, {1, 0}), DomainError);
    CHECK_THROWS_AS(regression::local_polyfit(z, x, Vec{{0.5, 0.5}}, 0.1, 1), DimensionError);
}

TEST_CASE("regression decoder") {
    std::mt19937_64 rng(3);
    const Mat z = uniform_rows(3000, 2, rng);
    SUBCASE("constant data is reproduced") {
        Mat x(3000, 3);
        x.rowwise() = Eigen::RowVector3d(0.1, -2.0, 5.0);
        regression::RegressionSpec spec;
        spec.grid_resolution = 5;
        const auto dec = regression::build_regression_decoder(z, x, spec);
        CHECK(dec.output_dim() == 3);
        for (int s = 0; s < 200; ++s) {
            const Vec p = uniform_rows(1, 2, rng).row(0).transpose();
            CHECK((dec.evaluate(p) - x.row(0).transpose()).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(dec.active(p).size() <= 4);
        }
    }
    SUBCASE("continuous across support boundaries") {
        Mat x(3000, 1);
        for (Eigen::Index j = 0; j < 3000; ++j) x(j, 0) = std::sin(4.0 * z(j, 0)) + z(j, 1);
        regression::RegressionSpec spec;
        spec.grid_resolution = 4;
        const auto dec = regression::build_regression_decoder(z, x, spec);
        // The support of phi_1 along the first axis ends at 1/4 + 2/12.
        const double edge = 0.25 + 2.0 / 12.0;
        for (double y : {0.1, 0.5, 0.83}) {
            const double left = dec.evaluate(Vec{{edge - 1e-9, y}})(0);
            const double right = dec.evaluate(Vec{{edge + 1e-9, y}})(0);
            CHECK(std::abs(left - right) <= 1e-6);
        }
        const Mat rows = dec.evaluate_rows(z.topRows(5));
        for (Eigen::Index j = 0; j < 5; ++j) CHECK(rows(j, 0) == dec.evaluate(z.row(j).transpose())(0));
    }
}

TEST_CASE("empty neighbourhood names the grid point") {
    Mat z(50, 2), x(50, 1);
    for (Eigen::Index j = 0; j < 50; ++j) z.row(j) << 0.01 * (j % 7), 0.01 * (j % 5);
    x.setOnes();
    regression::RegressionSpec spec;
    spec.grid_resolution = 4;
    spec.fit.max_doublings = 0;
    try {
        regression::build_regression_decoder(z, x, spec);
        FAIL("expected a domain error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("grid point") != std::string::npos);
    }
}

TEST_CASE("coupled resolution and convergence table") {
    CHECK(regression::coupled_resolution(1000, 2, 1) == 4);   // 1000^(1/5) = 3.98
    CHECK(regression::coupled_resolution(10000, 2, 2) == 5);  // 10000^(1/6) = 4.64
    CHECK(regression::coupled_resolution(1, 2, 1) == 1);

    const auto f = [](const Vec& t) { return Vec{{std::cos(t(0)), std::sin(t(0))}}; };
    regression::ConvergenceOptions opts;
    opts.noise = 0.01;
    opts.probes_per_dim = 200;
    const auto rows = regression::convergence_experiment(f, 1, 2, {500, 2000}, opts);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].slope_so_far == 0.0);
    CHECK(rows[1].slope_so_far == doctest::Approx(regression::loglog_slope(rows)));
    CHECK(rows[1].grid_resolution == regression::coupled_resolution(2000, 2, 1));
    std::ostringstream out;
    regression::write_convergence_csv(out, rows);
    CHECK(out.str().rfind("n,N,sup_error,slope_so_far\n", 0) == 0);
    const auto again = regression::convergence_experiment(f, 1, 2, {500, 2000}, opts);
    CHECK(again[1].sup_error == rows[1].sup_error);
}
