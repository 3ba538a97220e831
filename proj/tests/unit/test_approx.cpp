#include <cmath>
#include <random>

#include "atlas/approx/approx_nets.hpp"
#include "atlas/errors.hpp"
#include "doctest.h"

using namespace atlas;
using approx::Mat;
using approx::Vec;

namespace {

Vec uniform_point(int d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec x(d);
    for (int k = 0; k < d; ++k) x(k) = u(rng);
    return x;
}

} // namespace

TEST_CASE("trapezoid unit") {
    CHECK(approx::psi(0.5) == 1.0);
    CHECK(approx::psi(1.5) == 0.5);
    CHECK(approx::psi(-1.5) == 0.5);
    CHECK(approx::psi(3.0) == 0.0);
    CHECK(approx::psi(2.0) == 0.0);
    const auto net = approx::psi_net();
    const auto exact = approx::psi_net_zero_exact();
    CHECK(net.depth() == 2);
    CHECK(net.units() == 4);
    CHECK(exact.depth() == 3);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int s = 0; s < 1000; ++s) {
        const double x = u(rng);
        CHECK(std::abs(net.evaluate(Vec{{x}})(0) - approx::psi(x)) <= 1e-12);
        CHECK(std::abs(exact.evaluate(Vec{{x}})(0) - approx::psi(x)) <= 1e-12);
        if (std::abs(x) >= 2.0) CHECK(exact.evaluate(Vec{{x}})(0) == 0.0);
    }
}

TEST_CASE("grid partition of unity") {
    approx::PouGrid g{1, 2};
    CHECK(g.size() == 3);
    const Vec at = approx::pou_eval_all(g, Vec{{0.25}});
    CHECK(at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(at(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(at(2) == 0.0);

    std::mt19937_64 rng(2);
    for (int d = 1; d <= 3; ++d) {
        approx::PouGrid grid{d, 4};
        CHECK(grid.size() == static_cast<std::size_t>(std::pow(5, d)));
        for (std::size_t m = 0; m < grid.size(); ++m) {
            CHECK(approx::pou_eval(grid, grid.index(m), grid.center(m)) == 1.0);
        }
        for (int s = 0; s < 1000; ++s) {
            CHECK(std::abs(approx::pou_eval_all(grid, uniform_point(d, rng)).sum() - 1.0) <= 1e-12);
        }
    }
    approx::PouGrid g2{2, 3};
    CHECK(g2.index(1) == std::vector<int>{1, 0});
    CHECK(g2.index(4) == std::vector<int>{0, 1});
    CHECK(g2.center(5).isApprox(Vec{{1.0 / 3.0, 1.0 / 3.0}}));
    CHECK_THROWS((approx::PouGrid{0, 2}.validate()));
}

TEST_CASE("multiplication network") {
    const auto net = approx::mult_net(1.0, 1e-3);
    CHECK(std::abs(net.evaluate(Vec{{0.5, 0.5}})(0) - 0.25) <= 1e-3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int s = 0; s < 200; ++s) {
        const double y = u(rng);
        CHECK(net.evaluate(Vec{{0.0, y}})(0) == 0.0);
        CHECK(net.evaluate(Vec{{y, 0.0}})(0) == 0.0);
    }
    const double K = 2.5, delta = 1e-2;
    const auto wide = approx::mult_net(K, delta);
    const int stages = approx::mult_stages(K, delta);
    CHECK(2.0 * K * K * std::pow(2.0, -2.0 * stages - 2.0) <= delta);
    Mat grid(2, 200 * 200);
    for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 200; ++j) grid.col(i * 200 + j) << -K + 2.0 * K * i / 199.0, -K + 2.0 * K * j / 199.0;
    }
    const Mat out = wide.evaluate(grid);
    double worst = 0.0, gap = 0.0;
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
        worst = std::max(worst, std::abs(out(0, c) - grid(0, c) * grid(1, c)));
        gap = std::max(gap, std::abs(out(0, c) - approx::mult_approx(grid(0, c), grid(1, c), K, stages)));
    }
    CHECK(worst <= delta);
    CHECK(gap <= 1e-9);

    // Depth is affine in ln(1 / delta).
    Eigen::Matrix<double, 3, 2> design;
    Eigen::Vector3d depth;
    int r = 0;
    for (double d : {1e-2, 1e-3, 1e-4}) {
        design.row(r) << 1.0, std::log(1.0 / d);
        depth(r++) = approx::mult_net(1.0, d).depth();
    }
    const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(depth);
    CHECK(coef(1) > 0.0);
    CHECK(((design * coef - depth).array() / depth.array()).abs().maxCoeff() < 0.2);
}

TEST_CASE("composition and stacking") {
    const auto a = approx::affine_network(Mat{{2.0}}, Vec{{-1.0}});
    const auto inner = approx::psi_net();
    const auto c = approx::compose(a, inner);
    CHECK(c.depth() == inner.depth());
    CHECK(c.evaluate(Vec{{1.5}})(0) == doctest::Approx(0.0));
    const auto padded = approx::pad_to_depth(inner, 5);
    CHECK(padded.depth() == 5);
    const auto cc = approx::compose(inner, inner);
    CHECK(cc.depth() == 3);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int s = 0; s < 100; ++s) {
        const double x = u(rng);
        CHECK(std::abs(padded.evaluate(Vec{{x}})(0) - approx::psi(x)) <= 1e-12);
        CHECK(std::abs(cc.evaluate(Vec{{x}})(0) - approx::psi(approx::psi(x))) <= 1e-12);
    }
    const auto shared = approx::stack_shared_input({inner, padded});
    CHECK(shared.output_dim() == 2);
    const auto disjoint = approx::stack_disjoint({inner, approx::mult_net(1.0, 1e-2)});
    CHECK(disjoint.input_dim() == 3);
    const Vec y = disjoint.evaluate(Vec{{1.5, 0.0, 0.7}});
    CHECK(y(0) == doctest::Approx(0.5));
    CHECK(y(1) == 0.0);
}

TEST_CASE("partition network") {
    SUBCASE("one dimension is exact") {
        const approx::PouGrid grid{1, 5};
        const auto net = approx::build_pou_net(grid, 1e-3);
        std::mt19937_64 rng(5);
        for (int s = 0; s < 300; ++s) {
            const Vec x = uniform_point(1, rng);
            CHECK((net.evaluate(x) - approx::pou_eval_all(grid, x)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
    SUBCASE("two dimensions within d delta and exact zeros") {
        const approx::PouGrid grid{2, 3};
        const auto net = approx::build_pou_net(grid, 1e-3);
        std::mt19937_64 rng(6);
        double worst = 0.0;
        for (int s = 0; s < 400; ++s) {
            const Vec x = uniform_point(2, rng);
            const Vec approx_v = net.evaluate(x);
            const Vec exact = approx::pou_eval_all(grid, x);
            worst = std::max(worst, (approx_v - exact).cwiseAbs().maxCoeff());
            CHECK((approx_v - approx::pou_approx_eval(grid, 1e-3, x)).cwiseAbs().maxCoeff() <= 1e-9);
            for (Eigen::Index m = 0; m < exact.size(); ++m) {
                if (exact(m) == 0.0) CHECK(approx_v(m) == 0.0);
            }
        }
        CHECK(worst <= 2e-3);
    }
}

TEST_CASE("decoder network") {
    const auto identity = [](const Vec& z) { return z; };
    const auto net = approx::build_decoder_net(identity, 1, 1, 1.0, 1.0, 0.1);
    const int N = net.budget.grid_resolution;
    CHECK(N > 4.0 * 1.0 / 0.1);
    CHECK(net.network.final_matrix().rows() == 1);
    CHECK(net.network.final_matrix().cols() == N + 1);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double z = k / 9999.0;
        worst = std::max(worst, std::abs(net.network.evaluate(Vec{{z}})(0) - z));
    }
    CHECK(worst <= 0.1);

    const Vec c{{0.3, -0.7}};
    const auto constant = [&](const Vec&) { return c; };
    const auto flat = approx::build_decoder_net(constant, 2, 2, 0.0, 0.7, 0.1);
    std::mt19937_64 rng(7);
    for (int s = 0; s < 200; ++s) {
        const Vec z = uniform_point(2, rng);
        CHECK((flat.network.evaluate(z) - c).cwiseAbs().maxCoeff() <= 0.1);
        CHECK((approx::decoder_approx_eval(flat, constant, z) - c).cwiseAbs().maxCoeff() <= 0.1);
        // Through the generic dense network.
        const Vec dense = flat.network.to_dense_net().forward(Mat(z)).col(0);
        CHECK((dense - flat.network.evaluate(z)).cwiseAbs().maxCoeff() <= 1e-9);
    }
    const auto rep = approx::complexity_report(flat);
    CHECK(rep.final_rows == 2);
    CHECK(rep.final_cols == static_cast<int>(flat.grid.size()));
    CHECK(rep.units == flat.network.units());
    CHECK_THROWS_AS(approx::build_decoder_net(identity, 1, 1, 1.0, 1.0, 1.5), ConfigError);
}

TEST_CASE("budget") {
    const auto b = approx::ApproxBudget::make(2, 1.5, 2.0, 0.1);
    CHECK(b.grid_resolution > 8.0 * 1.5 * std::sqrt(2.0) / 0.1);
    CHECK(b.grid_resolution - 1 <= 8.0 * 1.5 * std::sqrt(2.0) / 0.1);
    CHECK(b.mult_delta == doctest::Approx(0.1 / (8.0 * 2.0 * 2.0)));

    // Hidden units grow like eps^-1 ln(1/eps) in one dimension.
    const auto f = [](const Vec& z) { return Vec{{std::sin(z(0))}}; };
    auto shape = [](double e) { return std::log(1.0 / e) / e; };
    const double c = static_cast<double>(approx::build_decoder_net(f, 1, 1, 1.0, 1.0, 0.2).network.units()) / shape(0.2);
    for (double e : {0.1, 0.05}) {
        CHECK(static_cast<double>(approx::build_decoder_net(f, 1, 1, 1.0, 1.0, e).network.units()) <= 1.5 * c * shape(e));
    }
}

TEST_CASE("network json round trip") {
    const auto f = [](const Vec& z) { return Vec{{0.25 * z(0) * z(1), 0.25 * z(0)}}; };
    const auto net = approx::build_decoder_net(f, 2, 2, 0.5, 0.25, 0.5);
    const auto back = approx::relu_network_from_json(approx::to_json(net.network));
    CHECK(back.depth() == net.network.depth());
    std::mt19937_64 rng(8);
    for (int s = 0; s < 20; ++s) {
        const Vec z = uniform_point(2, rng);
        CHECK((back.evaluate(z).array() == net.network.evaluate(z).array()).all());
    }
    CHECK_THROWS(approx::relu_network_from_json(nlohmann::json::parse(R"({"layers": 3})")));
}
