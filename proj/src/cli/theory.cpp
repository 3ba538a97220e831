#include "atlas/cli/theory.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "atlas/approx/approx_nets.hpp"
#include "atlas/data/point_cloud.hpp"
#include "atlas/errors.hpp"
#include "atlas/geometry/geometry.hpp"
#include "atlas/regression/local_regression.hpp"

namespace atlas::cli {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

std::ofstream open_csv(const TheoryOptions& o, const std::string& name) {
    std::filesystem::create_directories(*o.out);
    std::ofstream out(*o.out / name);
    if (!out) throw IoError("cannot write " + (*o.out / name).string());
    out.precision(17);
    return out;
}

data::PointCloud input_cloud(const TheoryOptions& o) {
    if (o.input.empty()) return data::generate(o.dataset);
    if (!std::filesystem::exists(o.input)) throw IoError("point cloud not found: " + o.input);
    return data::load_csv(o.input);
}

Vec unit_circle(const Vec& z) {
    const double t = 2.0 * std::numbers::pi * z(0);
    return Vec{{std::sin(t), std::cos(t)}};
}

} // namespace

nlohmann::json theory_pou(const TheoryOptions& o) {
    const approx::PouGrid grid{o.dim, o.grid};
    grid.validate();
    if (o.points <= 0) throw ConfigError("need at least one probe point");
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Mat probes(o.dim, o.points);
    for (Eigen::Index k = 0; k < probes.size(); ++k) probes(k) = unif(rng);
    double sum_error = 0.0;
    Vec sums(o.points);
    for (int s = 0; s < o.points; ++s) {
        sums(s) = approx::pou_eval_all(grid, probes.col(s)).sum();
        sum_error = std::max(sum_error, std::abs(sums(s) - 1.0));
    }
    nlohmann::json j{{"command", "pou"}, {"d", o.dim}, {"grid", o.grid}, {"grid_points", grid.size()},
                     {"probe_points", o.points}, {"max_sum_error", sum_error}};
    if (o.dim <= approx::max_grid_dim) {
        const auto net = approx::build_pou_net(grid, o.delta);
        const Mat values = net.evaluate(probes);
        double net_error = 0.0;
        for (int s = 0; s < o.points; ++s) {
            net_error = std::max(net_error, (values.col(s) - approx::pou_eval_all(grid, probes.col(s))).cwiseAbs().maxCoeff());
        }
        j["network"] = approx::to_json(approx::complexity_report(net));
        j["network_max_error"] = net_error;
        j["mult_delta"] = o.delta;
    }
    if (o.out) {
        auto csv = open_csv(o, "pou_samples.csv");
        for (int k = 0; k < o.dim; ++k) csv << 'x' << (k + 1) << ',';
        csv << "sum\n";
        for (int s = 0; s < o.points; ++s) {
            for (int k = 0; k < o.dim; ++k) csv << probes(k, s) << ',';
            csv << sums(s) << '\n';
        }
    }
    return j;
}

nlohmann::json theory_mult(const TheoryOptions& o) {
    const auto net = approx::mult_net(o.bound, o.delta);
    const int side = 200;
    Mat grid(2, side * side);
    for (int i = 0; i < side; ++i) {
        for (int k = 0; k < side; ++k) {
            grid.col(i * side + k) << o.bound * (-1.0 + 2.0 * i / (side - 1)), o.bound * (-1.0 + 2.0 * k / (side - 1));
        }
    }
    const Mat out = net.evaluate(grid);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
        worst = std::max(worst, std::abs(out(0, c) - grid(0, c) * grid(1, c)));
    }
    bool zeros = true;
    for (int i = 0; i < side; ++i) {
        const double y = o.bound * (-1.0 + 2.0 * i / (side - 1));
        zeros = zeros && net.evaluate(Vec{{0.0, y}})(0) == 0.0 && net.evaluate(Vec{{y, 0.0}})(0) == 0.0;
    }
    nlohmann::json j{{"command", "mult"},      {"bound", o.bound},   {"delta", o.delta},
                     {"stages", approx::mult_stages(o.bound, o.delta)}, {"max_grid_error", worst},
                     {"exact_zero", zeros},    {"within_delta", worst <= o.delta},
                     {"network", approx::to_json(approx::complexity_report(net))}};
    if (o.out) {
        auto csv = open_csv(o, "mult_grid.csv");
        csv << "x,y,approx,exact\n";
        for (Eigen::Index c = 0; c < grid.cols(); ++c) {
            csv << grid(0, c) << ',' << grid(1, c) << ',' << out(0, c) << ',' << grid(0, c) * grid(1, c) << '\n';
        }
    }
    return j;
}

nlohmann::json theory_decoder_net(const TheoryOptions& o) {
    const double lipschitz = 2.0 * std::numbers::pi;
    const auto net = approx::build_decoder_net(unit_circle, 1, 2, lipschitz, 1.0, o.eps);
    const int probes = 10000;
    Mat x(1, probes);
    for (int s = 0; s < probes; ++s) x(0, s) = static_cast<double>(s) / (probes - 1);
    const Mat y = net.network.evaluate(x);
    double worst = 0.0;
    for (int s = 0; s < probes; ++s) worst = std::max(worst, (y.col(s) - unit_circle(x.col(s))).norm());
    nlohmann::json j{{"command", "decoder-net"}, {"target", "(sin 2 pi x, cos 2 pi x)"}, {"eps", o.eps},
                     {"lipschitz", lipschitz},  {"bound", 1.0},       {"sup_error", worst},
                     {"within_eps", worst <= o.eps}, {"network", approx::to_json(approx::complexity_report(net))}};
    if (o.out) {
        approx::save(*o.out / "network.json", net.network);
        auto csv = open_csv(o, "decoder_probe.csv");
        csv << "x,approx1,approx2,exact1,exact2\n";
        for (int s = 0; s < probes; s += 10) {
            const Vec f = unit_circle(x.col(s));
            csv << x(0, s) << ',' << y(0, s) << ',' << y(1, s) << ',' << f(0) << ',' << f(1) << '\n';
        }
    }
    return j;
}

nlohmann::json theory_regress(const TheoryOptions& o) {
    if (o.ambient < 2) throw ConfigError("regress needs an output dimension of at least 2");
    const int out_dim = o.ambient;
    // Circle embedding driven by the first latent coordinate.
    const auto f = [out_dim](const Vec& z) {
        Vec v = Vec::Zero(out_dim);
        const double t = 2.0 * std::numbers::pi * z(0);
        v(0) = std::cos(t);
        v(1) = std::sin(t);
        return v;
    };
    regression::ConvergenceOptions options;
    options.smoothness = o.degree + 1;
    options.noise = o.noise;
    options.seed = o.seed;
    options.repetitions = o.repetitions;
    options.probes_per_dim = o.dim == 1 ? 2000 : 60;
    if (o.dim < 1) throw ConfigError("latent dimension must be positive");
    const auto rows = regression::convergence_experiment(f, o.dim, out_dim, o.sizes, options);
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        table.push_back({{"n", r.n}, {"N", r.grid_resolution}, {"sup_error", r.sup_error}, {"slope_so_far", r.slope_so_far}});
    }
    nlohmann::json j{{"command", "regress"}, {"d", o.dim},         {"D", out_dim},   {"degree", o.degree},
                     {"noise", o.noise},     {"rows", table}};
    j["slope"] = rows.size() >= 2 ? nlohmann::json(regression::loglog_slope(rows)) : nlohmann::json(nullptr);
    j["theory_slope"] = -static_cast<double>(o.degree + 1) / (2.0 * (o.degree + 1) + o.dim);
    if (o.out) {
        auto csv = open_csv(o, "convergence.csv");
        regression::write_convergence_csv(csv, rows);
    }
    return j;
}

nlohmann::json theory_reach(const TheoryOptions& o) {
    const auto cloud = input_cloud(o);
    const auto reach = geometry::estimate_reach(cloud.points, o.dim, o.knn);
    return {{"command", "reach"},
            {"points", cloud.size()},
            {"d", o.dim},
            {"knn", o.knn},
            {"reach", reach.infinite ? nlohmann::json(nullptr) : nlohmann::json(reach.value)},
            {"reach_infinite", reach.infinite},
            {"diameter", geometry::diameter(cloud.points)}};
}

nlohmann::json theory_project(const TheoryOptions& o) {
    const auto cloud = input_cloud(o);
    geometry::ChartGeometryReport report;
    report.projection = geometry::check_projection_bound(cloud.points, o.dim, o.delta, o.knn);
    auto j = geometry::to_json(report);
    j["command"] = "project";
    j["points"] = cloud.size();
    if (o.out) {
        auto csv = open_csv(o, "projection.csv");
        const Mat coords = report.projection.plane.project(cloud.points);
        for (Eigen::Index k = 0; k < coords.cols(); ++k) csv << (k ? "," : "") << 'u' << (k + 1);
        csv << '\n';
        for (Eigen::Index r = 0; r < coords.rows(); ++r) {
            for (Eigen::Index k = 0; k < coords.cols(); ++k) csv << (k ? "," : "") << coords(r, k);
            csv << '\n';
        }
    }
    return j;
}

nlohmann::json theory_gaussmap(const TheoryOptions& o) {
    const auto cloud = input_cloud(o);
    if (cloud.dim() < 2) throw DimensionError("normals need an ambient dimension of at least 2");
    const Mat normals = geometry::estimate_normals(cloud.points, o.knn);
    const auto cert = geometry::halfspace_certificate(normals);
    nlohmann::json j{{"command", "gaussmap"}, {"label", "conjecture feasibility (checked, not proven)"},
                     {"points", cloud.size()}, {"knn", o.knn},
                     {"feasible", cert.feasible}, {"margin", cert.margin}, {"min_norm", cert.min_norm},
                     {"flipped", cert.flipped},
                     {"direction", std::vector<double>(cert.direction.data(), cert.direction.data() + cert.direction.size())}};
    if (o.out) {
        auto csv = open_csv(o, "normals.csv");
        for (Eigen::Index k = 0; k < normals.cols(); ++k) csv << (k ? "," : "") << 'n' << (k + 1);
        csv << '\n';
        for (Eigen::Index r = 0; r < normals.rows(); ++r) {
            for (Eigen::Index k = 0; k < normals.cols(); ++k) csv << (k ? "," : "") << normals(r, k);
            csv << '\n';
        }
    }
    return j;
}

nlohmann::json run_theory(const std::string& command, const TheoryOptions& options) {
    nlohmann::json j;
    if (command == "pou") j = theory_pou(options);
    else if (command == "mult") j = theory_mult(options);
    else if (command == "decoder-net") j = theory_decoder_net(options);
    else if (command == "regress") j = theory_regress(options);
    else if (command == "reach") j = theory_reach(options);
    else if (command == "project") j = theory_project(options);
    else if (command == "gaussmap") j = theory_gaussmap(options);
    else throw ConfigError("unknown theory command '" + command + "'");
    if (options.out) {
        std::filesystem::create_directories(*options.out);
        std::ofstream out(*options.out / "report.json");
        if (!out) throw IoError("cannot write " + (*options.out / "report.json").string());
        out << j.dump(2) << '\n';
    }
    return j;
}

} // namespace atlas::cli
