#include "atlas/data/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "atlas/errors.hpp"

namespace atlas::data {

namespace {

constexpr double pi = std::numbers::pi;

void require_positive(int n) {
    if (n <= 0) {
        throw ConfigError("dataset size must be positive");
    }
}

void add_noise(Eigen::MatrixXd& pts, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) {
        return;
    }
    std::normal_distribution<double> gauss(0.0, sigma);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        for (Eigen::Index k = 0; k < pts.cols(); ++k) {
            pts(i, k) += gauss(rng);
        }
    }
}

std::vector<bool> exact_mask(int n, double fraction, std::mt19937_64& rng) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw ConfigError("label_fraction must lie in [0, 1]");
    }
    const auto count = static_cast<std::size_t>(std::llround(fraction * n));
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> mask(static_cast<std::size_t>(n), false);
    for (std::size_t k = 0; k < count; ++k) {
        mask[order[k]] = true;
    }
    return mask;
}

} // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::swiss_roll: return "swiss_roll";
    case DatasetKind::triangles: return "triangles";
    case DatasetKind::gaussians9: return "gaussians9";
    case DatasetKind::circles3: return "circles3";
    case DatasetKind::circle_arc: return "circle_arc";
    case DatasetKind::triangle2chart: return "triangle2chart";
    }
    return "gaussians9";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
    for (auto k : {DatasetKind::swiss_roll, DatasetKind::triangles, DatasetKind::gaussians9, DatasetKind::circles3,
                   DatasetKind::circle_arc, DatasetKind::triangle2chart}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown dataset kind '" + name + "'");
}

double swiss_roll_function(double t) { return (t - 3.0 * pi) / pi; }

PointCloud gen_swiss_roll(int n, std::uint64_t seed, double height, double noise, double label_fraction) {
    require_positive(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(1.5 * pi, 4.5 * pi);
    std::uniform_real_distribution<double> uh(0.0, height);
    PointCloud cloud;
    cloud.points.resize(n, 3);
    cloud.function_values.emplace(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double t = ut(rng);
        const double h = uh(rng);
        cloud.points.row(i) << t * std::cos(t), h, t * std::sin(t);
        (*cloud.function_values)[static_cast<std::size_t>(i)] = swiss_roll_function(t);
    }
    add_noise(cloud.points, noise, rng);
    cloud.labeled = exact_mask(n, label_fraction, rng);
    return cloud;
}

PointCloud gen_triangles(int n, double separation, std::uint64_t seed, double noise) {
    require_positive(n);
    if (separation <= 0.0) {
        throw ConfigError("triangle separation must be positive");
    }
    const double h = std::sqrt(3.0) / 2.0;
    const Eigen::Vector2d verts[3] = {{0.0, 0.0}, {1.0, 0.0}, {0.5, h}};
    const Eigen::Vector2d shift(1.0 + separation, 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    PointCloud cloud;
    cloud.points.resize(n, 2);
    cloud.component_ids.emplace(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int comp = i % 2;
        const double s = u(rng);
        const int side = std::min(2, static_cast<int>(s));
        const double frac = s - side;
        Eigen::Vector2d p = (1.0 - frac) * verts[side] + frac * verts[(side + 1) % 3];
        if (comp == 1) {
            p += shift;
        }
        cloud.points.row(i) = p.transpose();
        (*cloud.component_ids)[static_cast<std::size_t>(i)] = comp;
    }
    add_noise(cloud.points, noise, rng);
    cloud.labeled.assign(static_cast<std::size_t>(n), false);
    return cloud;
}

Eigen::MatrixXd gaussians9_centers(double grid_spacing) {
    Eigen::MatrixXd c(9, 2);
    for (int k = 0; k < 9; ++k) {
        c(k, 0) = (k % 3 - 1) * grid_spacing;
        c(k, 1) = (k / 3 - 1) * grid_spacing;
    }
    return c;
}

PointCloud gen_gaussians9(int n, double grid_spacing, double sigma, std::uint64_t seed) {
    require_positive(n);
    if (grid_spacing <= 0.0 || sigma <= 0.0) {
        throw ConfigError("gaussians9 needs positive spacing and sigma");
    }
    const auto centers = gaussians9_centers(grid_spacing);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    PointCloud cloud;
    cloud.points.resize(n, 2);
    cloud.component_ids.emplace(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % 9;
        cloud.points(i, 0) = centers(k, 0) + gauss(rng);
        cloud.points(i, 1) = centers(k, 1) + gauss(rng);
        (*cloud.component_ids)[static_cast<std::size_t>(i)] = k;
    }
    cloud.labeled.assign(static_cast<std::size_t>(n), false);
    return cloud;
}

Eigen::MatrixXd circles3_centers() {
    const double side = 1.2;
    const double r = side / std::sqrt(3.0);
    Eigen::MatrixXd c(3, 2);
    for (int k = 0; k < 3; ++k) {
        const double a = pi / 2.0 + 2.0 * pi * k / 3.0;
        c(k, 0) = r * std::cos(a);
        c(k, 1) = r * std::sin(a);
    }
    return c;
}

PointCloud gen_circles3(int n, double label_fraction, std::uint64_t seed, double noise) {
    require_positive(n);
    const auto centers = circles3_centers();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ua(0.0, 2.0 * pi);
    PointCloud cloud;
    cloud.points.resize(n, 2);
    cloud.labels.emplace(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % 3;
        const double a = ua(rng);
        cloud.points(i, 0) = centers(k, 0) + circles3_radius * std::cos(a);
        cloud.points(i, 1) = centers(k, 1) + circles3_radius * std::sin(a);
        (*cloud.labels)[static_cast<std::size_t>(i)] = k;
    }
    add_noise(cloud.points, noise, rng);
    cloud.labeled = exact_mask(n, label_fraction, rng);
    return cloud;
}

PointCloud gen_circle_arc(double theta_min, double theta_max, int n) {
    require_positive(n);
    if (!(theta_max > theta_min)) {
        throw ConfigError("arc needs theta_max > theta_min");
    }
    PointCloud cloud;
    cloud.points.resize(n, 2);
    const double step = (theta_max - theta_min) / n;
    for (int i = 0; i < n; ++i) {
        const double t = theta_min + (i + 0.5) * step;
        cloud.points(i, 0) = std::cos(t);
        cloud.points(i, 1) = std::sin(t);
    }
    cloud.labeled.assign(static_cast<std::size_t>(n), false);
    return cloud;
}

std::pair<PointCloud, PointCloud> gen_triangle2chart(int n) {
    if (n < 3) {
        throw ConfigError("triangle2chart needs n >= 3");
    }
    const int m = std::max(1, n / 2);
    PointCloud base;
    base.points.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        base.points(i, 0) = -1.0 + 2.0 * i / (n - 1);
        base.points(i, 1) = 0.0;
    }
    base.labeled.assign(static_cast<std::size_t>(n), false);

    PointCloud sides;
    sides.points.resize(2 * m + 1, 2);
    for (int i = 0; i <= m; ++i) {
        const double x = -1.0 + static_cast<double>(i) / m;
        sides.points(i, 0) = x;
        sides.points(i, 1) = x + 1.0;
    }
    for (int i = 1; i <= m; ++i) {
        const double x = static_cast<double>(i) / m;
        sides.points(m + i, 0) = x;
        sides.points(m + i, 1) = 1.0 - x;
    }
    sides.labeled.assign(static_cast<std::size_t>(2 * m + 1), false);
    return {std::move(base), std::move(sides)};
}

PointCloud generate(const DatasetSpec& spec) {
    switch (spec.kind) {
    case DatasetKind::swiss_roll:
        return gen_swiss_roll(spec.n, spec.seed, spec.roll_height, spec.noise, spec.label_fraction);
    case DatasetKind::triangles: return gen_triangles(spec.n, spec.separation, spec.seed, spec.noise);
    case DatasetKind::gaussians9: return gen_gaussians9(spec.n, spec.grid_spacing, spec.cluster_sigma, spec.seed);
    case DatasetKind::circles3: return gen_circles3(spec.n, spec.label_fraction, spec.seed, spec.noise);
    case DatasetKind::circle_arc: {
        auto cloud = gen_circle_arc(spec.theta_min, spec.theta_max, spec.n);
        std::mt19937_64 rng(spec.seed);
        add_noise(cloud.points, spec.noise, rng);
        return cloud;
    }
    case DatasetKind::triangle2chart: return gen_triangle2chart(spec.n).second;
    }
    throw ConfigError("unhandled dataset kind");
}

} // namespace atlas::data
