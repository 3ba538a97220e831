#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "atlas/data/generators.hpp"
#include "atlas/errors.hpp"
#include "doctest.h"

using namespace atlas;
using data::PointCloud;

namespace {

constexpr double pi = std::numbers::pi;

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

std::string to_csv(const PointCloud& cloud) {
    std::ostringstream out;
    data::write_csv(out, cloud);
    return out.str();
}

PointCloud from_csv(const std::string& text) {
    std::istringstream in(text);
    return data::read_csv(in);
}

} // namespace

TEST_CASE("swiss roll lies on its spiral") {
    const auto cloud = data::gen_swiss_roll(2000, 4, 10.0);
    REQUIRE(cloud.function_values);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        const double t = pi * (*cloud.function_values)[static_cast<std::size_t>(i)] + 3.0 * pi;
        CHECK(t >= 1.5 * pi);
        CHECK(t <= 4.5 * pi);
        const double x = cloud.points(i, 0), z = cloud.points(i, 2);
        CHECK(std::abs(x * x + z * z - t * t) <= 1e-9 * t * t);
        CHECK(std::abs(x - t * std::cos(t)) <= 1e-9);
        CHECK(cloud.points(i, 1) >= 0.0);
        CHECK(cloud.points(i, 1) <= 10.0);
    }
    CHECK(data::swiss_roll_function(1.5 * pi) == doctest::Approx(-1.5));
    CHECK(data::swiss_roll_function(4.5 * pi) == doctest::Approx(1.5));
}

TEST_CASE("triangles lie on their edges") {
    const double h = std::sqrt(3.0) / 2.0;
    const auto cloud = data::gen_triangles(600, 1.0, 3);
    REQUIRE(cloud.component_ids);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        const int comp = (*cloud.component_ids)[static_cast<std::size_t>(i)];
        const Eigen::Vector2d shift(comp == 1 ? 2.0 : 0.0, 0.0);
        const Eigen::Vector2d a = shift, b = shift + Eigen::Vector2d(1.0, 0.0), c = shift + Eigen::Vector2d(0.5, h);
        const Eigen::Vector2d p = cloud.points.row(i).transpose();
        const double dist = std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
        CHECK(dist <= 1e-12);
    }
    CHECK_THROWS_AS(data::gen_triangles(10, 0.0, 1), ConfigError);
}

TEST_CASE("nine gaussians cover every component") {
    const auto cloud = data::gen_gaussians9(900, 4.0, 0.3, 2);
    REQUIRE(cloud.component_ids);
    CHECK(std::set<int>(cloud.component_ids->begin(), cloud.component_ids->end()).size() == 9);
    const auto centers = data::gaussians9_centers(4.0);
    CHECK(centers.row(4).norm() == 0.0);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        const int k = (*cloud.component_ids)[static_cast<std::size_t>(i)];
        CHECK((cloud.points.row(i) - centers.row(k)).norm() < 6.0 * 0.3);
    }
}

TEST_CASE("circles lie on their circles") {
    const auto cloud = data::gen_circles3(900, 1.0, 2);
    const auto centers = data::circles3_centers();
    REQUIRE(cloud.labels);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        const int k = (*cloud.labels)[static_cast<std::size_t>(i)];
        CHECK(std::abs((cloud.points.row(i) - centers.row(k)).norm() - data::circles3_radius) <= 1e-12);
    }
    // Equilateral centers with side 1.2.
    CHECK((centers.row(0) - centers.row(1)).norm() == doctest::Approx(1.2));
    CHECK((centers.row(1) - centers.row(2)).norm() == doctest::Approx(1.2));
}

TEST_CASE("arc and two-chart triangle") {
    const auto arc = data::gen_circle_arc(-1.0, 1.0, 50);
    for (Eigen::Index i = 0; i < arc.points.rows(); ++i) {
        CHECK(std::abs(arc.points.row(i).norm() - 1.0) <= 1e-15);
        const double t = std::atan2(arc.points(i, 1), arc.points(i, 0));
        CHECK(t > -1.0);
        CHECK(t < 1.0);
    }
    CHECK_THROWS_AS(data::gen_circle_arc(1.0, 1.0, 5), ConfigError);

    const auto [base, sides] = data::gen_triangle2chart(40);
    CHECK(base.points.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(base.points(0, 0) == -1.0);
    CHECK(base.points(39, 0) == 1.0);
    bool apex = false;
    for (Eigen::Index i = 0; i < sides.points.rows(); ++i) {
        const double x = sides.points(i, 0), y = sides.points(i, 1);
        CHECK(std::abs(y - (1.0 - std::abs(x))) <= 1e-15);
        apex |= x == 0.0 && y == 1.0;
    }
    CHECK(apex);
    CHECK_THROWS_AS(data::gen_triangle2chart(2), ConfigError);
}

TEST_CASE("label fraction is exact") {
    for (double frac : {0.0, 0.1, 0.37, 1.0}) {
        const auto cloud = data::gen_circles3(1000, frac, 5);
        CHECK(cloud.labeled_count() == static_cast<std::size_t>(std::llround(frac * 1000)));
    }
    CHECK_THROWS_AS(data::gen_circles3(10, 1.5, 0), ConfigError);
    CHECK_THROWS_AS(data::gen_swiss_roll(0, 0), ConfigError);
}

TEST_CASE("generators are deterministic") {
    data::DatasetSpec spec;
    for (auto kind : {data::DatasetKind::swiss_roll, data::DatasetKind::triangles, data::DatasetKind::gaussians9,
                      data::DatasetKind::circles3, data::DatasetKind::circle_arc, data::DatasetKind::triangle2chart}) {
        spec.kind = kind;
        spec.n = 120;
        spec.seed = 17;
        spec.noise = 0.01;
        spec.label_fraction = 0.5;
        CHECK(to_csv(data::generate(spec)) == to_csv(data::generate(spec)));
        CHECK(data::dataset_kind_from_string(data::to_string(kind)) == kind);
        spec.seed = 18;
    }
    CHECK_THROWS_AS(data::dataset_kind_from_string("moons"), ConfigError);
}

TEST_CASE("csv round trip is bit exact") {
    const auto roll = data::gen_swiss_roll(200, 2, 10.0, 0.05, 0.3);
    const auto back = from_csv(to_csv(roll));
    CHECK((back.points.array() == roll.points.array()).all());
    CHECK(*back.function_values == *roll.function_values);
    CHECK(back.labeled == roll.labeled);
    CHECK(!back.labels);

    const auto circles = data::gen_circles3(90, 0.5, 1, 0.01);
    const auto c2 = from_csv(to_csv(circles));
    CHECK((c2.points.array() == circles.points.array()).all());
    CHECK(*c2.labels == *circles.labels);
    CHECK(c2.labeled == circles.labeled);

    const auto tri = data::gen_triangles(50, 1.0, 1);
    const auto t2 = from_csv(to_csv(tri));
    CHECK(*t2.component_ids == *tri.component_ids);
    CHECK(t2.labeled_count() == 0);
}

TEST_CASE("malformed csv reports the line") {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            from_csv(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("x1,x2\n1,2\n3,abc\n") == 3);
    CHECK(line_of("x1,x2\n1,2\n3\n") == 3);
    CHECK(line_of("x1,x2,labeled\n1,2,1\n1,2,2\n") == 3);
    CHECK(line_of("x1,y\n1,2\n") == 1);
    CHECK(line_of("") == 1);
    CHECK(line_of("x1,label\n0.5,1.5\n") == 2);
    CHECK_THROWS_AS(data::load_csv("/nonexistent/points.csv"), IoError);
}

TEST_CASE("validation and subsets") {
    auto cloud = data::gen_circles3(30, 1.0, 0);
    const auto sub = cloud.subset({0, 5, 7});
    CHECK(sub.size() == 3);
    CHECK((*sub.labels)[1] == (*cloud.labels)[5]);
    CHECK(sub.points.row(2) == cloud.points.row(7));
    cloud.labels->pop_back();
    CHECK_THROWS_AS(cloud.validate(), DimensionError);
}
