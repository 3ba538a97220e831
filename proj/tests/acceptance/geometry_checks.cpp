#include <cmath>
#include <numbers>

#include "atlas/data/generators.hpp"
#include "atlas/geometry/geometry.hpp"
#include "checks.hpp"

namespace acceptance {

using namespace atlas;
constexpr double pi = std::numbers::pi;

namespace {

// Chart U1 of the three-arc circle cover, extended by eps on each side.
geometry::Points arc_u1(double eps, int n) { return data::gen_circle_arc(-pi / 3 - eps, pi / 3 + eps, n).points; }

} // namespace

Outcome arc_projection() {
    const auto arc = arc_u1(0.01, 2000);
    const auto report = geometry::check_projection_bound(arc, 1, 0.25);
    const auto full = data::gen_circle_arc(0.0, 2 * pi, 2000).points;
    const auto full_dist = geometry::measure_distortion(full, geometry::fit_affine(full, 1));
    const double reach = report.reach.infinite ? INFINITY : report.reach.value;
    Outcome o;
    o.pass = std::abs(reach - 1.0) <= 0.05 && report.hypothesis_holds && report.measured.lower >= 1.0 / 3.0 &&
             !full_dist.injective;
    o.detail = format("reach %.5f, hypothesis %s, lower %.4f (>= 1/3), full circle injective %s", reach,
                      report.hypothesis_holds ? "holds" : "fails", report.measured.lower,
                      full_dist.injective ? "true" : "false");
    return o;
}

Outcome triangle_projection() {
    const auto u2 = data::gen_triangle2chart(1000).second.points;
    const auto dist = geometry::measure_distortion(u2, geometry::coordinate_plane(2, {0}));
    const auto report = geometry::check_projection_bound(u2, 1, 0.25);
    const double reach = report.reach.infinite ? INFINITY : report.reach.value;
    Outcome o;
    o.pass = dist.injective && std::abs(dist.lower - 1.0 / std::sqrt(2.0)) <= 0.02 && !report.hypothesis_holds &&
             reach < 0.05;
    o.detail = format("x-axis injective %s, lower %.4f (1/sqrt2 +- 0.02), reach %.4g, hypothesis %s",
                      dist.injective ? "true" : "false", dist.lower, reach,
                      report.hypothesis_holds ? "holds" : "fails");
    return o;
}

Outcome gauss_map_feasibility() {
    const auto arc = geometry::halfspace_certificate(geometry::estimate_normals(arc_u1(0.01, 2000)));
    const auto full = geometry::halfspace_certificate(
        geometry::estimate_normals(data::gen_circle_arc(0.0, 2 * pi, 2000).points));
    const auto tri = geometry::halfspace_certificate(
        geometry::estimate_normals(data::gen_triangle2chart(1000).second.points));
    Outcome o;
    o.pass = arc.feasible && std::abs(arc.margin - 0.5) <= 0.05 && !full.feasible && full.min_norm <= 1e-3 &&
             tri.feasible && std::abs(tri.margin - std::sqrt(0.5)) <= 0.02;
    o.detail = format("arc margin %.4f, full circle min-norm %.2e (%s), triangle margin %.4f", arc.margin,
                      full.min_norm, full.feasible ? "feasible" : "infeasible", tri.margin);
    return o;
}

} // namespace acceptance
