#include "atlas/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "atlas/errors.hpp"
#include "atlas/parallel.hpp"

namespace atlas::geometry {

namespace {

constexpr double flat_tol = 1e-9;

void require_points(const Points& points, Eigen::Index at_least, const char* what) {
    if (points.rows() < at_least) {
        throw DomainError(std::string(what) + " needs at least " + std::to_string(at_least) + " points, got " +
                          std::to_string(points.rows()));
    }
    if (!points.allFinite()) throw DomainError(std::string(what) + ": non-finite coordinates");
}

/// Indices of the k nearest other points, closest first.
std::vector<Eigen::Index> nearest(const Points& points, Eigen::Index p, int k) {
    const Eigen::VectorXd d2 = (points.rowwise() - points.row(p)).rowwise().squaredNorm();
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index q = 0; q < points.rows(); ++q) {
        if (q != p) idx.push_back(q);
    }
    const auto k_eff = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_eff), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return d2(a) < d2(b) || (d2(a) == d2(b) && a < b); });
    idx.resize(k_eff);
    return idx;
}

/// Left singular vectors of the centered neighborhood, descending.
Eigen::JacobiSVD<Eigen::MatrixXd> local_pca(const Points& points, Eigen::Index p,
                                            const std::vector<Eigen::Index>& nbrs) {
    Eigen::MatrixXd local(points.cols(), static_cast<Eigen::Index>(nbrs.size()) + 1);
    local.col(0) = points.row(p).transpose();
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
        local.col(static_cast<Eigen::Index>(j) + 1) = points.row(nbrs[j]).transpose();
    }
    const Eigen::VectorXd mean = local.rowwise().mean();
    local.colwise() -= mean;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(local, Eigen::ComputeFullU);
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

int quadratic_terms(int d) { return 1 + d + d * (d + 1) / 2; }

} // namespace

std::vector<Eigen::MatrixXd> estimate_tangents(const Points& points, int d, int k_nn) {
    const auto D = static_cast<int>(points.cols());
    if (d < 1 || d > D) throw DomainError("intrinsic dimension must lie in [1, D]");
    if (k_nn < d) throw DomainError("k_nn must be at least the intrinsic dimension");
    require_points(points, k_nn + 1, "tangent estimation");
    const int m = std::min<int>(std::max(k_nn, 2 * quadratic_terms(d)), static_cast<int>(points.rows()) - 1);
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(points.rows()));
    parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t pi) {
        const auto p = static_cast<Eigen::Index>(pi);
        const auto nbrs = nearest(points, p, m);
        const auto svd = local_pca(points, p, nbrs);
        const Eigen::VectorXd& sv = svd.singularValues();
        if (!(sv(0) > 0.0) || sv(d - 1) <= 1e-12 * sv(0)) {
            throw DomainError("degenerate local PCA at point " + std::to_string(p) + " (coincident points?)");
        }
        const Eigen::MatrixXd tangent = svd.matrixU().leftCols(d);
        if (d == D) {
            out[pi] = tangent;
            return;
        }
        const Eigen::MatrixXd normal = svd.matrixU().rightCols(D - d);
        // Fit normal coordinates as a quadratic in tangent coordinates around p;
        // the linear part tilts the PCA plane onto the true tangent.
        const auto rows = static_cast<Eigen::Index>(nbrs.size()) + 1;
        Eigen::MatrixXd design(rows, quadratic_terms(d));
        Eigen::MatrixXd rhs(rows, D - d);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Eigen::VectorXd v = (r == 0 ? points.row(p) : points.row(nbrs[static_cast<std::size_t>(r - 1)]))
                                          .transpose() -
                                      points.row(p).transpose();
            const Eigen::VectorXd t = tangent.transpose() * v;
            design(r, 0) = 1.0;
            design.block(r, 1, 1, d) = t.transpose();
            int c = 1 + d;
            for (int a = 0; a < d; ++a) {
                for (int b = a; b < d; ++b) design(r, c++) = t(a) * t(b);
            }
            rhs.row(r) = (normal.transpose() * v).transpose();
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() < design.cols()) {
            out[pi] = tangent;
            return;
        }
        const Eigen::MatrixXd coef = qr.solve(rhs);  // terms x (D - d)
        const Eigen::MatrixXd slope = coef.block(1, 0, d, D - d).transpose();
        out[pi] = orthonormalize(tangent + normal * slope);
    });
    return out;
}

Reach estimate_reach(const Points& points, int d, int k_nn) {
    const auto tangents = estimate_tangents(points, d, k_nn);
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<double> per_point(n, std::numeric_limits<double>::infinity());
    parallel_for(n, [&](std::size_t pi) {
        const auto p = static_cast<Eigen::Index>(pi);
        const Eigen::MatrixXd& basis = tangents[pi];
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index q = 0; q < points.rows(); ++q) {
            if (q == p) continue;
            const Eigen::VectorXd v = (points.row(q) - points.row(p)).transpose();
            const double perp = (v - basis * (basis.transpose() * v)).norm();
            if (perp <= flat_tol) continue;
            best = std::min(best, v.squaredNorm() / (2.0 * perp));
        }
        per_point[pi] = best;
    });
    const double value = *std::min_element(per_point.begin(), per_point.end());
    Reach r;
    if (std::isinf(value)) {
        r.infinite = true;
    } else {
        r.value = value;
    }
    return r;
}

double projection_bound(double reach, double delta, int ambient_dim, int latent_dim) {
    if (!(reach > 0.0)) throw DomainError("reach must be positive");
    if (!(delta > 0.0) || !(delta < 2.0 * reach)) throw DomainError("delta must lie in (0, 2 reach)");
    if (latent_dim < 0 || latent_dim > ambient_dim) throw DomainError("need 0 <= d <= D");
    return 1.0 / std::sqrt(1.0 + static_cast<double>(ambient_dim - latent_dim) * 2.0 * reach / delta);
}

Eigen::MatrixXd AffineSpace::project(const Points& points) const {
    if (points.cols() != origin.size()) throw DimensionError("point dimension does not match the plane");
    return (points.rowwise() - origin.transpose()) * basis;
}

AffineSpace fit_affine(const Points& points, int d) {
    if (d < 1 || d > points.cols()) throw DomainError("plane dimension must lie in [1, D]");
    require_points(points, d + 1, "fit_affine");
    AffineSpace h;
    h.origin = points.colwise().mean().transpose();
    const Eigen::MatrixXd centered = points.rowwise() - h.origin.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(d - 1) <= 1e-12 * sv(0)) {
        throw DomainError("covariance has rank below " + std::to_string(d));
    }
    h.basis = svd.matrixV().leftCols(d);
    return h;
}

AffineSpace coordinate_plane(int ambient_dim, const std::vector<int>& axes) {
    AffineSpace h;
    h.origin = Eigen::VectorXd::Zero(ambient_dim);
    h.basis = Eigen::MatrixXd::Zero(ambient_dim, static_cast<Eigen::Index>(axes.size()));
    for (std::size_t k = 0; k < axes.size(); ++k) {
        if (axes[k] < 0 || axes[k] >= ambient_dim) throw DimensionError("axis index out of range");
        h.basis(axes[k], static_cast<Eigen::Index>(k)) = 1.0;
    }
    if ((h.basis.rowwise().sum().array() > 1.0).any()) throw DomainError("coordinate axes must be distinct");
    return h;
}

double diameter(const Points& points) {
    double best = 0.0;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        best = std::max(best, (points.bottomRows(points.rows() - p).rowwise() - points.row(p)).rowwise().norm().maxCoeff());
    }
    return best;
}

Distortion measure_distortion(const Points& points, const AffineSpace& plane) {
    require_points(points, 2, "measure_distortion");
    const Eigen::MatrixXd proj = plane.project(points);
    const auto n = static_cast<std::size_t>(points.rows());
    const double diam = diameter(points);

    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    parallel_for(n, [&](std::size_t pi) {
        const auto p = static_cast<Eigen::Index>(pi);
        for (Eigen::Index q = 0; q < points.rows(); ++q) {
            if (q == p) continue;
            const double dist = (points.row(q) - points.row(p)).norm();
            if (dist > 0.0) nn[pi] = std::min(nn[pi], dist);
        }
    });
    Distortion out;
    out.resolution = 0.0;
    for (double v : nn) {
        if (std::isfinite(v)) out.resolution = std::max(out.resolution, v);
    }
    const double far = std::max(1e-3 * diam, 10.0 * out.resolution);

    std::vector<double> lo(n, std::numeric_limits<double>::infinity()), hi(n, 0.0);
    std::vector<char> folded(n, 0);
    parallel_for(n, [&](std::size_t pi) {
        const auto p = static_cast<Eigen::Index>(pi);
        for (Eigen::Index q = p + 1; q < points.rows(); ++q) {
            const double dist = (points.row(q) - points.row(p)).norm();
            if (dist == 0.0) continue;
            const double pdist = (proj.row(q) - proj.row(p)).norm();
            const double ratio = pdist / dist;
            lo[pi] = std::min(lo[pi], ratio);
            hi[pi] = std::max(hi[pi], ratio);
            if (dist > far && pdist < std::max(1e-6 * dist, out.resolution)) folded[pi] = 1;
        }
    });
    out.lower = *std::min_element(lo.begin(), lo.end());
    out.upper = *std::max_element(hi.begin(), hi.end());
    if (std::isinf(out.lower)) out.lower = 0.0;  // all points coincide
    out.injective = std::none_of(folded.begin(), folded.end(), [](char f) { return f != 0; });
    return out;
}

ProjectionBoundReport check_projection_bound(const Points& points, int d, double delta, int k_nn) {
    ProjectionBoundReport r;
    r.delta = delta;
    r.plane = fit_affine(points, d);
    r.reach = estimate_reach(points, d, k_nn);
    r.diameter = diameter(points);
    r.measured = measure_distortion(points, r.plane);
    const auto D = static_cast<int>(points.cols());
    if (r.reach.infinite) {
        r.hypothesis_holds = delta > 0.0;
        if (r.hypothesis_holds) r.bound = projection_bound(0.5 * (r.diameter + delta), delta, D, d);
    } else {
        r.hypothesis_holds = delta > 0.0 && r.diameter <= 2.0 * r.reach.value - delta;
        if (delta > 0.0 && delta < 2.0 * r.reach.value) r.bound = projection_bound(r.reach.value, delta, D, d);
    }
    r.satisfied = r.hypothesis_holds && r.bound && r.measured.lower >= *r.bound;
    return r;
}

Points estimate_normals(const Points& points, int k_nn) {
    const auto D = points.cols();
    if (D < 2) throw DomainError("normals need D >= 2");
    if (k_nn < 1) throw DomainError("k_nn must be positive");
    require_points(points, k_nn + 1, "estimate_normals");
    const auto n = static_cast<std::size_t>(points.rows());
    Points normals(points.rows(), D);
    std::vector<std::vector<Eigen::Index>> graph(n);
    const auto tangents = estimate_tangents(points, static_cast<int>(D) - 1, k_nn);
    parallel_for(n, [&](std::size_t pi) {
        const auto p = static_cast<Eigen::Index>(pi);
        graph[pi] = nearest(points, p, k_nn);
        const auto svd = local_pca(points, p, graph[pi]);
        const Eigen::VectorXd& sv = svd.singularValues();
        if (!(sv(0) > 0.0) || sv(D - 2) <= 1e-12 * sv(0)) {
            throw DomainError("degenerate local PCA at point " + std::to_string(p) + " (coincident points?)");
        }
        // Remove the component along the corrected tangent space.
        const Eigen::MatrixXd& t = tangents[pi];
        Eigen::VectorXd v = svd.matrixU().col(D - 1);
        v -= t * (t.transpose() * v);
        normals.row(p) = v.normalized().transpose();
    });
    std::vector<std::vector<Eigen::Index>> adj(n);
    for (std::size_t p = 0; p < n; ++p) {
        for (Eigen::Index q : graph[p]) {
            adj[p].push_back(q);
            adj[static_cast<std::size_t>(q)].push_back(static_cast<Eigen::Index>(p));
        }
    }
    std::vector<char> seen(n, 0);
    std::deque<std::size_t> queue{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (Eigen::Index qi : adj[u]) {
            const auto v = static_cast<std::size_t>(qi);
            if (seen[v]) continue;
            seen[v] = 1;
            ++reached;
            if (normals.row(qi).dot(normals.row(static_cast<Eigen::Index>(u))) < 0.0) normals.row(qi) *= -1.0;
            queue.push_back(v);
        }
    }
    if (reached != n) {
        throw DomainError("k-NN graph is disconnected (" + std::to_string(reached) + " of " + std::to_string(n) +
                          " points reached); orientation undefined");
    }
    return normals;
}

MinNormResult min_norm_point(const Points& rows, int max_iterations, double tol) {
    if (rows.rows() == 0) throw DomainError("min_norm_point needs at least one point");
    Eigen::Index start = 0;
    rows.rowwise().squaredNorm().minCoeff(&start);
    MinNormResult r;
    Eigen::VectorXd v = rows.row(start).transpose();
    r.norm_trace.push_back(v.norm());
    for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
        if (v.norm() <= tol) break;
        Eigen::Index s = 0;
        (rows * v).minCoeff(&s);
        const Eigen::VectorXd step = rows.row(s).transpose() - v;
        const double gap = -v.dot(step);
        if (gap <= tol * tol) break;
        const double gamma = std::clamp(gap / step.squaredNorm(), 0.0, 1.0);
        v += gamma * step;
        r.norm_trace.push_back(v.norm());
    }
    r.point = v;
    return r;
}

namespace {

HalfSpaceCertificate certify(const Points& normals, int max_iterations, double tol) {
    HalfSpaceCertificate c;
    const auto mn = min_norm_point(normals, max_iterations, tol);
    c.min_norm = mn.point.norm();
    c.direction = Eigen::VectorXd::Zero(normals.cols());
    if (c.min_norm > tol) {
        c.direction = mn.point / c.min_norm;
        c.margin = (normals * c.direction).minCoeff();
        c.feasible = c.margin > 0.0;
    } else {
        c.margin = (normals * c.direction).minCoeff();
    }
    return c;
}

} // namespace

HalfSpaceCertificate halfspace_certificate(const Points& normals, int max_iterations, double tol) {
    auto plus = certify(normals, max_iterations, tol);
    auto minus = certify(-normals, max_iterations, tol);
    minus.flipped = true;
    if (minus.feasible && (!plus.feasible || minus.margin > plus.margin)) return minus;
    return plus;
}

ChartGeometryReport analyze_chart(const Points& points, int d, double delta, int k_nn) {
    ChartGeometryReport r;
    r.projection = check_projection_bound(points, d, delta, k_nn);
    if (d == points.cols() - 1) r.halfspace = halfspace_certificate(estimate_normals(points, k_nn));
    return r;
}

nlohmann::json to_json(const ChartGeometryReport& report) {
    const auto& p = report.projection;
    nlohmann::json j;
    j["reach"] = p.reach.infinite ? nlohmann::json(nullptr) : nlohmann::json(p.reach.value);
    j["reach_infinite"] = p.reach.infinite;
    j["diameter"] = p.diameter;
    j["delta"] = p.delta;
    j["hypothesis_holds"] = p.hypothesis_holds;
    j["bound"] = p.bound ? nlohmann::json(*p.bound) : nlohmann::json(nullptr);
    j["measured_lower"] = p.measured.lower;
    j["measured_upper"] = p.measured.upper;
    j["injective"] = p.measured.injective;
    j["satisfied"] = p.satisfied;
    j["plane_origin"] = std::vector<double>(p.plane.origin.data(), p.plane.origin.data() + p.plane.origin.size());
    nlohmann::json basis = nlohmann::json::array();
    for (Eigen::Index c = 0; c < p.plane.basis.cols(); ++c) {
        basis.push_back(std::vector<double>(p.plane.basis.col(c).data(),
                                            p.plane.basis.col(c).data() + p.plane.basis.rows()));
    }
    j["plane_basis"] = basis;
    if (report.halfspace) {
        const auto& h = *report.halfspace;
        j["conjecture_feasibility"] = {
            {"feasible", h.feasible},
            {"margin", h.margin},
            {"min_norm", h.min_norm},
            {"direction", std::vector<double>(h.direction.data(), h.direction.data() + h.direction.size())},
        };
    }
    return j;
}

void write_report(std::ostream& out, const ChartGeometryReport& report) {
    const auto& p = report.projection;
    out << "reach             " << (p.reach.infinite ? std::string("inf") : std::to_string(p.reach.value)) << '\n'
        << "diameter          " << p.diameter << '\n'
        << "delta             " << p.delta << '\n'
        << "bound             " << (p.bound ? std::to_string(*p.bound) : std::string("n/a")) << '\n'
        << "hypothesis_holds  " << (p.hypothesis_holds ? "true" : "false") << '\n'
        << "measured_lower    " << p.measured.lower << '\n'
        << "measured_upper    " << p.measured.upper << '\n'
        << "injective         " << (p.measured.injective ? "true" : "false") << '\n'
        << "satisfied         " << (p.satisfied ? "true" : "false") << '\n';
    if (report.halfspace) {
        out << "conjecture feasibility (checked, not proven)\n"
            << "  feasible        " << (report.halfspace->feasible ? "true" : "false") << '\n'
            << "  margin          " << report.halfspace->margin << '\n'
            << "  min_norm        " << report.halfspace->min_norm << '\n';
    }
}

} // namespace atlas::geometry
