#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace atlas::geometry {

/// Point sets are n x D matrices, one point per row.
using Points = Eigen::MatrixXd;

struct Reach {
    double value = 0.0;     // meaningful only when !infinite
    bool infinite = false;  // flat data: no pair leaves the tangent spaces
};

/// Local-PCA tangent at each point, refined by a least-squares quadratic fit of
/// the normal coordinates over the neighborhood. Returns D x d orthonormal bases.
std::vector<Eigen::MatrixXd> estimate_tangents(const Points& points, int d, int k_nn = 8);

/// min over pairs p != q of |q - p|^2 / (2 dist(q - p, T_p)). Pairs whose
/// normal part is below 1e-9 are skipped; if all are, the reach is infinite.
Reach estimate_reach(const Points& points, int d, int k_nn = 8);

/// Lower Lipschitz constant (1 + (D - d) 2 reach / delta)^(-1/2) of the projection
/// onto a d-plane, for a chart of diameter at most 2 reach - delta.
/// Throws DomainError unless 0 < delta < 2 reach.
double projection_bound(double reach, double delta, int ambient_dim, int latent_dim);

struct AffineSpace {
    Eigen::VectorXd origin;  // D
    Eigen::MatrixXd basis;   // D x d, orthonormal columns

    /// Rows of coordinates B^T (x - origin).
    Eigen::MatrixXd project(const Points& points) const;
};

/// Centroid and top-d principal directions. Throws DomainError when the
/// covariance has rank below d.
AffineSpace fit_affine(const Points& points, int d);

/// Axis-aligned plane through the origin spanned by the given coordinate axes.
AffineSpace coordinate_plane(int ambient_dim, const std::vector<int>& axes);

struct Distortion {
    double lower = 0.0;  // min |pi(u1) - pi(u2)| / |u1 - u2| over pairs
    double upper = 0.0;
    bool injective = true;
    double resolution = 0.0;  // largest nearest-neighbor distance of the sample
};

/// Pairwise distortion of the projection. A pair separated by more than
/// max(1e-3 diameter, 10 resolution) whose projections are closer than
/// max(1e-6 |u1 - u2|, resolution) marks the projection non-injective.
Distortion measure_distortion(const Points& points, const AffineSpace& plane);

double diameter(const Points& points);

struct ProjectionBoundReport {
    Reach reach;
    double diameter = 0.0;
    double delta = 0.0;
    bool hypothesis_holds = false;  // diameter <= 2 reach - delta
    std::optional<double> bound;    // absent when delta >= 2 reach
    Distortion measured;
    bool satisfied = false;  // hypothesis holds and measured.lower >= bound
    AffineSpace plane;
};

/// Fits the plane by PCA, estimates the reach and compares the measured
/// lower Lipschitz constant against projection_bound. With infinite reach
/// the bound uses the smallest reach allowed by the hypothesis, (diameter + delta) / 2.
ProjectionBoundReport check_projection_bound(const Points& points, int d, double delta, int k_nn = 8);

/// Unit normals of a hypersurface sample (d = D - 1): smallest principal
/// direction of each k-NN neighborhood made orthogonal to the corrected
/// tangent from estimate_tangents, signs propagated along a BFS tree of
/// the symmetrized k-NN graph. Throws DomainError if the graph is disconnected.
Points estimate_normals(const Points& points, int k_nn = 8);

struct MinNormResult {
    Eigen::VectorXd point;
    std::vector<double> norm_trace;  // |v| after each iteration
    int iterations = 0;
};

/// Minimum-norm point of the convex hull of the rows (Gilbert's algorithm:
/// Frank-Wolfe with exact line search).
MinNormResult min_norm_point(const Points& rows, int max_iterations = 10000, double tol = 1e-8);

struct HalfSpaceCertificate {
    Eigen::VectorXd direction;  // unit, zero when infeasible
    double margin = 0.0;        // min_j <direction, N_j>
    bool feasible = false;
    double min_norm = 0.0;
    bool flipped = false;  // certificate found on the negated normals
};

/// Searches for n with <n, N_j> >= margin > 0 for all rows N_j, on the
/// normals and on their negation, and keeps the better certificate.
HalfSpaceCertificate halfspace_certificate(const Points& normals, int max_iterations = 10000, double tol = 1e-8);

struct ChartGeometryReport {
    ProjectionBoundReport projection;
    std::optional<HalfSpaceCertificate> halfspace;  // codimension one only
};

ChartGeometryReport analyze_chart(const Points& points, int d, double delta, int k_nn = 8);

nlohmann::json to_json(const ChartGeometryReport& report);
void write_report(std::ostream& out, const ChartGeometryReport& report);

} // namespace atlas::geometry
