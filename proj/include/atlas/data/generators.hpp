#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "atlas/data/point_cloud.hpp"

namespace atlas::data {

enum class DatasetKind { swiss_roll, triangles, gaussians9, circles3, circle_arc, triangle2chart };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gaussians9;
    int n = 1000;
    double noise = 0.0;  // isotropic ambient noise added after exact generation
    std::uint64_t seed = 0;
    double label_fraction = 1.0;

    double roll_height = 10.0;
    double separation = 1.0;
    double grid_spacing = 4.0;
    double cluster_sigma = 0.3;
    double theta_min = -1.0471975511965976;
    double theta_max = 1.0471975511965976;

    bool operator==(const DatasetSpec&) const = default;
};

/// Unrolled-coordinate function carried by the swiss roll: (t - 3 pi) / pi.
double swiss_roll_function(double t);

/// (t cos t, h, t sin t), t uniform in [1.5 pi, 4.5 pi], h uniform in [0, height].
PointCloud gen_swiss_roll(int n, std::uint64_t seed, double height = 10.0, double noise = 0.0,
                          double label_fraction = 1.0);

/// Boundaries of two unit-side equilateral triangles, side by side with a gap
/// of `separation`. Component ids alternate so counts are balanced.
PointCloud gen_triangles(int n, double separation, std::uint64_t seed, double noise = 0.0);

/// 3x3 grid of isotropic Gaussians centered on (i, j) * spacing, i, j in {-1, 0, 1}.
PointCloud gen_gaussians9(int n, double grid_spacing, double sigma, std::uint64_t seed);
Eigen::MatrixXd gaussians9_centers(double grid_spacing);

/// Unit circles centered on an equilateral triangle of side 1.2; labels are the
/// circle index and exactly round(label_fraction * n) points are flagged labeled.
PointCloud gen_circles3(int n, double label_fraction, std::uint64_t seed, double noise = 0.0);
Eigen::MatrixXd circles3_centers();
constexpr double circles3_radius = 1.0;

/// n evenly spaced points (cell midpoints) on the unit-circle arc (theta_min, theta_max).
PointCloud gen_circle_arc(double theta_min, double theta_max, int n);

/// Two-chart cover of the triangle boundary with vertices (-1,0), (1,0), (0,1):
/// first = base T1, second = the two slanted sides T2 u T3 (apex included once).
std::pair<PointCloud, PointCloud> gen_triangle2chart(int n);

/// Dispatch on spec.kind; triangle2chart returns the U2 chart.
PointCloud generate(const DatasetSpec& spec);

} // namespace atlas::data
