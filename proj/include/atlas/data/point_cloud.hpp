#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace atlas::data {

/// Ambient samples, one row per point, with optional per-point annotations.
/// `labeled[i]` marks the points whose label / function value is visible to
/// training (the semi-supervised mask); ground-truth columns are kept for
/// every point so evaluation can use them.
struct PointCloud {
    Eigen::MatrixXd points;  // n x D
    std::optional<std::vector<int>> labels;
    std::optional<std::vector<double>> function_values;
    std::optional<std::vector<int>> component_ids;
    std::vector<bool> labeled;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
    bool has_supervision() const { return labels.has_value() || function_values.has_value(); }
    std::size_t labeled_count() const;

    /// Throws DimensionError when an annotation column disagrees with n.
    void validate() const;

    /// Rows listed in `indices`, annotations included.
    PointCloud subset(const std::vector<std::size_t>& indices) const;
};

/// Header `x1..xD[,label][,f][,component][,labeled]`; doubles are printed with
/// 17 significant digits so a save/load round trip is exact.
void write_csv(std::ostream& out, const PointCloud& cloud);
void save_csv(const std::filesystem::path& path, const PointCloud& cloud);

/// Throws ParseError (with line number) on malformed content.
PointCloud read_csv(std::istream& in);
PointCloud load_csv(const std::filesystem::path& path);

} // namespace atlas::data
