#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "atlas/cae/model.hpp"
#include "atlas/data/point_cloud.hpp"

namespace atlas::cae {

struct ChartUsage {
    std::vector<std::size_t> counts;        // argmax-p assignments per chart
    std::vector<std::vector<Vec>> codes;    // mu of the assigned points, per chart
    std::vector<std::map<int, std::size_t>> label_counts;  // labeled points per chart, by class

    std::size_t total() const;
};

ChartUsage collect_usage(const CaeModel& model, const data::PointCloud& cloud);

struct Samples {
    Eigen::MatrixXd points;  // n x D
    std::vector<int> charts;
    std::vector<int> classes;  // -1 when no chart-to-class map exists
};

/// Class of each chart: argmax of constant categorical heads, else the
/// majority label of its assigned training points (-1 if none).
std::vector<int> chart_classes(const CaeModel& model, const ChartUsage& usage);

/// Chart drawn proportionally to usage, latent resampled from the stored codes
/// with N(0, bandwidth^2) jitter and clamped to the unit cube, then decoded.
Samples sample(const CaeModel& model, const ChartUsage& usage, int n, std::mt19937_64& rng, double bandwidth = 0.05);

/// Same, restricted to the charts mapped to `class_label`.
Samples sample_class(const CaeModel& model, const ChartUsage& usage, int class_label, int n, std::mt19937_64& rng,
                     double bandwidth = 0.05);

struct ConfusionResult {
    Eigen::MatrixXd matrix;        // C(i, j) = mean p_j(decode_i(z)), z uniform
    std::vector<int> component;    // cluster id per chart
    int num_components = 0;
};

ConfusionResult confusion_cluster(const CaeModel& model, int samples_per_chart, double threshold,
                                  std::mt19937_64& rng);

/// Columns x1..xD, chart, class.
void write_samples_csv(std::ostream& out, const Samples& s);
void save_samples_csv(const std::filesystem::path& path, const Samples& s);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
void save_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

} // namespace atlas::cae
