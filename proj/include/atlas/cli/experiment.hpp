#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atlas/cae/model.hpp"
#include "atlas/cae/training.hpp"
#include "atlas/data/generators.hpp"
#include "json.hpp"

namespace atlas::cli {

enum class ExperimentKind { train, generate, evaluate, theory };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// A dataset either generated from a spec or read from a CSV file.
struct DatasetSource {
    data::DatasetSpec spec;
    std::string csv;  // non-empty: load this file instead of generating

    int ambient_dim() const;
    data::PointCloud load() const;
    bool operator==(const DatasetSource&) const = default;
};

/// INI layout: [experiment] [dataset] [test] [model] [train]. Every key is
/// optional; unknown sections or keys are ConfigErrors.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::train;
    std::string output_dir = "out";
    int samples = 0;          // generated after training, 0 for none
    double bandwidth = 0.05;  // latent jitter for those samples
    DatasetSource dataset;
    std::optional<DatasetSource> test;  // held-out evaluation set
    cae::CaeConfig model;
    cae::TrainConfig train;

    /// Config errors for bad values, IoError for missing files, DimensionError
    /// when the dataset dimension differs from the model's.
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& config);
std::string config_to_string(const ExperimentConfig& config);

struct Metrics {
    double recon_mse = 0.0;  // best-chart reconstruction, ambient units
    std::optional<double> accuracy;      // categorical heads, labeled points
    std::optional<double> function_mse;  // scalar / angle heads, points with a value
    std::vector<std::size_t> usage;      // argmax-p counts per chart
    std::optional<Eigen::MatrixXd> class_confusion;  // rows true class, cols predicted
};

Metrics evaluate(const cae::CaeModel& model, const data::PointCloud& cloud);
nlohmann::json to_json(const Metrics& metrics);

struct RunReport {
    std::uint64_t seed = 0;
    cae::LossBreakdown final_loss;
    int epochs = 0;
    int active_charts = 0;
    std::vector<int> removed;
    Metrics train_metrics;
    std::optional<Metrics> test_metrics;
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;  // file names inside the output directory
};

nlohmann::json to_json(const cae::LossBreakdown& loss);
nlohmann::json to_json(const RunReport& report);

/// Generates or loads the data, initializes and trains the model, and writes
/// model.json, train.csv, loss.csv, config.ini, optional samples.csv and
/// report.json into config.output_dir.
RunReport run_training(const ExperimentConfig& config);

} // namespace atlas::cli
