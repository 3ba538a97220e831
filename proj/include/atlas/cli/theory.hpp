#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atlas/data/generators.hpp"
#include "json.hpp"

namespace atlas::cli {

struct TheoryOptions {
    int dim = 1;         // --d: grid or latent dimension
    int grid = 4;        // --grid: partition-of-unity resolution N
    int points = 1000;   // random probe points for pou
    double eps = 0.1;    // --eps
    double delta = 1e-3; // --delta: mult accuracy, or projection offset for project
    double bound = 1.0;  // --bound: mult input range [-K, K]
    int degree = 1;      // --degree: local polynomial degree (k - 1)
    std::vector<std::size_t> sizes{1000, 3000, 10000};  // regress sample counts
    double noise = 0.0;  // regress per-coordinate noise
    int ambient = 3;     // regress output dimension D
    int repetitions = 1;
    int knn = 8;         // --knn
    std::uint64_t seed = 0;
    std::string input;   // point cloud CSV for reach / project / gaussmap
    data::DatasetSpec dataset;  // used when input is empty
    std::optional<std::filesystem::path> out;  // directory for report.json and CSVs
};

/// Partition-of-unity sum error at random points and its ReLU network counterpart.
nlohmann::json theory_pou(const TheoryOptions& options);
/// Multiplication network accuracy on a 200 x 200 grid, exact zeros and complexity.
nlohmann::json theory_mult(const TheoryOptions& options);
/// Decoder network for (sin 2 pi x, cos 2 pi x) on [0, 1]: complexity and sup error.
nlohmann::json theory_decoder_net(const TheoryOptions& options);
/// Convergence table of the local regression estimator on the circle embedding.
nlohmann::json theory_regress(const TheoryOptions& options);
nlohmann::json theory_reach(const TheoryOptions& options);
nlohmann::json theory_project(const TheoryOptions& options);
nlohmann::json theory_gaussmap(const TheoryOptions& options);

/// Dispatches on the subcommand name; writes report.json when options.out is set.
nlohmann::json run_theory(const std::string& command, const TheoryOptions& options);

} // namespace atlas::cli
