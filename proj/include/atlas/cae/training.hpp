#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "atlas/cae/model.hpp"
#include "atlas/data/point_cloud.hpp"

namespace atlas::cae {

enum class FunctionLoss { cross_entropy, mse, none };

std::string to_string(FunctionLoss kind);
FunctionLoss function_loss_from_string(const std::string& name);

/// Scale dividing the errors before the predictor target softmax:
/// median of all N x B errors of the batch, or median of each point's best error.
enum class TargetTemperature { batch_median, best_median };

std::string to_string(TargetTemperature kind);
TargetTemperature target_temperature_from_string(const std::string& name);

struct TrainConfig {
    double lambda = 1.0;
    double ce_weight = 1.0;
    double lr = 1e-3;
    int batch_size = 64;
    int epochs_init = 300;
    int epochs_main = 100;
    double removal_threshold = 0.0;
    int removal_check_epoch = -1;  // negative: epochs_main / 3
    std::uint64_t seed = 0;
    FunctionLoss function_loss = FunctionLoss::none;

    double init_lr = 5e-3;
    double lift_scale = 2.0;       // weight of function values in the lifted coordinates
    double redundancy_ratio = 0.0; // >= 1 also drops charts whose points another chart reconstructs
    bool sample_latent = true;     // false: train on the deterministic code mu
    TargetTemperature temperature = TargetTemperature::batch_median;
    double kl_weight = 1.0;        // multiplies the KL term inside the lambda sum
    bool function_aware_assignment = false;  // best chart and target use e_i + F_i on labeled points

    void validate() const;
    int removal_epoch() const;
    bool operator==(const TrainConfig&) const = default;
};

struct LossBreakdown {
    double min_recon = 0.0;
    double weighted_recon = 0.0;
    double function_loss = 0.0;
    double kl = 0.0;
    double predictor_ce = 0.0;
    double total = 0.0;
};

/// Sum of the diagonal-Gaussian KL divergences to N(1/2, 1/4^2) per coordinate.
double kl_to_center(const Vec& mu, const Vec& sigma);

/// Training points as columns in ambient units. `target(b)` holds the function
/// value (class index for categorical heads) and is read only where labeled.
struct Batch {
    Mat x;
    Vec target;
    std::vector<bool> labeled;

    static Batch from_cloud(const data::PointCloud& cloud, const std::vector<std::size_t>& rows);
    static Batch from_cloud(const data::PointCloud& cloud);
};

struct LossOptions {
    /// Per chart d x B standard-normal draws; empty means z = mu.
    const std::vector<Mat>* noise = nullptr;
    /// Replaces softmax(-e / T) as the predictor target (N x B), for gradient checks.
    const Mat* fixed_target = nullptr;
    bool want_gradient = true;
};

struct LossResult {
    LossBreakdown parts;
    Vec gradient;      // flat layout of CaeModel::flat_params()
    Mat target;        // predictor target actually used, N x B
    double temperature = 1.0;
};

/// Batch mean of the per-point objective:
///   min_i e_i + lambda * sum_i p_i (e_i + F_i + kl_weight * KL_i) + ce_weight * CE(target, p)
/// with e_i measured in the model's normalized coordinates.
LossResult training_loss(const CaeModel& model, const Batch& batch, const TrainConfig& config,
                         const LossOptions& options = {});

/// Single-point convenience wrapper (deterministic code).
LossBreakdown training_loss(const CaeModel& model, const Vec& x, std::optional<double> f_value,
                            const TrainConfig& config);

/// Greedy max-min selection; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample(const Eigen::MatrixXd& rows, int count, std::size_t start);
std::vector<std::size_t> farthest_point_sample(const Eigen::MatrixXd& rows, int count, std::mt19937_64& rng);

/// Normalized coordinates with the visible function values appended
/// (one-hot for categorical heads), scaled by config.lift_scale.
Eigen::MatrixXd lifted_coordinates(const CaeModel& model, const data::PointCloud& cloud, const TrainConfig& config);

struct InitResult {
    std::vector<std::size_t> assigned;  // cloud row of chart j's seed point
    std::vector<double> loss_log;
};

/// Fits the normalizer, picks one seed point per chart by farthest-point
/// sampling and trains every chart on its own seed for epochs_init steps.
InitResult initialize(CaeModel& model, const data::PointCloud& cloud, const TrainConfig& config);

/// Fraction of points whose argmax chart is i.
std::vector<double> chart_usage(const CaeModel& model, const Eigen::MatrixXd& rows);

/// Deletes charts with usage below rho (a refusal to delete all keeps the most
/// used one). With redundancy_ratio >= 1, charts are then dropped one at a
/// time, least used first, while some chart's points are reconstructed by the
/// other charts with mean error at most redundancy_ratio times its own (own
/// error floored at the mean best error over the cloud). Returns the removed
/// indices in the numbering of the model passed in.
std::vector<int> remove_charts(CaeModel& model, const data::PointCloud& cloud, double rho,
                               double redundancy_ratio = 0.0);

struct EpochRecord {
    int epoch = 0;
    LossBreakdown loss;
    int active_charts = 0;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    std::vector<int> removed;
};

/// Mini-batch Adam on training_loss. Throws NumericalError on a non-finite loss.
TrainResult train(CaeModel& model, const data::PointCloud& cloud, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

void write_loss_log(std::ostream& out, const std::vector<EpochRecord>& log);
void save_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

// ---------------------------------------------------------------------------
// Single-chart VAE baseline on standardized (coordinates, function) vectors.

struct VaeConfig {
    int latent_dim = 2;
    int hidden_width = 32;  // two hidden layers in encoder and decoder
    double kl_weight = 1.0;
    std::optional<double> fixed_sigma;  // replaces the sigma head (0: deterministic)
    double lr = 1e-3;
    int batch_size = 64;
    int epochs = 100;
    std::uint64_t seed = 0;
};

class VaeModel {
public:
    VaeModel() = default;
    VaeModel(int input_dim, const VaeConfig& config);

    std::size_t parameter_count() const;
    int input_dim() const { return input_dim_; }

    void fit_standardizer(const Eigen::MatrixXd& rows);
    /// Batch loss (mean) and gradient w.r.t. the flat parameters.
    double loss(const Mat& x_std, const Mat* noise, Vec* gradient) const;
    /// Deterministic reconstruction in original units (rows are points).
    Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& rows) const;

    Mat standardize(const Eigen::MatrixXd& rows) const;
    Vec flat_params() const;
    void set_flat_params(const Vec& p);

    const nn::DenseNet& encoder() const { return encoder_; }
    const nn::DenseNet& mu_head() const { return mu_head_; }
    const nn::DenseNet& decoder() const { return decoder_; }

private:
    int input_dim_ = 0;
    VaeConfig config_;
    nn::DenseNet encoder_, mu_head_, sigma_head_, decoder_;
    Vec mean_, stddev_;
};

/// Hidden width whose parameter count is closest to `budget`.
int vae_width_for_budget(int input_dim, int latent_dim, std::size_t budget);

struct VaeReport {
    VaeModel model;
    std::vector<double> loss_log;
    double coord_mse = 0.0;     // mean squared coordinate error, original units
    double function_mse = 0.0;  // mean squared error of the function column
};

/// Trains on train rows (coordinates with the function value as last column)
/// and evaluates on test rows.
VaeReport train_vae_baseline(const Eigen::MatrixXd& train_rows, const Eigen::MatrixXd& test_rows,
                             const VaeConfig& config);

} // namespace atlas::cae
