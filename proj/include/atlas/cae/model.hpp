#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "atlas/nn/dense_net.hpp"

namespace atlas::cae {

using nn::Mat;
using nn::Vec;

enum class LatentFunctionKind { none, constant, linear, mlp };
enum class FunctionOutput { categorical, scalar, angle };
enum class ReconstructMode { best, weighted };

std::string to_string(LatentFunctionKind kind);
std::string to_string(FunctionOutput kind);
LatentFunctionKind latent_function_from_string(const std::string& name);
FunctionOutput function_output_from_string(const std::string& name);

struct CaeConfig {
    int num_charts = 1;
    int latent_dim = 1;
    int ambient_dim = 2;
    std::vector<int> encoder_hidden{10};
    std::vector<int> decoder_hidden{10, 10};
    std::vector<int> predictor_hidden{10, 10};
    LatentFunctionKind latent_function = LatentFunctionKind::none;
    std::vector<int> latent_mlp_hidden{10, 10};
    FunctionOutput function_output = FunctionOutput::scalar;
    int num_classes = 0;  // categorical outputs only

    void validate() const;
    int function_dim() const;  // width of a latent-function head (0 when kind is none)
    bool operator==(const CaeConfig&) const = default;
};

struct LatentCode {
    Vec mu;
    Vec sigma;
};

/// One chart: encoder trunk with a sigmoid mu head and softplus sigma head,
/// a decoder from the unit cube to R^D, and an optional latent function.
struct Chart {
    nn::DenseNet trunk;  // empty when encoder_hidden is empty
    nn::DenseNet mu_head;
    nn::DenseNet sigma_head;
    nn::DenseNet decoder;
    nn::DenseNet latent_fn;  // empty when latent_function is none
};

/// Fixed affine map applied to ambient data before the networks see it:
/// normalized = (x - shift) / scale. Not trainable.
struct Normalizer {
    Vec shift;
    double scale = 1.0;

    Mat apply(const Mat& x) const;  // columns are points
    Mat invert(const Mat& y) const;
};

class CaeModel {
public:
    CaeModel() = default;
    CaeModel(CaeConfig config, std::uint64_t seed);

    const CaeConfig& config() const { return config_; }
    int num_charts() const { return config_.num_charts; }
    std::uint64_t seed() const { return seed_; }

    const Normalizer& normalizer() const { return normalizer_; }
    void set_normalizer(Normalizer n);
    /// Centroid shift and RMS radius scale of the given rows.
    void fit_normalizer(const Eigen::MatrixXd& points_rows);

    std::vector<LatentCode> encode(const Vec& x) const;
    static Vec reparameterize(const Vec& mu, const Vec& sigma, std::mt19937_64* rng);
    Vec decode(int chart, const Vec& z) const;
    Vec chart_probabilities(const Vec& x) const;
    Vec reconstruct(const Vec& x, ReconstructMode mode) const;
    Vec predict_function(const Vec& x) const;
    /// Latent-function head of `chart` evaluated at code z.
    Vec latent_function(int chart, const Vec& z) const;
    int best_chart(const Vec& x) const;

    // Batched variants: columns are points, in ambient (unnormalized) units.
    Mat chart_probabilities_batch(const Mat& x) const;
    std::vector<Mat> encode_mu_batch(const Mat& x) const;
    Mat decode_batch(int chart, const Mat& z) const;

    std::size_t parameter_count() const;

    /// Submodules in flat-parameter order: predictor, then per chart
    /// trunk, mu_head, sigma_head, decoder, latent_fn.
    std::vector<const nn::DenseNet*> blocks() const;
    std::vector<nn::DenseNet*> blocks();
    Vec flat_params() const;
    void set_flat_params(const Vec& p);

    const nn::DenseNet& predictor() const { return predictor_; }
    nn::DenseNet& predictor() { return predictor_; }
    const Chart& chart(int i) const { return charts_.at(static_cast<std::size_t>(i)); }
    Chart& chart(int i) { return charts_.at(static_cast<std::size_t>(i)); }

    /// Deletes the listed charts and the matching predictor output rows.
    void remove_charts(std::vector<int> indices);

    nlohmann::json to_json() const;
    static CaeModel from_json(const nlohmann::json& doc);
    void save(const std::filesystem::path& path) const;
    static CaeModel load(const std::filesystem::path& path);

private:
    void check_input(const Vec& x) const;
    void check_chart(int i) const;
    Mat encode_trunk(const Chart& c, const Mat& xn) const;

    CaeConfig config_;
    std::vector<Chart> charts_;
    nn::DenseNet predictor_;
    Normalizer normalizer_;
    std::uint64_t seed_ = 0;
};

Chart make_chart(const CaeConfig& config);
nn::DenseNet make_predictor(const CaeConfig& config);

nlohmann::json dense_to_json(const nn::DenseNet& net);
nn::DenseNet dense_from_json(const nlohmann::json& doc);

} // namespace atlas::cae
