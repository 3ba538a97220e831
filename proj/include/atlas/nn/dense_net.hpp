#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace atlas::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { linear, relu, sigmoid, softmax, softplus, scaled_sigmoid };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Shape of one affine layer followed by an elementwise (or columnwise, for
/// softmax) activation. `scale` is only read by scaled_sigmoid: c * sigmoid(x).
struct LayerShape {
    int in = 0;
    int out = 0;
    Activation act = Activation::linear;
    double scale = 1.0;

    bool operator==(const LayerShape&) const = default;
};

/// Intermediates of one batched forward pass. Column j of every matrix belongs
/// to sample j. activations[0] is the input, activations[l + 1] the output of
/// layer l.
struct Tape {
    std::vector<Mat> activations;
    std::vector<Mat> pre_activations;

    const Mat& output() const { return activations.back(); }
};

struct Gradients {
    Vec params;  ///< same layout as DenseNet::params(), summed over the batch
    Mat inputs;  ///< dLoss/dX, one column per sample
};

/// Dense feedforward network with all weights and biases in one contiguous
/// parameter vector. Layer l stores W_l (out x in, column major) followed by b_l.
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<LayerShape> layers);

    /// in -> hidden... -> out; hidden layers use `hidden_act`.
    static DenseNet mlp(int in, std::span<const int> hidden, int out, Activation hidden_act,
                        Activation out_act, double out_scale = 1.0);

    void init_xavier(std::mt19937_64& rng);

    int input_dim() const;
    int output_dim() const;
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
    bool empty() const { return layers_.empty(); }

    const LayerShape& layer(std::size_t l) const { return layers_.at(l); }
    const std::vector<LayerShape>& layers() const { return layers_; }

    Eigen::Map<Mat> weight(std::size_t l);
    Eigen::Map<const Mat> weight(std::size_t l) const;
    Eigen::Map<Vec> bias(std::size_t l);
    Eigen::Map<const Vec> bias(std::size_t l) const;

    const Vec& params() const { return params_; }
    void set_params(const Vec& p);
    /// Writable view for optimizers; the size must not change.
    Eigen::Ref<Vec> mutable_params() { return params_; }

    Mat forward(const Mat& x) const;
    Mat forward(const Mat& x, Tape& tape) const;
    Vec forward(const Vec& x) const;

    /// Reverse-mode gradients of a scalar loss whose gradient with respect to
    /// the network output is `d_out`. Throws ConfigError when the tape was not
    /// produced by a network of this shape.
    Gradients backward(const Tape& tape, const Mat& d_out) const;

private:
    std::size_t weight_offset(std::size_t l) const { return offsets_.at(l); }
    std::size_t bias_offset(std::size_t l) const;
    void check_input(const Mat& x) const;

    std::vector<LayerShape> layers_;
    std::vector<std::size_t> offsets_;
    Vec params_;
};

/// Applies `act` columnwise to pre-activations.
Mat activate(Activation act, double scale, const Mat& pre);

} // namespace atlas::nn
