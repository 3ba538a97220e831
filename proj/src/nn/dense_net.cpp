#include "atlas/nn/dense_net.hpp"

#include <cmath>

#include "atlas/errors.hpp"

namespace atlas::nn {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

} // namespace

std::string to_string(Activation act) {
    switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::softplus: return "softplus";
    case Activation::scaled_sigmoid: return "scaled_sigmoid";
    }
    return "linear";
}

Activation activation_from_string(const std::string& name) {
    for (auto act : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::softmax,
                     Activation::softplus, Activation::scaled_sigmoid}) {
        if (to_string(act) == name) {
            return act;
        }
    }
    throw ParseError("unknown activation '" + name + "'");
}

Mat activate(Activation act, double scale, const Mat& pre) {
    switch (act) {
    case Activation::linear: return pre;
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::sigmoid: return pre.unaryExpr(&sigmoid);
    case Activation::scaled_sigmoid: return scale * pre.unaryExpr(&sigmoid);
    case Activation::softplus: return pre.unaryExpr(&softplus);
    case Activation::softmax: {
        Mat out(pre.rows(), pre.cols());
        for (Eigen::Index j = 0; j < pre.cols(); ++j) {
            const double shift = pre.col(j).maxCoeff();
            out.col(j) = (pre.col(j).array() - shift).exp();
            out.col(j) /= out.col(j).sum();
        }
        return out;
    }
    }
    return pre;
}

DenseNet::DenseNet(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
    std::size_t total = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        if (s.in < 0 || s.out <= 0) {
            throw ConfigError("layer " + std::to_string(l) + " has invalid extents");
        }
        if (s.act == Activation::scaled_sigmoid && !(s.scale > 0.0)) {
            throw ConfigError("scaled_sigmoid needs a positive scale");
        }
        if (l > 0 && layers_[l - 1].out != s.in) {
            throw DimensionError("layer " + std::to_string(l) + " input " + std::to_string(s.in) +
                                 " does not chain with previous output " +
                                 std::to_string(layers_[l - 1].out));
        }
        offsets_.push_back(total);
        total += static_cast<std::size_t>(s.in * s.out + s.out);
    }
    params_ = Vec::Zero(static_cast<Eigen::Index>(total));
}

DenseNet DenseNet::mlp(int in, std::span<const int> hidden, int out, Activation hidden_act,
                       Activation out_act, double out_scale) {
    std::vector<LayerShape> shapes;
    int prev = in;
    for (int width : hidden) {
        shapes.push_back({prev, width, hidden_act, 1.0});
        prev = width;
    }
    shapes.push_back({prev, out, out_act, out_scale});
    return DenseNet(std::move(shapes));
}

void DenseNet::init_xavier(std::mt19937_64& rng) {
    params_.setZero();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        if (s.in == 0) {
            continue;
        }
        const double a = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        std::uniform_real_distribution<double> dist(-a, a);
        auto w = weight(l);
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                w(r, c) = dist(rng);
            }
        }
    }
}

int DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
int DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

std::size_t DenseNet::bias_offset(std::size_t l) const {
    const auto& s = layers_.at(l);
    return offsets_[l] + static_cast<std::size_t>(s.in * s.out);
}

Eigen::Map<Mat> DenseNet::weight(std::size_t l) {
    const auto& s = layers_.at(l);
    return {params_.data() + weight_offset(l), s.out, s.in};
}

Eigen::Map<const Mat> DenseNet::weight(std::size_t l) const {
    const auto& s = layers_.at(l);
    return {params_.data() + weight_offset(l), s.out, s.in};
}

Eigen::Map<Vec> DenseNet::bias(std::size_t l) {
    return {params_.data() + bias_offset(l), layers_.at(l).out};
}

Eigen::Map<const Vec> DenseNet::bias(std::size_t l) const {
    return {params_.data() + bias_offset(l), layers_.at(l).out};
}

void DenseNet::set_params(const Vec& p) {
    if (p.size() != params_.size()) {
        throw DimensionError("parameter vector has " + std::to_string(p.size()) + " entries, expected " +
                             std::to_string(params_.size()));
    }
    params_ = p;
}

void DenseNet::check_input(const Mat& x) const {
    if (layers_.empty()) {
        throw ConfigError("forward on an empty network");
    }
    if (x.rows() != input_dim()) {
        throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                             std::to_string(input_dim()));
    }
}

Mat DenseNet::forward(const Mat& x) const {
    check_input(x);
    Mat a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        Mat pre = weight(l) * a;
        pre.colwise() += bias(l);
        a = activate(s.act, s.scale, pre);
    }
    return a;
}

Vec DenseNet::forward(const Vec& x) const {
    const Mat out = forward(Mat(x));
    return out.col(0);
}

Mat DenseNet::forward(const Mat& x, Tape& tape) const {
    check_input(x);
    tape.activations.clear();
    tape.pre_activations.clear();
    tape.activations.reserve(layers_.size() + 1);
    tape.pre_activations.reserve(layers_.size());
    tape.activations.push_back(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        Mat pre = weight(l) * tape.activations.back();
        pre.colwise() += bias(l);
        tape.activations.push_back(activate(s.act, s.scale, pre));
        tape.pre_activations.push_back(std::move(pre));
    }
    return tape.activations.back();
}

Gradients DenseNet::backward(const Tape& tape, const Mat& d_out) const {
    if (tape.pre_activations.size() != layers_.size() || tape.activations.size() != layers_.size() + 1) {
        throw ConfigError("tape depth does not match network");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (tape.pre_activations[l].rows() != layers_[l].out || tape.activations[l].rows() != layers_[l].in) {
            throw ConfigError("tape layer " + std::to_string(l) + " does not match network");
        }
    }
    if (d_out.rows() != output_dim() || d_out.cols() != tape.output().cols()) {
        throw DimensionError("output gradient shape does not match forward output");
    }

    Gradients g;
    g.params = Vec::Zero(params_.size());
    Mat upstream = d_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& s = layers_[li];
        const Mat& pre = tape.pre_activations[li];
        const Mat& out = tape.activations[li + 1];
        Mat d_pre;
        switch (s.act) {
        case Activation::linear: d_pre = upstream; break;
        case Activation::relu: d_pre = (pre.array() > 0.0).select(upstream, 0.0); break;
        case Activation::sigmoid: d_pre = upstream.array() * out.array() * (1.0 - out.array()); break;
        case Activation::scaled_sigmoid: {
            // out = c * s, ds = s (1 - s)
            const Eigen::ArrayXXd sig = out.array() / s.scale;
            d_pre = upstream.array() * s.scale * sig * (1.0 - sig);
            break;
        }
        case Activation::softplus: d_pre = upstream.array() * pre.unaryExpr(&sigmoid).array(); break;
        case Activation::softmax: {
            d_pre.resize(upstream.rows(), upstream.cols());
            for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
                const double dot = upstream.col(j).dot(out.col(j));
                d_pre.col(j) = out.col(j).array() * (upstream.col(j).array() - dot);
            }
            break;
        }
        }
        const Mat& in = tape.activations[li];
        Eigen::Map<Mat> dw(g.params.data() + weight_offset(li), s.out, s.in);
        Eigen::Map<Vec> db(g.params.data() + bias_offset(li), s.out);
        dw.noalias() = d_pre * in.transpose();
        db = d_pre.rowwise().sum();
        upstream = weight(li).transpose() * d_pre;
    }
    g.inputs = std::move(upstream);
    return g;
}

} // namespace atlas::nn
