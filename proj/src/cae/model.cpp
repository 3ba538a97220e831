#include "atlas/cae/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "atlas/errors.hpp"

namespace atlas::cae {

using nlohmann::json;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
constexpr int format_version = 1;

nn::DenseNet stack_relu(int in, const std::vector<int>& widths) {
    std::vector<nn::LayerShape> shapes;
    int prev = in;
    for (int w : widths) {
        shapes.push_back({prev, w, nn::Activation::relu, 1.0});
        prev = w;
    }
    return shapes.empty() ? nn::DenseNet() : nn::DenseNet(std::move(shapes));
}

void check_widths(const std::vector<int>& widths, const char* what) {
    for (int w : widths) {
        if (w <= 0) {
            throw ConfigError(std::string(what) + " widths must be positive");
        }
    }
}

} // namespace

std::string to_string(LatentFunctionKind kind) {
    switch (kind) {
    case LatentFunctionKind::none: return "none";
    case LatentFunctionKind::constant: return "constant";
    case LatentFunctionKind::linear: return "linear";
    case LatentFunctionKind::mlp: return "mlp";
    }
    return "none";
}

std::string to_string(FunctionOutput kind) {
    switch (kind) {
    case FunctionOutput::categorical: return "categorical";
    case FunctionOutput::scalar: return "scalar";
    case FunctionOutput::angle: return "angle";
    }
    return "scalar";
}

LatentFunctionKind latent_function_from_string(const std::string& name) {
    for (auto k : {LatentFunctionKind::none, LatentFunctionKind::constant, LatentFunctionKind::linear,
                   LatentFunctionKind::mlp}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown latent function kind '" + name + "'");
}

FunctionOutput function_output_from_string(const std::string& name) {
    for (auto k : {FunctionOutput::categorical, FunctionOutput::scalar, FunctionOutput::angle}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown function output '" + name + "'");
}

void CaeConfig::validate() const {
    if (num_charts < 1) throw ConfigError("num_charts must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (ambient_dim < latent_dim) throw ConfigError("ambient_dim must be >= latent_dim");
    check_widths(encoder_hidden, "encoder");
    check_widths(decoder_hidden, "decoder");
    check_widths(predictor_hidden, "predictor");
    check_widths(latent_mlp_hidden, "latent mlp");
    if (latent_function != LatentFunctionKind::none && function_output == FunctionOutput::categorical &&
        num_classes < 2) {
        throw ConfigError("categorical latent functions need num_classes >= 2");
    }
}

int CaeConfig::function_dim() const {
    if (latent_function == LatentFunctionKind::none) return 0;
    return function_output == FunctionOutput::categorical ? num_classes : 1;
}

Mat Normalizer::apply(const Mat& x) const {
    if (shift.size() != x.rows()) {
        throw DimensionError("normalizer expects " + std::to_string(shift.size()) + " coordinates");
    }
    return (x.colwise() - shift) / scale;
}

Mat Normalizer::invert(const Mat& y) const { return (y * scale).colwise() + shift; }

Chart make_chart(const CaeConfig& cfg) {
    Chart c;
    c.trunk = stack_relu(cfg.ambient_dim, cfg.encoder_hidden);
    const int feat = cfg.encoder_hidden.empty() ? cfg.ambient_dim : cfg.encoder_hidden.back();
    c.mu_head = nn::DenseNet({{feat, cfg.latent_dim, nn::Activation::sigmoid, 1.0}});
    c.sigma_head = nn::DenseNet({{feat, cfg.latent_dim, nn::Activation::softplus, 1.0}});
    c.decoder = nn::DenseNet::mlp(cfg.latent_dim, cfg.decoder_hidden, cfg.ambient_dim, nn::Activation::relu,
                                  nn::Activation::linear);
    if (cfg.latent_function != LatentFunctionKind::none) {
        nn::Activation out = nn::Activation::linear;
        double scale = 1.0;
        if (cfg.function_output == FunctionOutput::categorical) {
            out = nn::Activation::softmax;
        } else if (cfg.function_output == FunctionOutput::angle) {
            out = nn::Activation::scaled_sigmoid;
            scale = two_pi;
        }
        const int k = cfg.function_dim();
        switch (cfg.latent_function) {
        case LatentFunctionKind::constant: c.latent_fn = nn::DenseNet({{0, k, out, scale}}); break;
        case LatentFunctionKind::linear: c.latent_fn = nn::DenseNet({{cfg.latent_dim, k, out, scale}}); break;
        case LatentFunctionKind::mlp:
            c.latent_fn = nn::DenseNet::mlp(cfg.latent_dim, cfg.latent_mlp_hidden, k, nn::Activation::relu, out, scale);
            break;
        case LatentFunctionKind::none: break;
        }
    }
    return c;
}

nn::DenseNet make_predictor(const CaeConfig& cfg) {
    return nn::DenseNet::mlp(cfg.ambient_dim, cfg.predictor_hidden, cfg.num_charts, nn::Activation::relu,
                             nn::Activation::softmax);
}

CaeModel::CaeModel(CaeConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    std::mt19937_64 rng(seed);
    predictor_ = make_predictor(config_);
    charts_.reserve(static_cast<std::size_t>(config_.num_charts));
    for (int i = 0; i < config_.num_charts; ++i) {
        charts_.push_back(make_chart(config_));
    }
    for (auto* b : blocks()) {
        b->init_xavier(rng);
    }
    normalizer_.shift = Vec::Zero(config_.ambient_dim);
    normalizer_.scale = 1.0;
}

void CaeModel::set_normalizer(Normalizer n) {
    if (n.shift.size() != config_.ambient_dim || !(n.scale > 0.0) || !std::isfinite(n.scale)) {
        throw ConfigError("normalizer must have D entries and a positive scale");
    }
    normalizer_ = std::move(n);
}

void CaeModel::fit_normalizer(const Eigen::MatrixXd& rows) {
    if (rows.cols() != config_.ambient_dim || rows.rows() == 0) {
        throw DimensionError("normalizer fit needs n x D data");
    }
    Normalizer n;
    n.shift = rows.colwise().mean().transpose();
    const double ms = (rows.rowwise() - n.shift.transpose()).rowwise().squaredNorm().mean();
    n.scale = ms > 0.0 ? std::sqrt(ms) : 1.0;
    set_normalizer(std::move(n));
}

void CaeModel::check_input(const Vec& x) const {
    if (x.size() != config_.ambient_dim) {
        throw DimensionError("input has " + std::to_string(x.size()) + " coordinates, model expects " +
                             std::to_string(config_.ambient_dim));
    }
}

void CaeModel::check_chart(int i) const {
    if (i < 0 || i >= num_charts()) {
        throw ConfigError("chart index " + std::to_string(i) + " out of range [0, " + std::to_string(num_charts()) +
                          ")");
    }
}

Mat CaeModel::encode_trunk(const Chart& c, const Mat& xn) const { return c.trunk.empty() ? xn : c.trunk.forward(xn); }

std::vector<LatentCode> CaeModel::encode(const Vec& x) const {
    check_input(x);
    const Mat xn = normalizer_.apply(Mat(x));
    std::vector<LatentCode> out;
    out.reserve(charts_.size());
    for (const auto& c : charts_) {
        const Mat h = encode_trunk(c, xn);
        out.push_back({c.mu_head.forward(h).col(0), c.sigma_head.forward(h).col(0)});
    }
    return out;
}

Vec CaeModel::reparameterize(const Vec& mu, const Vec& sigma, std::mt19937_64* rng) {
    if (mu.size() != sigma.size()) {
        throw DimensionError("mu and sigma differ in length");
    }
    if (rng == nullptr) {
        return mu.cwiseMax(0.0).cwiseMin(1.0);
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(mu.size());
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        z(k) = std::clamp(mu(k) + sigma(k) * gauss(*rng), 0.0, 1.0);
    }
    return z;
}

Vec CaeModel::decode(int chart, const Vec& z) const {
    check_chart(chart);
    if (z.size() != config_.latent_dim) {
        throw DimensionError("latent code has wrong length");
    }
    return decode_batch(chart, Mat(z)).col(0);
}

Mat CaeModel::decode_batch(int chart, const Mat& z) const {
    check_chart(chart);
    return normalizer_.invert(charts_[static_cast<std::size_t>(chart)].decoder.forward(z));
}

Vec CaeModel::chart_probabilities(const Vec& x) const {
    check_input(x);
    return chart_probabilities_batch(Mat(x)).col(0);
}

Mat CaeModel::chart_probabilities_batch(const Mat& x) const { return predictor_.forward(normalizer_.apply(x)); }

std::vector<Mat> CaeModel::encode_mu_batch(const Mat& x) const {
    const Mat xn = normalizer_.apply(x);
    std::vector<Mat> out;
    out.reserve(charts_.size());
    for (const auto& c : charts_) {
        out.push_back(c.mu_head.forward(encode_trunk(c, xn)));
    }
    return out;
}

int CaeModel::best_chart(const Vec& x) const {
    const Vec p = chart_probabilities(x);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i) {
        if (p(i) > p(best)) best = i;
    }
    return static_cast<int>(best);
}

Vec CaeModel::reconstruct(const Vec& x, ReconstructMode mode) const {
    const auto codes = encode(x);
    if (mode == ReconstructMode::best) {
        const int i = best_chart(x);
        return decode(i, codes[static_cast<std::size_t>(i)].mu);
    }
    const Vec p = chart_probabilities(x);
    Vec y = Vec::Zero(config_.ambient_dim);
    for (int i = 0; i < num_charts(); ++i) {
        y += p(i) * decode(i, codes[static_cast<std::size_t>(i)].mu);
    }
    return y;
}

Vec CaeModel::latent_function(int chart, const Vec& z) const {
    if (config_.latent_function == LatentFunctionKind::none) {
        throw ConfigError("model has no latent functions");
    }
    check_chart(chart);
    const auto& net = charts_[static_cast<std::size_t>(chart)].latent_fn;
    const Mat in = net.input_dim() == 0 ? Mat(0, 1) : Mat(z);
    Vec out = net.forward(in).col(0);
    if (config_.function_output == FunctionOutput::angle && out(0) >= two_pi) {
        out(0) = 0.0;  // sigmoid saturated to 1; 2 pi and 0 are the same angle
    }
    return out;
}

Vec CaeModel::predict_function(const Vec& x) const {
    if (config_.latent_function == LatentFunctionKind::none) {
        throw ConfigError("predict_function needs latent functions");
    }
    const int i = best_chart(x);
    return latent_function(i, encode(x)[static_cast<std::size_t>(i)].mu);
}

std::vector<const nn::DenseNet*> CaeModel::blocks() const {
    std::vector<const nn::DenseNet*> out{&predictor_};
    for (const auto& c : charts_) {
        out.insert(out.end(), {&c.trunk, &c.mu_head, &c.sigma_head, &c.decoder, &c.latent_fn});
    }
    return out;
}

std::vector<nn::DenseNet*> CaeModel::blocks() {
    std::vector<nn::DenseNet*> out{&predictor_};
    for (auto& c : charts_) {
        out.insert(out.end(), {&c.trunk, &c.mu_head, &c.sigma_head, &c.decoder, &c.latent_fn});
    }
    return out;
}

std::size_t CaeModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto* b : blocks()) n += b->param_count();
    return n;
}

Vec CaeModel::flat_params() const {
    Vec out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index off = 0;
    for (const auto* b : blocks()) {
        const auto n = static_cast<Eigen::Index>(b->param_count());
        out.segment(off, n) = b->params();
        off += n;
    }
    return out;
}

void CaeModel::set_flat_params(const Vec& p) {
    if (p.size() != static_cast<Eigen::Index>(parameter_count())) {
        throw DimensionError("flat parameter vector has wrong length");
    }
    Eigen::Index off = 0;
    for (auto* b : blocks()) {
        const auto n = static_cast<Eigen::Index>(b->param_count());
        b->mutable_params() = p.segment(off, n);
        off += n;
    }
}

void CaeModel::remove_charts(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    for (int i : indices) check_chart(i);
    if (indices.size() >= charts_.size()) {
        throw ConfigError("refusing to remove every chart");
    }
    std::vector<int> keep;
    for (int i = 0; i < num_charts(); ++i) {
        if (!std::binary_search(indices.begin(), indices.end(), i)) keep.push_back(i);
    }

    const std::size_t last = predictor_.num_layers() - 1;
    auto shapes = predictor_.layers();
    shapes[last].out = static_cast<int>(keep.size());
    nn::DenseNet pruned(shapes);
    for (std::size_t l = 0; l < last; ++l) {
        pruned.weight(l) = predictor_.weight(l);
        pruned.bias(l) = predictor_.bias(l);
    }
    for (std::size_t r = 0; r < keep.size(); ++r) {
        const auto src = static_cast<Eigen::Index>(keep[r]);
        const auto dst = static_cast<Eigen::Index>(r);
        pruned.weight(last).row(dst) = predictor_.weight(last).row(src);
        pruned.bias(last)(dst) = predictor_.bias(last)(src);
    }
    predictor_ = std::move(pruned);

    std::vector<Chart> kept;
    for (int i : keep) kept.push_back(std::move(charts_[static_cast<std::size_t>(i)]));
    charts_ = std::move(kept);
    config_.num_charts = static_cast<int>(charts_.size());
}

json dense_to_json(const nn::DenseNet& net) {
    json layers = json::array();
    for (const auto& s : net.layers()) {
        layers.push_back({{"in", s.in}, {"out", s.out}, {"activation", nn::to_string(s.act)}, {"scale", s.scale}});
    }
    const auto& p = net.params();
    return {{"layers", layers}, {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

nn::DenseNet dense_from_json(const json& doc) {
    std::vector<nn::LayerShape> shapes;
    for (const auto& l : doc.at("layers")) {
        shapes.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                          nn::activation_from_string(l.at("activation").get<std::string>()),
                          l.at("scale").get<double>()});
    }
    if (shapes.empty()) {
        if (!doc.at("params").empty()) throw ParseError("empty network with parameters");
        return {};
    }
    nn::DenseNet net(std::move(shapes));
    const auto p = doc.at("params").get<std::vector<double>>();
    net.set_params(Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size())));
    return net;
}

json CaeModel::to_json() const {
    json cfg = {{"num_charts", config_.num_charts},
                {"latent_dim", config_.latent_dim},
                {"ambient_dim", config_.ambient_dim},
                {"encoder_hidden", config_.encoder_hidden},
                {"decoder_hidden", config_.decoder_hidden},
                {"predictor_hidden", config_.predictor_hidden},
                {"latent_function", to_string(config_.latent_function)},
                {"latent_mlp_hidden", config_.latent_mlp_hidden},
                {"function_output", to_string(config_.function_output)},
                {"num_classes", config_.num_classes}};
    json charts = json::array();
    for (const auto& c : charts_) {
        charts.push_back({{"trunk", dense_to_json(c.trunk)},
                          {"mu_head", dense_to_json(c.mu_head)},
                          {"sigma_head", dense_to_json(c.sigma_head)},
                          {"decoder", dense_to_json(c.decoder)},
                          {"latent_fn", dense_to_json(c.latent_fn)}});
    }
    const auto& s = normalizer_.shift;
    return {{"format", "atlas-cae-model"},
            {"version", format_version},
            {"seed", seed_},
            {"config", cfg},
            {"normalizer", {{"shift", std::vector<double>(s.data(), s.data() + s.size())}, {"scale", normalizer_.scale}}},
            {"predictor", dense_to_json(predictor_)},
            {"charts", charts}};
}

CaeModel CaeModel::from_json(const json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "atlas-cae-model") {
            throw ParseError("not a chart autoencoder model document");
        }
        if (doc.at("version").get<int>() != format_version) {
            throw ParseError("unsupported model version " + std::to_string(doc.at("version").get<int>()));
        }
        const auto& c = doc.at("config");
        CaeConfig cfg;
        cfg.num_charts = c.at("num_charts").get<int>();
        cfg.latent_dim = c.at("latent_dim").get<int>();
        cfg.ambient_dim = c.at("ambient_dim").get<int>();
        cfg.encoder_hidden = c.at("encoder_hidden").get<std::vector<int>>();
        cfg.decoder_hidden = c.at("decoder_hidden").get<std::vector<int>>();
        cfg.predictor_hidden = c.at("predictor_hidden").get<std::vector<int>>();
        cfg.latent_function = latent_function_from_string(c.at("latent_function").get<std::string>());
        cfg.latent_mlp_hidden = c.at("latent_mlp_hidden").get<std::vector<int>>();
        cfg.function_output = function_output_from_string(c.at("function_output").get<std::string>());
        cfg.num_classes = c.at("num_classes").get<int>();

        CaeModel model(cfg, doc.at("seed").get<std::uint64_t>());
        model.predictor_ = dense_from_json(doc.at("predictor"));
        const auto& charts = doc.at("charts");
        if (charts.size() != static_cast<std::size_t>(cfg.num_charts)) {
            throw ParseError("chart count does not match config");
        }
        for (std::size_t i = 0; i < charts.size(); ++i) {
            auto& ch = model.charts_[i];
            ch.trunk = dense_from_json(charts[i].at("trunk"));
            ch.mu_head = dense_from_json(charts[i].at("mu_head"));
            ch.sigma_head = dense_from_json(charts[i].at("sigma_head"));
            ch.decoder = dense_from_json(charts[i].at("decoder"));
            ch.latent_fn = dense_from_json(charts[i].at("latent_fn"));
            const Chart ref = make_chart(cfg);
            if (ch.trunk.layers() != ref.trunk.layers() || ch.mu_head.layers() != ref.mu_head.layers() ||
                ch.sigma_head.layers() != ref.sigma_head.layers() || ch.decoder.layers() != ref.decoder.layers() ||
                ch.latent_fn.layers() != ref.latent_fn.layers()) {
                throw ParseError("chart " + std::to_string(i) + " shapes do not match config");
            }
        }
        if (model.predictor_.layers() != make_predictor(cfg).layers()) {
            throw ParseError("predictor shape does not match config");
        }
        Normalizer n;
        const auto shift = doc.at("normalizer").at("shift").get<std::vector<double>>();
        n.shift = Eigen::Map<const Vec>(shift.data(), static_cast<Eigen::Index>(shift.size()));
        n.scale = doc.at("normalizer").at("scale").get<double>();
        model.set_normalizer(std::move(n));
        return model;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model document: ") + e.what());
    }
}

void CaeModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump(1) << '\n';
}

CaeModel CaeModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
    return from_json(doc);
}

} // namespace atlas::cae
