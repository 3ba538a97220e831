#include "atlas/approx/approx_nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "atlas/cae/model.hpp"
#include "atlas/errors.hpp"

namespace atlas::approx {

namespace {

double relu(double v) { return v > 0.0 ? v : 0.0; }

void check_layer_chain(const std::vector<AffineLayer>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.weight.rows() != L.bias.size()) throw DimensionError("layer bias length differs from weight rows");
        if (l > 0 && L.weight.cols() != layers[l - 1].weight.rows()) {
            throw DimensionError("layer " + std::to_string(l) + " input does not match the previous output");
        }
    }
}

} // namespace

ReluNetwork::ReluNetwork(std::vector<AffineLayer> layers, Mat final_matrix) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("a relu network needs at least one affine layer");
    check_layer_chain(layers_);
    set_final_matrix(std::move(final_matrix));
}

int ReluNetwork::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }

int ReluNetwork::layered_output_dim() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

int ReluNetwork::output_dim() const {
    return has_final_matrix() ? static_cast<int>(final_matrix_.rows()) : layered_output_dim();
}

std::size_t ReluNetwork::units() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) n += static_cast<std::size_t>(layers_[l].weight.rows());
    return n;
}

void ReluNetwork::set_final_matrix(Mat m) {
    if (m.size() > 0 && m.cols() != layered_output_dim()) {
        throw DimensionError("final matrix columns must equal the layered output width");
    }
    final_matrix_ = std::move(m);
}

Mat ReluNetwork::evaluate(const Mat& x) const {
    if (x.rows() != input_dim()) throw DimensionError("input has the wrong dimension");
    Mat h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Mat next = layers_[l].weight * h;
        next.colwise() += layers_[l].bias;
        if (l + 1 < layers_.size()) next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    return has_final_matrix() ? Mat(final_matrix_ * h) : h;
}

Vec ReluNetwork::evaluate(const Vec& x) const { return evaluate(Mat(x)).col(0); }

nn::DenseNet ReluNetwork::to_dense_net() const {
    std::vector<nn::LayerShape> shapes;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        shapes.push_back({static_cast<int>(layers_[l].weight.cols()), static_cast<int>(layers_[l].weight.rows()),
                          l + 1 < layers_.size() ? nn::Activation::relu : nn::Activation::linear, 1.0});
    }
    if (has_final_matrix()) {
        shapes.push_back({static_cast<int>(final_matrix_.cols()), static_cast<int>(final_matrix_.rows()),
                          nn::Activation::linear, 1.0});
    }
    nn::DenseNet net(std::move(shapes));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        net.weight(l) = layers_[l].weight;
        net.bias(l) = layers_[l].bias;
    }
    if (has_final_matrix()) {
        net.weight(layers_.size()) = final_matrix_;
        net.bias(layers_.size()).setZero();
    }
    return net;
}

ReluNetwork affine_network(Mat weight, Vec bias) { return ReluNetwork({{std::move(weight), std::move(bias)}}); }

ReluNetwork compose(const ReluNetwork& outer, const ReluNetwork& inner) {
    if (inner.has_final_matrix()) throw ConfigError("cannot compose after a final matrix");
    if (outer.input_dim() != inner.output_dim()) throw DimensionError("composition dimensions do not chain");
    std::vector<AffineLayer> layers(inner.layers().begin(), inner.layers().end() - 1);
    const auto& last = inner.layers().back();
    const auto& first = outer.layers().front();
    layers.push_back({first.weight * last.weight, first.weight * last.bias + first.bias});
    layers.insert(layers.end(), outer.layers().begin() + 1, outer.layers().end());
    return ReluNetwork(std::move(layers), outer.final_matrix());
}

ReluNetwork pad_to_depth(const ReluNetwork& net, int depth) {
    if (net.has_final_matrix()) throw ConfigError("cannot pad a network with a final matrix");
    if (depth < net.depth()) throw ConfigError("cannot pad to a smaller depth");
    std::vector<AffineLayer> layers = net.layers();
    while (static_cast<int>(layers.size()) < depth) {
        const AffineLayer last = layers.back();
        const auto k = last.weight.rows();
        AffineLayer split;
        split.weight.resize(2 * k, last.weight.cols());
        split.weight << last.weight, -last.weight;
        split.bias.resize(2 * k);
        split.bias << last.bias, -last.bias;
        AffineLayer merge;
        merge.weight.resize(k, 2 * k);
        merge.weight << Mat::Identity(k, k), -Mat::Identity(k, k);
        merge.bias = Vec::Zero(k);
        layers.back() = std::move(split);
        layers.push_back(std::move(merge));
    }
    return ReluNetwork(std::move(layers));
}

namespace {

ReluNetwork stack(const std::vector<ReluNetwork>& nets, bool shared) {
    if (nets.empty()) throw ConfigError("nothing to stack");
    int depth = 0;
    for (const auto& n : nets) {
        if (n.has_final_matrix()) throw ConfigError("cannot stack networks with final matrices");
        if (shared && n.input_dim() != nets.front().input_dim()) throw DimensionError("stacked inputs differ");
        depth = std::max(depth, n.depth());
    }
    std::vector<ReluNetwork> padded;
    padded.reserve(nets.size());
    for (const auto& n : nets) padded.push_back(pad_to_depth(n, depth));
    std::vector<AffineLayer> layers(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l) {
        const auto li = static_cast<std::size_t>(l);
        Eigen::Index rows = 0, cols = 0;
        for (const auto& n : padded) {
            rows += n.layers()[li].weight.rows();
            cols += (l == 0 && shared) ? 0 : n.layers()[li].weight.cols();
        }
        if (l == 0 && shared) cols = padded.front().input_dim();
        Mat w = Mat::Zero(rows, cols);
        Vec b(rows);
        Eigen::Index r = 0, c = 0;
        for (const auto& n : padded) {
            const auto& L = n.layers()[li];
            if (l == 0 && shared) {
                w.block(r, 0, L.weight.rows(), L.weight.cols()) = L.weight;
            } else {
                w.block(r, c, L.weight.rows(), L.weight.cols()) = L.weight;
                c += L.weight.cols();
            }
            b.segment(r, L.bias.size()) = L.bias;
            r += L.weight.rows();
        }
        layers[li] = {std::move(w), std::move(b)};
    }
    return ReluNetwork(std::move(layers));
}

} // namespace

ReluNetwork stack_shared_input(const std::vector<ReluNetwork>& nets) { return stack(nets, true); }
ReluNetwork stack_disjoint(const std::vector<ReluNetwork>& nets) { return stack(nets, false); }

double psi(double x) {
    const double a = std::abs(x);
    if (a < 1.0) return 1.0;
    if (a <= 2.0) return 2.0 - a;
    return 0.0;
}

ReluNetwork psi_net() {
    Mat w1(4, 1);
    w1 << 1, 1, 1, 1;
    Vec b1(4);
    b1 << 2, 1, -1, -2;
    Mat w2(1, 4);
    w2 << 1, -1, -1, 1;
    return ReluNetwork({{w1, b1}, {w2, Vec::Zero(1)}});
}

ReluNetwork psi_net_zero_exact() {
    Mat w1(2, 1);
    w1 << 1, -1;
    Mat w2(2, 2);
    w2 << -1, -1, -1, -1;
    Vec b2(2);
    b2 << 2, 1;
    Mat w3(1, 2);
    w3 << 1, -1;
    return ReluNetwork({{w1, Vec::Zero(2)}, {w2, b2}, {w3, Vec::Zero(1)}});
}

std::size_t PouGrid::size() const {
    std::size_t n = 1;
    for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(resolution + 1);
    return n;
}

std::vector<int> PouGrid::index(std::size_t flat) const {
    std::vector<int> m(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
        m[static_cast<std::size_t>(k)] = static_cast<int>(flat % static_cast<std::size_t>(resolution + 1));
        flat /= static_cast<std::size_t>(resolution + 1);
    }
    return m;
}

Vec PouGrid::center(std::size_t flat) const {
    const auto m = index(flat);
    Vec c(dim);
    for (int k = 0; k < dim; ++k) c(k) = static_cast<double>(m[static_cast<std::size_t>(k)]) / resolution;
    return c;
}

void PouGrid::validate() const {
    if (dim < 1 || dim > max_grid_dim) {
        throw ConfigError("grid dimension must lie in [1, " + std::to_string(max_grid_dim) + "], got " +
                          std::to_string(dim));
    }
    if (resolution < 1) throw ConfigError("grid resolution must be positive");
}

namespace {

double pou_argument(int resolution, int m, double x) {
    return 3.0 * resolution * (x - static_cast<double>(m) / resolution);
}

} // namespace

double pou_eval(const PouGrid& grid, const std::vector<int>& m, const Vec& x) {
    grid.validate();
    if (static_cast<int>(m.size()) != grid.dim || x.size() != grid.dim) throw DimensionError("index/point dimension");
    double v = 1.0;
    for (int k = 0; k < grid.dim; ++k) {
        const int mk = m[static_cast<std::size_t>(k)];
        if (mk < 0 || mk > grid.resolution) throw DomainError("grid index out of range");
        v *= psi(pou_argument(grid.resolution, mk, x(k)));
    }
    return v;
}

Vec pou_eval_all(const PouGrid& grid, const Vec& x) {
    grid.validate();
    Vec out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) out(static_cast<Eigen::Index>(i)) = pou_eval(grid, grid.index(i), x);
    return out;
}

int mult_stages(double bound, double delta) {
    if (!(bound > 0.0)) throw ConfigError("multiplication bound K must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("multiplication accuracy must lie in (0, 1)");
    const double s = std::ceil((std::log2(2.0 * bound * bound / delta) - 2.0) / 2.0);
    return std::max(0, static_cast<int>(s));
}

namespace {

// Sawtooth interpolant of t^2 at 2^S + 1 nodes, with the same arithmetic as the network.
double square_approx(double t, int stages) {
    double acc = t, g = t;
    double scale = 1.0;
    for (int s = 1; s <= stages; ++s) {
        const double h_acc = relu(acc), h_g = relu(g), h_half = relu(g - 0.5);
        scale *= 0.25;
        g = 2.0 * h_g - 4.0 * h_half;
        acc = h_acc - scale * g;
    }
    return acc;
}

} // namespace

double mult_approx(double x, double y, double bound, int stages) {
    const double inv = 1.0 / (2.0 * bound);
    const double u = inv * relu(x + y) + inv * relu(-x - y);
    const double v = inv * relu(x - y) + inv * relu(-x + y);
    return bound * bound * square_approx(u, stages) - bound * bound * square_approx(v, stages);
}

ReluNetwork mult_net(double bound, double delta) {
    const int S = mult_stages(bound, delta);
    const double inv = 1.0 / (2.0 * bound);
    const double k2 = bound * bound;
    std::vector<AffineLayer> layers;
    // |x + y| and |x - y| halves.
    Mat w0(4, 2);
    w0 << 1, 1, -1, -1, 1, -1, -1, 1;
    layers.push_back({w0, Vec::Zero(4)});
    // Rows expressing (acc, g) of both chains in terms of the previous hidden layer.
    // Stage 0: acc = g = u (resp. v) from the absolute-value units.
    Mat acc_g(4, 4);  // rows: acc_u, g_u, acc_v, g_v
    acc_g << inv, inv, 0, 0,  //
        inv, inv, 0, 0,       //
        0, 0, inv, inv,       //
        0, 0, inv, inv;
    double scale = 1.0;
    for (int s = 1; s <= S; ++s) {
        // Units per chain: relu(acc), relu(g), relu(g - 1/2).
        Mat w(6, acc_g.cols());
        Vec b(6);
        for (int c = 0; c < 2; ++c) {
            w.row(3 * c) = acc_g.row(2 * c);
            w.row(3 * c + 1) = acc_g.row(2 * c + 1);
            w.row(3 * c + 2) = acc_g.row(2 * c + 1);
            b(3 * c) = 0.0;
            b(3 * c + 1) = 0.0;
            b(3 * c + 2) = -0.5;
        }
        layers.push_back({w, b});
        scale *= 0.25;
        Mat next = Mat::Zero(4, 6);
        for (int c = 0; c < 2; ++c) {
            // g_s = 2 relu(g) - 4 relu(g - 1/2); acc_s = relu(acc) - g_s / 4^s
            next(2 * c + 1, 3 * c + 1) = 2.0;
            next(2 * c + 1, 3 * c + 2) = -4.0;
            next(2 * c, 3 * c) = 1.0;
            next(2 * c, 3 * c + 1) = -scale * 2.0;
            next(2 * c, 3 * c + 2) = scale * 4.0;
        }
        acc_g = next;
    }
    // acc >= 0, so this relu layer is the identity; it leaves one unit per
    // chain and the output k2 h_u - k2 h_v is exactly zero when u == v.
    Mat acc(2, acc_g.cols());
    acc.row(0) = acc_g.row(0);
    acc.row(1) = acc_g.row(2);
    layers.push_back({acc, Vec::Zero(2)});
    Mat out(1, 2);
    out << k2, -k2;
    layers.push_back({out, Vec::Zero(1)});
    return ReluNetwork(std::move(layers));
}

ApproxBudget ApproxBudget::make(int dim, double lipschitz, double bound, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (dim < 1 || dim > max_grid_dim) throw ConfigError("grid dimension must lie in [1, 3]");
    if (!(lipschitz >= 0.0)) throw ConfigError("Lipschitz constant must be >= 0");
    if (!(bound > 0.0)) throw ConfigError("sup bound M must be positive");
    ApproxBudget b;
    b.epsilon = epsilon;
    b.lipschitz = lipschitz;
    b.bound = bound;
    b.dim = dim;
    const double pow2 = std::ldexp(1.0, dim + 1);
    b.grid_resolution = std::max(1, static_cast<int>(std::floor(pow2 * lipschitz * std::sqrt(dim) / epsilon)) + 1);
    b.mult_delta = epsilon / (pow2 * bound * dim);
    return b;
}

namespace {

constexpr std::size_t max_grid_points = 200000;

ReluNetwork coordinate_psi(const PouGrid& grid, int k, int m) {
    Mat w = Mat::Zero(1, grid.dim);
    w(0, k) = 3.0 * grid.resolution;
    Vec b(1);
    b(0) = -3.0 * m;
    return compose(psi_net_zero_exact(), affine_network(w, b));
}

ReluNetwork identity_network(int width) { return affine_network(Mat::Identity(width, width), Vec::Zero(width)); }

} // namespace

ReluNetwork build_pou_net(const PouGrid& grid, double mult_delta) {
    grid.validate();
    if (grid.size() > max_grid_points) {
        throw ConfigError("grid of " + std::to_string(grid.size()) + " points exceeds the cap of " +
                          std::to_string(max_grid_points));
    }
    const int d = grid.dim;
    const ReluNetwork mult = d > 1 ? mult_net(static_cast<double>(d), mult_delta) : ReluNetwork{};
    std::vector<ReluNetwork> subnets;
    subnets.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto m = grid.index(i);
        std::vector<ReluNetwork> factors;
        for (int k = 0; k < d; ++k) factors.push_back(coordinate_psi(grid, k, m[static_cast<std::size_t>(k)]));
        ReluNetwork net = d == 1 ? factors.front() : stack_shared_input(factors);
        // Outputs (psi_1..psi_k, v): fold the last two into x~(psi_k, v).
        for (int width = d; width > 1; --width) {
            const ReluNetwork step =
                width == 2 ? mult : stack_disjoint({identity_network(width - 2), mult});
            // Split through relu pairs first: merging the affine maps directly
            // would mix rounding between terms and lose exact zeros.
            net = compose(step, pad_to_depth(net, net.depth() + 1));
        }
        subnets.push_back(std::move(net));
    }
    return stack_shared_input(subnets);
}

Vec pou_approx_eval(const PouGrid& grid, double mult_delta, const Vec& x) {
    grid.validate();
    if (x.size() != grid.dim) throw DimensionError("point dimension does not match the grid");
    const int d = grid.dim;
    const int S = d > 1 ? mult_stages(static_cast<double>(d), mult_delta) : 0;
    Vec out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto m = grid.index(i);
        double v = psi(pou_argument(grid.resolution, m[static_cast<std::size_t>(d - 1)], x(d - 1)));
        for (int k = d - 2; k >= 0; --k) {
            v = mult_approx(psi(pou_argument(grid.resolution, m[static_cast<std::size_t>(k)], x(k))), v,
                            static_cast<double>(d), S);
        }
        out(static_cast<Eigen::Index>(i)) = v;
    }
    return out;
}

DecoderNet build_decoder_net(const Oracle& f, int dim, int out_dim, double lipschitz, double bound, double epsilon) {
    DecoderNet net;
    net.budget = ApproxBudget::make(dim, lipschitz, bound, epsilon);
    net.grid = {dim, net.budget.grid_resolution};
    if (out_dim < 1) throw ConfigError("output dimension must be positive");
    ReluNetwork grid_stage = build_pou_net(net.grid, net.budget.mult_delta);
    Mat values(out_dim, static_cast<Eigen::Index>(net.grid.size()));
    for (std::size_t i = 0; i < net.grid.size(); ++i) {
        const Vec y = f(net.grid.center(i));
        if (y.size() != out_dim) throw DimensionError("oracle output has the wrong dimension");
        values.col(static_cast<Eigen::Index>(i)) = y;
    }
    grid_stage.set_final_matrix(std::move(values));
    net.network = std::move(grid_stage);
    return net;
}

Vec decoder_approx_eval(const DecoderNet& net, const Oracle& f, const Vec& x) {
    const Vec phi = pou_approx_eval(net.grid, net.budget.mult_delta, x);
    Vec out = Vec::Zero(net.network.output_dim());
    for (std::size_t i = 0; i < net.grid.size(); ++i) {
        const double w = phi(static_cast<Eigen::Index>(i));
        if (w != 0.0) out += w * f(net.grid.center(i));
    }
    return out;
}

ComplexityReport complexity_report(const ReluNetwork& net) {
    ComplexityReport r;
    r.depth = net.depth();
    r.units = net.units();
    if (net.has_final_matrix()) {
        r.final_rows = static_cast<int>(net.final_matrix().rows());
        r.final_cols = static_cast<int>(net.final_matrix().cols());
    }
    return r;
}

ComplexityReport complexity_report(const DecoderNet& net) {
    auto r = complexity_report(net.network);
    r.grid_points = net.grid.size();
    r.grid_resolution = net.grid.resolution;
    r.mult_delta = net.budget.mult_delta;
    r.mult_stages = net.grid.dim > 1 ? mult_stages(static_cast<double>(net.grid.dim), net.budget.mult_delta) : 0;
    return r;
}

nlohmann::json to_json(const ComplexityReport& r) {
    return {{"depth", r.depth},
            {"units", r.units},
            {"final_matrix", {r.final_rows, r.final_cols}},
            {"grid_points", r.grid_points},
            {"grid_resolution", r.grid_resolution},
            {"mult_delta", r.mult_delta},
            {"mult_stages", r.mult_stages}};
}

void write_report(std::ostream& out, const ComplexityReport& r) {
    out << "depth            " << r.depth << '\n'
        << "units            " << r.units << '\n'
        << "final_matrix     " << r.final_rows << " x " << r.final_cols << '\n';
    if (r.grid_points > 0) {
        out << "grid_points      " << r.grid_points << " (N = " << r.grid_resolution << ")\n"
            << "mult_delta       " << r.mult_delta << " (" << r.mult_stages << " stages)\n";
    }
}

nlohmann::json to_json(const ReluNetwork& net) {
    std::vector<AffineLayer> layers = net.layers();
    const ReluNetwork layered(std::move(layers));
    nlohmann::json doc = {{"format", "atlas-relu-network"},
                          {"version", 1},
                          {"depth", net.depth()},
                          {"units", net.units()},
                          {"network", cae::dense_to_json(layered.to_dense_net())}};
    if (net.has_final_matrix()) {
        const Mat& m = net.final_matrix();
        doc["final_matrix"] = {{"rows", m.rows()},
                               {"cols", m.cols()},
                               {"values", std::vector<double>(m.data(), m.data() + m.size())}};
    } else {
        doc["final_matrix"] = nullptr;
    }
    return doc;
}

ReluNetwork relu_network_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "atlas-relu-network") throw ParseError("not a relu network file");
        if (doc.at("version").get<int>() != 1) throw ParseError("unsupported relu network version");
        const nn::DenseNet dense = cae::dense_from_json(doc.at("network"));
        std::vector<AffineLayer> layers;
        for (std::size_t l = 0; l < dense.num_layers(); ++l) {
            const auto want = l + 1 < dense.num_layers() ? nn::Activation::relu : nn::Activation::linear;
            if (dense.layer(l).act != want) throw ParseError("relu network layers must be relu with a linear output");
            layers.push_back({dense.weight(l), dense.bias(l)});
        }
        Mat final_matrix;
        if (!doc.at("final_matrix").is_null()) {
            const auto& fm = doc.at("final_matrix");
            const auto v = fm.at("values").get<std::vector<double>>();
            const auto rows = fm.at("rows").get<Eigen::Index>(), cols = fm.at("cols").get<Eigen::Index>();
            if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw ParseError("final matrix size mismatch");
            final_matrix = Eigen::Map<const Mat>(v.data(), rows, cols);
        }
        return ReluNetwork(std::move(layers), std::move(final_matrix));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed relu network: ") + e.what());
    }
}

void save(const std::filesystem::path& path, const ReluNetwork& net) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(net).dump(1) << '\n';
}

ReluNetwork load_relu_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON in ") + path.string() + ": " + e.what());
    }
    return relu_network_from_json(doc);
}

} // namespace atlas::approx
