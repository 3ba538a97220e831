#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "atlas/nn/dense_net.hpp"
#include "json.hpp"

namespace atlas::approx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct AffineLayer {
    Mat weight;  // out x in
    Vec bias;
};

/// Affine layers with relu between them (none after the last), optionally
/// followed by a single matrix multiplication.
class ReluNetwork {
public:
    ReluNetwork() = default;
    explicit ReluNetwork(std::vector<AffineLayer> layers, Mat final_matrix = {});

    int input_dim() const;
    /// Output width of the layered part (before the final matrix).
    int layered_output_dim() const;
    int output_dim() const;
    int depth() const { return static_cast<int>(layers_.size()); }
    /// Hidden units: outputs of every layer except the last.
    std::size_t units() const;
    bool has_final_matrix() const { return final_matrix_.size() > 0; }

    const std::vector<AffineLayer>& layers() const { return layers_; }
    const Mat& final_matrix() const { return final_matrix_; }
    void set_final_matrix(Mat m);

    /// Columns are inputs.
    Mat evaluate(const Mat& x) const;
    Vec evaluate(const Vec& x) const;

    /// Same map as a generic dense network (relu hidden layers, linear output;
    /// the final matrix becomes one more linear layer with zero bias).
    nn::DenseNet to_dense_net() const;

private:
    std::vector<AffineLayer> layers_;
    Mat final_matrix_;
};

/// Single affine layer x -> W x + b (depth 1, no units).
ReluNetwork affine_network(Mat weight, Vec bias);

/// outer(inner(x)); the adjoining affine layers are merged, so the depth is
/// depth(outer) + depth(inner) - 1.
ReluNetwork compose(const ReluNetwork& outer, const ReluNetwork& inner);

/// Appends exact identity stages (z = relu(z) - relu(-z)) until `depth` is reached.
ReluNetwork pad_to_depth(const ReluNetwork& net, int depth);

/// All nets read the same input; outputs are concatenated. Shallower nets are padded.
ReluNetwork stack_shared_input(const std::vector<ReluNetwork>& nets);

/// Inputs and outputs are both concatenated (block-diagonal). Shallower nets are padded.
ReluNetwork stack_disjoint(const std::vector<ReluNetwork>& nets);

// --- trapezoid unit and grid partition of unity ------------------------------

/// 1 on |x| < 1, 2 - |x| on 1 <= |x| <= 2, 0 beyond.
double psi(double x);

/// relu(x + 2) - relu(x + 1) - relu(x - 1) + relu(x - 2): depth 2, 4 units.
ReluNetwork psi_net();

/// relu(2 - |x|) - relu(1 - |x|) with |x| = relu(x) + relu(-x): depth 3, 4
/// units, and exactly zero for |x| >= 2 in floating point.
ReluNetwork psi_net_zero_exact();

struct PouGrid {
    int dim = 1;
    int resolution = 1;  // N: centers m / N, m in {0..N}^d

    std::size_t size() const;  // (N + 1)^d
    /// Multi-index of flat index `flat` (first coordinate fastest).
    std::vector<int> index(std::size_t flat) const;
    Vec center(std::size_t flat) const;
    void validate() const;
};

/// phi_m(x) = prod_k psi(3 N (x_k - m_k / N)).
double pou_eval(const PouGrid& grid, const std::vector<int>& m, const Vec& x);
/// All (N + 1)^d values at x.
Vec pou_eval_all(const PouGrid& grid, const Vec& x);

// --- multiplication ------------------------------------------------------------

/// Sawtooth stages needed for |x~y - xy| <= delta on [-K, K]^2.
int mult_stages(double bound, double delta);

/// Closed-form value of the network built by mult_net(bound, delta).
double mult_approx(double x, double y, double bound, int stages);

/// x~y = K^2 (sq~(|x + y| / 2K) - sq~(|x - y| / 2K)), sq~ the sawtooth
/// interpolant of t^2 on [0, 1]. Exactly zero when x = 0 or y = 0.
ReluNetwork mult_net(double bound, double delta);

// --- budget and assembled networks ---------------------------------------------

struct ApproxBudget {
    double epsilon = 0.1;
    double lipschitz = 1.0;
    double bound = 1.0;  // sup |f|
    int dim = 1;
    int grid_resolution = 0;  // smallest N > 2^(d+1) L sqrt(d) / eps
    double mult_delta = 0.0;  // eps / (2^(d+1) M d)

    static ApproxBudget make(int dim, double lipschitz, double bound, double epsilon);
};

inline constexpr int max_grid_dim = 3;

/// Networks phi~_m for every grid point, stacked on the shared input x.
/// phi~_m = x~(psi_1, x~(psi_2, ...)) with multiplications of accuracy
/// mult_delta on [-d, d]^2; d = 1 needs no multiplication.
ReluNetwork build_pou_net(const PouGrid& grid, double mult_delta);

/// Closed-form counterpart of build_pou_net at x.
Vec pou_approx_eval(const PouGrid& grid, double mult_delta, const Vec& x);

using Oracle = std::function<Vec(const Vec&)>;

struct ComplexityReport {
    int depth = 0;
    std::size_t units = 0;
    int final_rows = 0;
    int final_cols = 0;
    std::size_t grid_points = 0;
    int grid_resolution = 0;
    double mult_delta = 0.0;
    int mult_stages = 0;
};

struct DecoderNet {
    ReluNetwork network;  // grid stage plus final matrix of oracle values f(m / N)
    ApproxBudget budget;
    PouGrid grid;
};

/// f~(x) = sum_m phi~_m(x) f(m / N) for f : [0,1]^d -> R^D with Lipschitz
/// constant L and sup bound M (both caller-asserted).
DecoderNet build_decoder_net(const Oracle& f, int dim, int out_dim, double lipschitz, double bound, double epsilon);

/// Closed-form counterpart of the decoder network at x.
Vec decoder_approx_eval(const DecoderNet& net, const Oracle& f, const Vec& x);

ComplexityReport complexity_report(const ReluNetwork& net);
ComplexityReport complexity_report(const DecoderNet& net);
nlohmann::json to_json(const ComplexityReport& report);
void write_report(std::ostream& out, const ComplexityReport& report);

nlohmann::json to_json(const ReluNetwork& net);
ReluNetwork relu_network_from_json(const nlohmann::json& doc);
void save(const std::filesystem::path& path, const ReluNetwork& net);
ReluNetwork load_relu_network(const std::filesystem::path& path);

} // namespace atlas::approx
