#include "atlas/cae/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "atlas/errors.hpp"
#include "atlas/nn/adam.hpp"
#include "atlas/parallel.hpp"

namespace atlas::cae {

namespace {

constexpr double prior_mean = 0.5;
constexpr double prior_sd = 0.25;
constexpr double prior_var = prior_sd * prior_sd;
constexpr double tiny = 1e-300;

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

void check_function_setup(const CaeModel& model, const TrainConfig& cfg, bool any_labeled) {
    if (!any_labeled) return;
    if (cfg.function_loss == FunctionLoss::none) {
        throw ConfigError("labeled points need a function loss (function_loss is none)");
    }
    if (model.config().latent_function == LatentFunctionKind::none) {
        throw ConfigError("labeled points need latent functions (latent_function is none)");
    }
    if (cfg.function_loss == FunctionLoss::cross_entropy &&
        model.config().function_output != FunctionOutput::categorical) {
        throw ConfigError("cross_entropy function loss needs categorical outputs");
    }
}

/// Per-point function loss of one head output column and its gradient.
double function_term(const CaeConfig& mc, FunctionLoss kind, const Eigen::Ref<const Vec>& out, double target,
                     Eigen::Ref<Vec> grad) {
    grad.setZero();
    if (mc.function_output == FunctionOutput::categorical) {
        const auto label = static_cast<Eigen::Index>(std::llround(target));
        if (label < 0 || label >= out.size()) {
            throw DimensionError("class label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(out.size()) + ")");
        }
        if (kind == FunctionLoss::cross_entropy) {
            const double q = std::max(out(label), tiny);
            grad(label) = -1.0 / q;
            return -std::log(q);
        }
        double s = 0.0;
        for (Eigen::Index c = 0; c < out.size(); ++c) {
            const double r = out(c) - (c == label ? 1.0 : 0.0);
            grad(c) = 2.0 * r;
            s += r * r;
        }
        return s;
    }
    const double r = out(0) - target;
    grad(0) = 2.0 * r;
    return r * r;
}

struct ChartPass {
    nn::Tape trunk, mu, sigma, dec, fn;
    Mat h, mu_out, sig_out, z, mask, noise, y, f_grad;
    Vec e, kl, floss;
    Vec grad;
};

} // namespace

std::string to_string(FunctionLoss kind) {
    switch (kind) {
    case FunctionLoss::cross_entropy: return "cross_entropy";
    case FunctionLoss::mse: return "mse";
    case FunctionLoss::none: return "none";
    }
    return "none";
}

std::string to_string(TargetTemperature kind) {
    return kind == TargetTemperature::batch_median ? "batch_median" : "best_median";
}

TargetTemperature target_temperature_from_string(const std::string& name) {
    for (auto k : {TargetTemperature::batch_median, TargetTemperature::best_median}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown target temperature '" + name + "'");
}

FunctionLoss function_loss_from_string(const std::string& name) {
    for (auto k : {FunctionLoss::cross_entropy, FunctionLoss::mse, FunctionLoss::none}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown function loss '" + name + "'");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(ce_weight >= 0.0)) throw ConfigError("ce_weight must be >= 0");
    if (!(lr > 0.0) || !(init_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (epochs_init < 0 || epochs_main <= 0) throw ConfigError("epoch counts must be positive");
    if (!(removal_threshold >= 0.0 && removal_threshold < 1.0)) {
        throw ConfigError("removal_threshold must lie in [0, 1)");
    }
    if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be >= 0");
    if (!(lift_scale >= 0.0)) throw ConfigError("lift_scale must be >= 0");
    if (redundancy_ratio != 0.0 && !(redundancy_ratio >= 1.0)) {
        throw ConfigError("redundancy_ratio must be 0 (off) or >= 1");
    }
}

int TrainConfig::removal_epoch() const { return removal_check_epoch < 0 ? epochs_main / 3 : removal_check_epoch; }

double kl_to_center(const Vec& mu, const Vec& sigma) {
    if (mu.size() != sigma.size()) throw DimensionError("mu and sigma differ in length");
    double kl = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        const double s = sigma(k);
        if (!(s > 0.0)) throw DomainError("kl_to_center needs sigma > 0");
        const double dm = mu(k) - prior_mean;
        kl += std::log(prior_sd / s) + (s * s + dm * dm) / (2.0 * prior_var) - 0.5;
    }
    return std::max(kl, 0.0);
}

Batch Batch::from_cloud(const data::PointCloud& cloud, const std::vector<std::size_t>& rows) {
    Batch b;
    const auto B = static_cast<Eigen::Index>(rows.size());
    b.x.resize(cloud.dim(), B);
    b.target = Vec::Zero(B);
    b.labeled.assign(rows.size(), false);
    for (Eigen::Index j = 0; j < B; ++j) {
        const auto r = rows[static_cast<std::size_t>(j)];
        b.x.col(j) = cloud.points.row(static_cast<Eigen::Index>(r)).transpose();
        if (cloud.labeled.at(r)) {
            if (cloud.labels) {
                b.target(j) = (*cloud.labels)[r];
                b.labeled[static_cast<std::size_t>(j)] = true;
            } else if (cloud.function_values) {
                b.target(j) = (*cloud.function_values)[r];
                b.labeled[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    return b;
}

Batch Batch::from_cloud(const data::PointCloud& cloud) {
    std::vector<std::size_t> rows(cloud.size());
    std::iota(rows.begin(), rows.end(), 0);
    return from_cloud(cloud, rows);
}

LossResult training_loss(const CaeModel& model, const Batch& batch, const TrainConfig& cfg, const LossOptions& opt) {
    const auto& mc = model.config();
    const int N = model.num_charts();
    const Eigen::Index B = batch.x.cols();
    if (batch.x.rows() != mc.ambient_dim) throw DimensionError("batch has wrong ambient dimension");
    if (batch.target.size() != B || batch.labeled.size() != static_cast<std::size_t>(B)) {
        throw DimensionError("batch annotations do not match point count");
    }
    if (B == 0) throw DimensionError("empty batch");
    const bool any_labeled = std::find(batch.labeled.begin(), batch.labeled.end(), true) != batch.labeled.end();
    check_function_setup(model, cfg, any_labeled);
    if (opt.noise && opt.noise->size() != static_cast<std::size_t>(N)) {
        throw DimensionError("noise needs one matrix per chart");
    }
    if (opt.fixed_target && (opt.fixed_target->rows() != N || opt.fixed_target->cols() != B)) {
        throw DimensionError("fixed predictor target must be N x B");
    }

    const Mat xn = model.normalizer().apply(batch.x);
    const double lam = cfg.lambda;
    const bool use_f = any_labeled;
    std::vector<ChartPass> pass(static_cast<std::size_t>(N));

    parallel_for(static_cast<std::size_t>(N), [&](std::size_t i) {
        auto& cp = pass[i];
        const auto& ch = model.chart(static_cast<int>(i));
        cp.h = ch.trunk.empty() ? xn : ch.trunk.forward(xn, cp.trunk);
        cp.mu_out = ch.mu_head.forward(cp.h, cp.mu);
        cp.sig_out = ch.sigma_head.forward(cp.h, cp.sigma);
        Mat raw = cp.mu_out;
        if (opt.noise) {
            cp.noise = (*opt.noise)[i];
            if (cp.noise.rows() != mc.latent_dim || cp.noise.cols() != B) {
                throw DimensionError("noise matrix must be d x B");
            }
            raw += cp.sig_out.cwiseProduct(cp.noise);
        }
        cp.mask = ((raw.array() > 0.0) && (raw.array() < 1.0)).cast<double>();
        cp.z = raw.cwiseMax(0.0).cwiseMin(1.0);
        cp.y = ch.decoder.forward(cp.z, cp.dec);
        cp.e = (cp.y - xn).colwise().squaredNorm().transpose();
        if (!(cp.sig_out.array() > 0.0).all() || !cp.sig_out.allFinite() || !cp.mu_out.allFinite()) {
            throw NumericalError("latent code of chart " + std::to_string(i) + " is not finite or has zero scale");
        }
        cp.kl.resize(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            cp.kl(b) = cfg.kl_weight * kl_to_center(cp.mu_out.col(b), cp.sig_out.col(b));
        }
        cp.floss = Vec::Zero(B);
        if (use_f) {
            const Mat fin = ch.latent_fn.input_dim() == 0 ? Mat(0, B) : cp.z;
            const Mat fout = ch.latent_fn.forward(fin, cp.fn);
            cp.f_grad = Mat::Zero(fout.rows(), B);
            for (Eigen::Index b = 0; b < B; ++b) {
                if (!batch.labeled[static_cast<std::size_t>(b)]) continue;
                cp.floss(b) = function_term(mc, cfg.function_loss, fout.col(b), batch.target(b), cp.f_grad.col(b));
            }
        }
    });

    nn::Tape ptape;
    const Mat p = model.predictor().forward(xn, ptape);

    Mat e(N, B);
    for (int i = 0; i < N; ++i) e.row(i) = pass[static_cast<std::size_t>(i)].e.transpose();
    std::vector<int> best(static_cast<std::size_t>(B));
    std::vector<double> mins(static_cast<std::size_t>(B));
    // With function_aware_assignment the best chart and the target see e_i + F_i.
    Mat sel = e;
    if (use_f && cfg.function_aware_assignment) {
        for (int i = 0; i < N; ++i) sel.row(i) += pass[static_cast<std::size_t>(i)].floss.transpose();
    }
    for (Eigen::Index b = 0; b < B; ++b) {
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < N; ++i) {
            if (sel(i, b) < sel(arg, b)) arg = i;
        }
        best[static_cast<std::size_t>(b)] = static_cast<int>(arg);
        mins[static_cast<std::size_t>(b)] = e(arg, b);
    }

    LossResult res;
    if (cfg.temperature == TargetTemperature::batch_median) {
        res.temperature = std::max(median(std::vector<double>(e.data(), e.data() + e.size())), 1e-12);
    } else {
        res.temperature = std::max(median(mins), 1e-12);
    }
    if (opt.fixed_target) {
        res.target = *opt.fixed_target;
    } else {
        res.target = nn::activate(nn::Activation::softmax, 1.0, Mat(-sel / res.temperature));
    }

    auto& parts = res.parts;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        parts.min_recon += mins[static_cast<std::size_t>(b)];
        for (int i = 0; i < N; ++i) {
            const auto& cp = pass[static_cast<std::size_t>(i)];
            parts.weighted_recon += p(i, b) * cp.e(b);
            parts.function_loss += p(i, b) * cp.floss(b);
            parts.kl += p(i, b) * cp.kl(b);
            parts.predictor_ce -= res.target(i, b) * std::log(std::max(p(i, b), tiny));
        }
    }
    parts.min_recon *= inv_b;
    parts.weighted_recon *= inv_b;
    parts.function_loss *= inv_b;
    parts.kl *= inv_b;
    parts.predictor_ce = std::max(parts.predictor_ce * inv_b, 0.0);
    parts.total = parts.min_recon + lam * (parts.weighted_recon + parts.function_loss + parts.kl) +
                  cfg.ce_weight * parts.predictor_ce;
    if (!opt.want_gradient) return res;

    Mat dp(N, B);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int i = 0; i < N; ++i) {
            const auto& cp = pass[static_cast<std::size_t>(i)];
            dp(i, b) = (lam * (cp.e(b) + cp.floss(b) + cp.kl(b)) -
                        cfg.ce_weight * res.target(i, b) / std::max(p(i, b), tiny)) *
                       inv_b;
        }
    }

    parallel_for(static_cast<std::size_t>(N), [&](std::size_t i) {
        auto& cp = pass[i];
        const auto& ch = model.chart(static_cast<int>(i));
        Vec weight(B);  // lambda * p_i / B
        Vec coef(B);    // d total / d e_i
        for (Eigen::Index b = 0; b < B; ++b) {
            weight(b) = lam * p(static_cast<Eigen::Index>(i), b) * inv_b;
            coef(b) = weight(b) + (best[static_cast<std::size_t>(b)] == static_cast<int>(i) ? inv_b : 0.0);
        }
        const Mat dy = 2.0 * (cp.y - xn) * coef.asDiagonal();
        auto g_dec = ch.decoder.backward(cp.dec, dy);
        Mat dz = std::move(g_dec.inputs);
        Vec g_fn = Vec::Zero(static_cast<Eigen::Index>(ch.latent_fn.param_count()));
        if (use_f) {
            auto g = ch.latent_fn.backward(cp.fn, cp.f_grad * weight.asDiagonal());
            g_fn = std::move(g.params);
            if (ch.latent_fn.input_dim() > 0) dz += g.inputs;
        }
        dz.array() *= cp.mask.array();
        Mat dmu = dz;
        Mat dsig = Mat::Zero(dz.rows(), dz.cols());
        if (opt.noise) dsig = dz.cwiseProduct(cp.noise);
        for (Eigen::Index b = 0; b < B; ++b) {
            for (Eigen::Index k = 0; k < dz.rows(); ++k) {
                const double m = cp.mu_out(k, b);
                const double s = cp.sig_out(k, b);
                dmu(k, b) += cfg.kl_weight * weight(b) * (m - prior_mean) / prior_var;
                dsig(k, b) += cfg.kl_weight * weight(b) * (-1.0 / s + s / prior_var);
            }
        }
        auto g_mu = ch.mu_head.backward(cp.mu, dmu);
        auto g_sig = ch.sigma_head.backward(cp.sigma, dsig);
        Vec g_trunk = Vec::Zero(static_cast<Eigen::Index>(ch.trunk.param_count()));
        if (!ch.trunk.empty()) {
            g_trunk = ch.trunk.backward(cp.trunk, g_mu.inputs + g_sig.inputs).params;
        }
        cp.grad.resize(g_trunk.size() + g_mu.params.size() + g_sig.params.size() + g_dec.params.size() +
                       g_fn.size());
        cp.grad << g_trunk, g_mu.params, g_sig.params, g_dec.params, g_fn;
    });

    const auto g_pred = model.predictor().backward(ptape, dp);
    res.gradient.resize(static_cast<Eigen::Index>(model.parameter_count()));
    Eigen::Index off = 0;
    res.gradient.segment(off, g_pred.params.size()) = g_pred.params;
    off += g_pred.params.size();
    for (const auto& cp : pass) {
        res.gradient.segment(off, cp.grad.size()) = cp.grad;
        off += cp.grad.size();
    }
    return res;
}

LossBreakdown training_loss(const CaeModel& model, const Vec& x, std::optional<double> f_value,
                            const TrainConfig& config) {
    Batch b;
    b.x = Mat(x);
    b.target = Vec::Constant(1, f_value.value_or(0.0));
    b.labeled = {f_value.has_value()};
    LossOptions opt;
    opt.want_gradient = false;
    return training_loss(model, b, config, opt).parts;
}

std::vector<std::size_t> farthest_point_sample(const Eigen::MatrixXd& rows, int count, std::size_t start) {
    const auto n = static_cast<std::size_t>(rows.rows());
    if (count <= 0) throw ConfigError("farthest point sampling needs count >= 1");
    if (static_cast<std::size_t>(count) > n) {
        throw ConfigError("cannot select " + std::to_string(count) + " points from " + std::to_string(n));
    }
    if (start >= n) throw ConfigError("start index out of range");
    std::vector<std::size_t> chosen{start};
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = (rows.row(static_cast<Eigen::Index>(i)) - rows.row(static_cast<Eigen::Index>(start))).squaredNorm();
    }
    dist[start] = -1.0;
    while (chosen.size() < static_cast<std::size_t>(count)) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (dist[i] > dist[arg]) arg = i;
        }
        chosen.push_back(arg);
        dist[arg] = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (dist[i] < 0.0) continue;
            const double d2 =
                (rows.row(static_cast<Eigen::Index>(i)) - rows.row(static_cast<Eigen::Index>(arg))).squaredNorm();
            dist[i] = std::min(dist[i], d2);
        }
    }
    return chosen;
}

std::vector<std::size_t> farthest_point_sample(const Eigen::MatrixXd& rows, int count, std::mt19937_64& rng) {
    if (rows.rows() == 0) throw ConfigError("farthest point sampling on an empty set");
    std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(rows.rows()) - 1);
    return farthest_point_sample(rows, count, pick(rng));
}

Eigen::MatrixXd lifted_coordinates(const CaeModel& model, const data::PointCloud& cloud, const TrainConfig& cfg) {
    const Mat xn = model.normalizer().apply(cloud.points.transpose());
    const auto& mc = model.config();
    const bool lift = cloud.has_supervision() && mc.latent_function != LatentFunctionKind::none;
    const int extra = lift ? mc.function_dim() : 0;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(xn.cols(), xn.rows() + extra);
    out.leftCols(xn.rows()) = xn.transpose();
    if (!lift) return out;
    const Batch all = Batch::from_cloud(cloud);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        if (!all.labeled[static_cast<std::size_t>(r)]) continue;
        if (mc.function_output == FunctionOutput::categorical) {
            const auto c = static_cast<Eigen::Index>(std::llround(all.target(r)));
            if (c >= 0 && c < extra) out(r, xn.rows() + c) = cfg.lift_scale;
        } else {
            out(r, xn.rows()) = cfg.lift_scale * all.target(r);
        }
    }
    return out;
}

InitResult initialize(CaeModel& model, const data::PointCloud& cloud, const TrainConfig& cfg) {
    cfg.validate();
    cloud.validate();
    if (cloud.dim() != model.config().ambient_dim) {
        throw DimensionError("cloud dimension " + std::to_string(cloud.dim()) + " does not match model " +
                             std::to_string(model.config().ambient_dim));
    }
    const int N = model.num_charts();
    model.fit_normalizer(cloud.points);
    const auto lifted = lifted_coordinates(model, cloud, cfg);

    std::vector<std::size_t> candidates;
    const bool supervised = cloud.has_supervision() && model.config().latent_function != LatentFunctionKind::none;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!supervised || cloud.labeled[i]) candidates.push_back(i);
    }
    if (candidates.size() < static_cast<std::size_t>(N)) {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (supervised && cloud.labeled[i]) continue;
            candidates.push_back(i);
        }
        std::sort(candidates.begin(), candidates.end());
    }
    Eigen::MatrixXd cand_rows(static_cast<Eigen::Index>(candidates.size()), lifted.cols());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        cand_rows.row(static_cast<Eigen::Index>(k)) = lifted.row(static_cast<Eigen::Index>(candidates[k]));
    }
    std::mt19937_64 rng(cfg.seed);
    InitResult result;
    for (auto k : farthest_point_sample(cand_rows, N, rng)) result.assigned.push_back(candidates[k]);

    const Batch seeds = Batch::from_cloud(cloud, result.assigned);
    const bool use_f = cfg.function_loss != FunctionLoss::none &&
                       model.config().latent_function != LatentFunctionKind::none &&
                       std::find(seeds.labeled.begin(), seeds.labeled.end(), true) != seeds.labeled.end();
    const Mat xn = model.normalizer().apply(seeds.x);
    const int d = model.config().latent_dim;
    const Mat center = Mat::Constant(d, 1, 0.5);
    const Mat eye = Mat::Identity(N, N);
    const double inv_n = 1.0 / N;

    nn::AdamState adam(static_cast<Eigen::Index>(model.parameter_count()), {cfg.init_lr, 0.9, 0.999, 1e-8});
    Vec theta = model.flat_params();
    for (int step = 0; step < cfg.epochs_init; ++step) {
        std::vector<Vec> chart_grads(static_cast<std::size_t>(N));
        std::vector<double> chart_loss(static_cast<std::size_t>(N), 0.0);
        parallel_for(static_cast<std::size_t>(N), [&](std::size_t jj) {
            const int j = static_cast<int>(jj);
            const auto& ch = model.chart(j);
            const auto col = static_cast<Eigen::Index>(jj);
            nn::Tape t_trunk, t_mu, t_dec, t_fn;
            const Mat xj = xn.col(col);
            const Mat h = ch.trunk.empty() ? xj : ch.trunk.forward(xj, t_trunk);
            const Mat mu = ch.mu_head.forward(h, t_mu);
            const Mat dmu = 2.0 * inv_n * (mu.array() - 0.5).matrix();
            double loss = (mu.array() - 0.5).square().sum();
            const Mat y = ch.decoder.forward(center, t_dec);
            loss += (y - xj).squaredNorm();
            const auto g_dec = ch.decoder.backward(t_dec, 2.0 * inv_n * (y - xj));
            const auto g_mu = ch.mu_head.backward(t_mu, dmu);
            Vec g_trunk = Vec::Zero(static_cast<Eigen::Index>(ch.trunk.param_count()));
            if (!ch.trunk.empty()) g_trunk = ch.trunk.backward(t_trunk, g_mu.inputs).params;
            Vec g_sig = Vec::Zero(static_cast<Eigen::Index>(ch.sigma_head.param_count()));
            Vec g_fn = Vec::Zero(static_cast<Eigen::Index>(ch.latent_fn.param_count()));
            if (use_f && seeds.labeled[jj]) {
                const Mat fin = ch.latent_fn.input_dim() == 0 ? Mat(0, 1) : center;
                const Mat fout = ch.latent_fn.forward(fin, t_fn);
                Vec fg(fout.rows());
                loss += function_term(model.config(), cfg.function_loss, fout.col(0), seeds.target(col), fg);
                g_fn = ch.latent_fn.backward(t_fn, Mat(fg * inv_n)).params;
            }
            chart_loss[jj] = loss * inv_n;
            Vec g(g_trunk.size() + g_mu.params.size() + g_sig.size() + g_dec.params.size() + g_fn.size());
            g << g_trunk, g_mu.params, g_sig, g_dec.params, g_fn;
            chart_grads[jj] = std::move(g);
        });
        nn::Tape ptape;
        const Mat p = model.predictor().forward(xn, ptape);
        const auto g_pred = model.predictor().backward(ptape, 2.0 * inv_n * (p - eye));
        double total = (p - eye).squaredNorm() * inv_n;
        Vec grad(theta.size());
        Eigen::Index off = 0;
        grad.segment(off, g_pred.params.size()) = g_pred.params;
        off += g_pred.params.size();
        for (int j = 0; j < N; ++j) {
            const auto& g = chart_grads[static_cast<std::size_t>(j)];
            grad.segment(off, g.size()) = g;
            off += g.size();
            total += chart_loss[static_cast<std::size_t>(j)];
        }
        if (!std::isfinite(total)) {
            throw NumericalError("initialization loss became non-finite at step " + std::to_string(step));
        }
        result.loss_log.push_back(total);
        adam.step(theta, grad);
        model.set_flat_params(theta);
    }
    return result;
}

std::vector<double> chart_usage(const CaeModel& model, const Eigen::MatrixXd& rows) {
    const Mat p = model.chart_probabilities_batch(rows.transpose());
    std::vector<double> usage(static_cast<std::size_t>(model.num_charts()), 0.0);
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < p.rows(); ++i) {
            if (p(i, b) > p(arg, b)) arg = i;
        }
        usage[static_cast<std::size_t>(arg)] += 1.0;
    }
    for (auto& u : usage) u /= std::max<Eigen::Index>(p.cols(), 1);
    return usage;
}

namespace {

/// Squared reconstruction error of every chart on every point at the
/// deterministic code, normalized units, N x n.
Mat chart_errors(const CaeModel& model, const Mat& x) {
    const Mat xn = model.normalizer().apply(x);
    const auto mus = model.encode_mu_batch(x);
    Mat e(model.num_charts(), x.cols());
    for (int i = 0; i < model.num_charts(); ++i) {
        const Mat y = model.chart(i).decoder.forward(mus[static_cast<std::size_t>(i)]);
        e.row(i) = (y - xn).colwise().squaredNorm();
    }
    return e;
}

} // namespace

std::vector<int> remove_charts(CaeModel& model, const data::PointCloud& cloud, double rho, double redundancy_ratio) {
    std::vector<int> alive(static_cast<std::size_t>(model.num_charts()));
    std::iota(alive.begin(), alive.end(), 0);
    std::vector<int> removed;

    const auto usage = chart_usage(model, cloud.points);
    std::vector<int> drop;
    for (int i = 0; i < model.num_charts(); ++i) {
        if (usage[static_cast<std::size_t>(i)] < rho) drop.push_back(i);
    }
    if (drop.size() == usage.size()) {
        const auto top = static_cast<int>(std::max_element(usage.begin(), usage.end()) - usage.begin());
        drop.erase(std::find(drop.begin(), drop.end(), top));
    }
    if (!drop.empty()) {
        model.remove_charts(drop);
        for (int i : drop) removed.push_back(i);
        std::vector<int> next;
        for (int i : alive) {
            if (std::find(drop.begin(), drop.end(), i) == drop.end()) next.push_back(i);
        }
        alive = std::move(next);
    }

    if (redundancy_ratio > 0.0) {
        const Mat x = cloud.points.transpose();
        while (model.num_charts() > 1) {
            const Mat e = chart_errors(model, x);
            const Mat p = model.chart_probabilities_batch(x);
            const int N = model.num_charts();
            std::vector<double> own(static_cast<std::size_t>(N), 0.0), alt(static_cast<std::size_t>(N), 0.0);
            std::vector<int> count(static_cast<std::size_t>(N), 0);
            for (Eigen::Index b = 0; b < x.cols(); ++b) {
                Eigen::Index arg = 0;
                for (Eigen::Index i = 1; i < N; ++i) {
                    if (p(i, b) > p(arg, b)) arg = i;
                }
                double other = std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < N; ++i) {
                    if (i != arg) other = std::min(other, e(i, b));
                }
                const auto a = static_cast<std::size_t>(arg);
                own[a] += e(arg, b);
                alt[a] += other;
                ++count[a];
            }
            const double scale = e.colwise().minCoeff().mean();
            int victim = -1;
            for (int i = 0; i < N; ++i) {
                const auto k = static_cast<std::size_t>(i);
                if (count[k] == 0) continue;
                const double own_mean = own[k] / count[k];
                const double alt_mean = alt[k] / count[k];
                if (alt_mean > redundancy_ratio * std::max(own_mean, scale)) continue;
                if (victim < 0 || count[k] < count[static_cast<std::size_t>(victim)]) victim = i;
            }
            if (victim < 0) break;
            model.remove_charts({victim});
            removed.push_back(alive[static_cast<std::size_t>(victim)]);
            alive.erase(alive.begin() + victim);
        }
    }
    std::sort(removed.begin(), removed.end());
    return removed;
}

TrainResult train(CaeModel& model, const data::PointCloud& cloud, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    cloud.validate();
    if (cloud.dim() != model.config().ambient_dim) {
        throw DimensionError("cloud dimension does not match model");
    }
    if (cloud.size() == 0) throw DimensionError("empty training cloud");
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int d = model.config().latent_dim;
    const int removal_at = cfg.removal_epoch();
    const bool prune = cfg.removal_threshold > 0.0 || cfg.redundancy_ratio > 0.0;

    TrainResult result;
    nn::AdamState adam(static_cast<Eigen::Index>(model.parameter_count()), {cfg.lr, 0.9, 0.999, 1e-8});
    Vec theta = model.flat_params();
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs_main; ++epoch) {
        if (prune && epoch == removal_at) {
            const auto gone = remove_charts(model, cloud, cfg.removal_threshold, cfg.redundancy_ratio);
            result.removed.insert(result.removed.end(), gone.begin(), gone.end());
            if (!gone.empty()) {
                adam = nn::AdamState(static_cast<Eigen::Index>(model.parameter_count()), adam.config());
                theta = model.flat_params();
            }
        }
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown acc;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Batch batch = Batch::from_cloud(cloud, rows);
            std::vector<Mat> noise;
            LossOptions opt;
            if (cfg.sample_latent) {
                for (int i = 0; i < model.num_charts(); ++i) {
                    Mat z(d, batch.x.cols());
                    for (Eigen::Index c = 0; c < z.cols(); ++c) {
                        for (Eigen::Index r = 0; r < d; ++r) z(r, c) = gauss(rng);
                    }
                    noise.push_back(std::move(z));
                }
                opt.noise = &noise;
            }
            const auto res = training_loss(model, batch, cfg, opt);
            if (!std::isfinite(res.parts.total) || !res.gradient.allFinite()) {
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                     std::to_string(start) + " (total " + std::to_string(res.parts.total) + ")");
            }
            const double w = static_cast<double>(rows.size()) / static_cast<double>(order.size());
            acc.min_recon += w * res.parts.min_recon;
            acc.weighted_recon += w * res.parts.weighted_recon;
            acc.function_loss += w * res.parts.function_loss;
            acc.kl += w * res.parts.kl;
            acc.predictor_ce += w * res.parts.predictor_ce;
            adam.step(theta, res.gradient);
            model.set_flat_params(theta);
        }
        acc.total = acc.min_recon + cfg.lambda * (acc.weighted_recon + acc.function_loss + acc.kl) +
                    cfg.ce_weight * acc.predictor_ce;
        EpochRecord rec{epoch, acc, model.num_charts()};
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

void write_loss_log(std::ostream& out, const std::vector<EpochRecord>& log) {
    out << "epoch,min_recon,weighted_recon,function_loss,kl,predictor_ce,total,active_charts\n";
    out << std::setprecision(17);
    for (const auto& r : log) {
        out << r.epoch << ',' << r.loss.min_recon << ',' << r.loss.weighted_recon << ',' << r.loss.function_loss << ','
            << r.loss.kl << ',' << r.loss.predictor_ce << ',' << r.loss.total << ',' << r.active_charts << '\n';
    }
}

void save_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_loss_log(out, log);
}

// ---------------------------------------------------------------------------

VaeModel::VaeModel(int input_dim, const VaeConfig& cfg) : input_dim_(input_dim), config_(cfg) {
    if (input_dim < 1 || cfg.latent_dim < 1 || cfg.hidden_width < 1) {
        throw ConfigError("vae needs positive dimensions");
    }
    const int h = cfg.hidden_width;
    encoder_ = nn::DenseNet({{input_dim, h, nn::Activation::relu, 1.0}, {h, h, nn::Activation::relu, 1.0}});
    mu_head_ = nn::DenseNet({{h, cfg.latent_dim, nn::Activation::linear, 1.0}});
    if (!cfg.fixed_sigma) {
        sigma_head_ = nn::DenseNet({{h, cfg.latent_dim, nn::Activation::softplus, 1.0}});
    }
    const std::vector<int> hidden{h, h};
    decoder_ = nn::DenseNet::mlp(cfg.latent_dim, hidden, input_dim, nn::Activation::relu, nn::Activation::linear);
    std::mt19937_64 rng(cfg.seed);
    encoder_.init_xavier(rng);
    mu_head_.init_xavier(rng);
    if (!sigma_head_.empty()) sigma_head_.init_xavier(rng);
    decoder_.init_xavier(rng);
    mean_ = Vec::Zero(input_dim);
    stddev_ = Vec::Ones(input_dim);
}

std::size_t VaeModel::parameter_count() const {
    return encoder_.param_count() + mu_head_.param_count() + sigma_head_.param_count() + decoder_.param_count();
}

void VaeModel::fit_standardizer(const Eigen::MatrixXd& rows) {
    if (rows.cols() != input_dim_) throw DimensionError("standardizer fit has wrong width");
    mean_ = rows.colwise().mean().transpose();
    stddev_.resize(input_dim_);
    for (int k = 0; k < input_dim_; ++k) {
        const double var = (rows.col(k).array() - mean_(k)).square().mean();
        stddev_(k) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
}

Mat VaeModel::standardize(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != input_dim_) throw DimensionError("vae input has wrong width");
    return ((rows.transpose().colwise() - mean_).array().colwise() / stddev_.array()).matrix();
}

double VaeModel::loss(const Mat& x, const Mat* noise, Vec* gradient) const {
    const Eigen::Index B = x.cols();
    nn::Tape t_enc, t_mu, t_sig, t_dec;
    const Mat h = encoder_.forward(x, t_enc);
    const Mat mu = mu_head_.forward(h, t_mu);
    Mat sig = config_.fixed_sigma ? Mat::Constant(mu.rows(), B, *config_.fixed_sigma) : sigma_head_.forward(h, t_sig);
    Mat z = mu;
    if (noise) z += sig.cwiseProduct(*noise);
    const Mat y = decoder_.forward(z, t_dec);
    const double inv_b = 1.0 / static_cast<double>(B);
    double total = (y - x).squaredNorm();
    const double beta = config_.kl_weight;
    if (beta > 0.0) {
        total += beta * (0.5 * (mu.array().square() + sig.array().square() - 1.0) - sig.array().log()).sum();
    }
    total *= inv_b;
    if (!gradient) return total;

    const auto g_dec = decoder_.backward(t_dec, 2.0 * inv_b * (y - x));
    Mat dmu = g_dec.inputs;
    Mat dsig = noise ? Mat(g_dec.inputs.cwiseProduct(*noise)) : Mat::Zero(mu.rows(), B);
    if (beta > 0.0) {
        dmu += beta * inv_b * mu;
        dsig.array() += beta * inv_b * (sig.array() - 1.0 / sig.array());
    }
    const auto g_mu = mu_head_.backward(t_mu, dmu);
    Mat dh = g_mu.inputs;
    Vec g_sig;
    if (!sigma_head_.empty()) {
        auto g = sigma_head_.backward(t_sig, dsig);
        dh += g.inputs;
        g_sig = std::move(g.params);
    }
    const auto g_enc = encoder_.backward(t_enc, dh);
    gradient->resize(static_cast<Eigen::Index>(parameter_count()));
    *gradient << g_enc.params, g_mu.params, g_sig, g_dec.params;
    return total;
}

Eigen::MatrixXd VaeModel::reconstruct(const Eigen::MatrixXd& rows) const {
    const Mat x = standardize(rows);
    const Mat y = decoder_.forward(mu_head_.forward(encoder_.forward(x)));
    return ((y.array().colwise() * stddev_.array()).matrix().colwise() + mean_).transpose();
}

Vec VaeModel::flat_params() const {
    Vec out(static_cast<Eigen::Index>(parameter_count()));
    out << encoder_.params(), mu_head_.params(), sigma_head_.params(), decoder_.params();
    return out;
}

void VaeModel::set_flat_params(const Vec& p) {
    if (p.size() != static_cast<Eigen::Index>(parameter_count())) throw DimensionError("vae parameter length");
    Eigen::Index off = 0;
    for (auto* net : {&encoder_, &mu_head_, &sigma_head_, &decoder_}) {
        const auto n = static_cast<Eigen::Index>(net->param_count());
        net->mutable_params() = p.segment(off, n);
        off += n;
    }
}

int vae_width_for_budget(int input_dim, int latent_dim, std::size_t budget) {
    int best = 1;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int h = 1; h <= 512; ++h) {
        VaeConfig c;
        c.latent_dim = latent_dim;
        c.hidden_width = h;
        const auto count = static_cast<double>(VaeModel(input_dim, c).parameter_count());
        const double gap = std::abs(count - static_cast<double>(budget));
        if (gap < best_gap) {
            best_gap = gap;
            best = h;
        }
    }
    return best;
}

VaeReport train_vae_baseline(const Eigen::MatrixXd& train_rows, const Eigen::MatrixXd& test_rows,
                             const VaeConfig& cfg) {
    const auto D = static_cast<int>(train_rows.cols());
    if (test_rows.cols() != D) throw DimensionError("train and test widths differ");
    VaeReport rep{VaeModel(D, cfg), {}, 0.0, 0.0};
    auto& model = rep.model;
    model.fit_standardizer(train_rows);
    const Mat x_all = model.standardize(train_rows);
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    nn::AdamState adam(static_cast<Eigen::Index>(model.parameter_count()), {cfg.lr, 0.9, 0.999, 1e-8});
    Vec theta = model.flat_params();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x_all.cols()));
    std::iota(order.begin(), order.end(), 0);
    const bool stochastic = !cfg.fixed_sigma || *cfg.fixed_sigma > 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Mat xb(D, static_cast<Eigen::Index>(stop - start));
            for (std::size_t k = start; k < stop; ++k) xb.col(static_cast<Eigen::Index>(k - start)) = x_all.col(order[k]);
            Mat noise(cfg.latent_dim, xb.cols());
            for (Eigen::Index c = 0; c < noise.cols(); ++c) {
                for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = gauss(rng);
            }
            Vec grad;
            const double l = model.loss(xb, stochastic ? &noise : nullptr, &grad);
            if (!std::isfinite(l)) throw NumericalError("vae loss became non-finite at epoch " + std::to_string(epoch));
            acc += l * static_cast<double>(xb.cols());
            adam.step(theta, grad);
            model.set_flat_params(theta);
        }
        rep.loss_log.push_back(acc / static_cast<double>(order.size()));
    }
    const auto rec = model.reconstruct(test_rows);
    const auto diff = (rec - test_rows).eval();
    rep.coord_mse = diff.leftCols(D - 1).rowwise().squaredNorm().mean();
    rep.function_mse = diff.col(D - 1).squaredNorm() / static_cast<double>(diff.rows());
    return rep;
}

} // namespace atlas::cae
