#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace atlas::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators for one flat parameter vector.
class AdamState {
public:
    AdamState() = default;
    AdamState(Eigen::Index size, AdamConfig config);

    /// One bias-corrected Adam update of `params` in place.
    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads);

    std::int64_t steps() const { return step_; }
    const AdamConfig& config() const { return config_; }
    AdamConfig& config() { return config_; }
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }

private:
    AdamConfig config_;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    std::int64_t step_ = 0;
};

} // namespace atlas::nn
