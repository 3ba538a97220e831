#include "atlas/nn/adam.hpp"

#include <cmath>
#include <string>

#include "atlas/errors.hpp"

namespace atlas::nn {

AdamState::AdamState(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void AdamState::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw DimensionError("adam step on " + std::to_string(params.size()) + " parameters / " +
                             std::to_string(grads.size()) + " gradients, state holds " +
                             std::to_string(m_.size()));
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    m_ = b1 * m_ + (1.0 - b1) * grads;
    v_ = b2 * v_ + (1.0 - b2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    params.array() -= config_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

} // namespace atlas::nn
