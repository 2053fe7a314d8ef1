#include "alignrl/adam.hpp"

#include <cmath>

#include "alignrl/errors.hpp"

namespace alignrl {

AdamOptimizer::AdamOptimizer(AdamConfig config) : config_(config) {
    if (config_.lr <= 0.0) throw ArgumentError("Adam lr must be positive");
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
        config_.beta2 < 0.0 || config_.beta2 >= 1.0)
        throw ArgumentError("Adam betas must lie in [0, 1)");
    if (config_.epsilon <= 0.0) throw ArgumentError("Adam epsilon must be positive");
}

void AdamOptimizer::register_parameter(const std::string& name, Tensor2D* param) {
    if (!param) throw ArgumentError("Adam: null parameter");
    if (step_count_ != 0)
        throw StateError("Adam: cannot register parameters after stepping");
    for (const Tensor2D* existing : params_)
        if (existing == param)
            throw StateError("Adam: parameter registered twice: " + name);
    params_.push_back(param);
    names_.push_back(name);
    m_.emplace_back(param->data.size(), 0.0);
    v_.emplace_back(param->data.size(), 0.0);
}

void AdamOptimizer::step() {
    if (params_.empty()) throw StateError("Adam: no parameters registered");
    ++step_count_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor2D& param = *params_[p];
        if (!param.has_grad())
            throw StateError("Adam: parameter has no gradient: " + names_[p]);
        std::vector<double>& m = m_[p];
        std::vector<double>& v = v_[p];
        for (std::size_t i = 0; i < param.data.size(); ++i) {
            const double g = param.grad[i];
            if (!std::isfinite(g))
                throw NumericalError("Adam: non-finite gradient in " + names_[p]);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            param.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

}  // namespace alignrl
