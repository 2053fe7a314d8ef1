#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alignrl/tensor.hpp"

namespace alignrl {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam over a fixed set of labeled parameter tensors. Gradients are read from
// each tensor's grad buffer; the caller zeroes grads between steps.
class AdamOptimizer {
   public:
    explicit AdamOptimizer(AdamConfig config = {});

    void register_parameter(const std::string& name, Tensor2D* param);
    void step();
    std::int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return config_; }
    void set_lr(double lr) { config_.lr = lr; }

    std::size_t parameter_count() const { return params_.size(); }
    const std::string& parameter_name(std::size_t i) const { return names_.at(i); }

    // first/second moment buffers, exposed for checkpointing
    std::vector<double>& moment1(std::size_t i) { return m_.at(i); }
    std::vector<double>& moment2(std::size_t i) { return v_.at(i); }
    const std::vector<double>& moment1(std::size_t i) const { return m_.at(i); }
    const std::vector<double>& moment2(std::size_t i) const { return v_.at(i); }
    void set_step_count(std::int64_t t) { step_count_ = t; }

   private:
    AdamConfig config_;
    std::vector<Tensor2D*> params_;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t step_count_ = 0;
};

}  // namespace alignrl
