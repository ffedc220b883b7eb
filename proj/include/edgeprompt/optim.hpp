#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction and no weight decay. Moments are sized from the
// parameter list passed to the first step() and checked on every later call.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    // An empty gradient tensor marks a parameter as absent from this step; it
    // is left untouched and its moments do not decay.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    std::uint64_t steps() const noexcept { return step_; }
    const AdamOptions& options() const noexcept { return options_; }
    const std::vector<Tensor>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor>& second_moments() const noexcept { return v_; }

private:
    AdamOptions options_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace edgeprompt
