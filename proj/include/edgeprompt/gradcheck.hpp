#pragma once

#include <functional>
#include <span>
#include <vector>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every entry k.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-6);

// ||a - b|| / max(||a||, ||b||, floor); the floor keeps all-zero gradients from
// dividing by zero.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

// Builds a scalar loss on a fresh tape from parameter Vars.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradientCheck {
    std::vector<Tensor> analytic;
    std::vector<Tensor> numeric;
    std::vector<double> relative_errors;
    double worst() const;
};

// Compares backward() against finite differences for every tensor in `params`.
GradientCheck check_gradients(const LossBuilder& build, const std::vector<Tensor>& params,
                              double h = 1e-6);

}  // namespace edgeprompt
