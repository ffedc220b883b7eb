#include "edgeprompt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "edgeprompt/error.hpp"

namespace edgeprompt {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
    if (!(h > 0.0)) throw Error(ErrorKind::Range, "finite difference step must be positive");
    Tensor grad(x.rows(), x.cols());
    Tensor probe = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = probe.values()[k];
        probe.values()[k] = orig + h;
        const double up = f(probe);
        probe.values()[k] = orig - h;
        const double down = f(probe);
        probe.values()[k] = orig;
        grad.values()[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(const Tensor& a, const Tensor& b, double floor) {
    require_same_shape(a, b, "relative_error");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        diff += d * d;
        na += a.values()[i] * a.values()[i];
        nb += b.values()[i] * b.values()[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double GradientCheck::worst() const {
    double w = 0.0;
    for (double e : relative_errors) w = std::max(w, e);
    return w;
}

GradientCheck check_gradients(const LossBuilder& build, const std::vector<Tensor>& params, double h) {
    GradientCheck result;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& p : params) vars.push_back(tape.parameter(p));
        Var loss = build(tape, vars);
        Gradients grads = tape.backward(loss);
        for (const Var& v : vars) result.analytic.push_back(grads.of(v));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto f = [&](const Tensor& probe) {
            Tape tape;
            std::vector<Var> vars;
            for (std::size_t j = 0; j < params.size(); ++j)
                vars.push_back(tape.parameter(j == i ? probe : params[j]));
            return build(tape, vars).value().item();
        };
        result.numeric.push_back(finite_difference_gradient(f, params[i], h));
        result.relative_errors.push_back(relative_error(result.analytic[i], result.numeric[i]));
    }
    return result;
}

}  // namespace edgeprompt
