#include "edgeprompt/optim.hpp"

#include <cmath>

#include "edgeprompt/error.hpp"

namespace edgeprompt {

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size())
        throw Error(ErrorKind::Shape, "adam: " + std::to_string(params.size()) + " params but " +
                                          std::to_string(grads.size()) + " gradients");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size())
        throw Error(ErrorKind::Shape, "adam: parameter count changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(*params[i], m_[i], "adam moment");
        if (!grads[i].empty()) require_same_shape(*params[i], grads[i], "adam gradient");
    }

    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].empty()) continue;
        auto p = params[i]->values();
        auto g = grads[i].values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

}  // namespace edgeprompt
