#include "edl/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace edl {

void AdamState::init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void adam_step(const std::vector<Tensor*>& params, const AdamParams& hyper, AdamState& state,
               double lr, double weight_decay, long t) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    if (state.empty()) state.init(params);
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state does not match parameter list");
    }

    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (p.grad.size() != p.data.size()) {
            throw std::invalid_argument("adam_step: parameter has no gradient");
        }
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            p.data[j] -= lr * weight_decay * p.data[j];
            const double g = p.grad[j];
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g;
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
        }
    }
}

} // namespace edl
