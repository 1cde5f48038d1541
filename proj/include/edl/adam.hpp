#pragma once

#include <vector>

#include "edl/tensor.hpp"

namespace edl {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment buffers, one pair per parameter tensor.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<Tensor*>& params);
    bool empty() const { return m.empty(); }
};

// One update step, t >= 1. Weight decay is decoupled: parameters shrink by
// lr * weight_decay before the moment update, outside the adaptive scaling.
void adam_step(const std::vector<Tensor*>& params, const AdamParams& hyper, AdamState& state,
               double lr, double weight_decay, long t);

} // namespace edl
