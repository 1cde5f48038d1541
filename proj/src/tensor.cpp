#include "edl/tensor.hpp"

#include <stdexcept>

namespace edl {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(shape_product(shape), 0.0);
}

void Tensor::ensure_grad() {
    grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0);
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape;
}

} // namespace edl
