#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace edl {

// Dense row-major double tensor with an optional same-shape gradient slot.
// Loss and metric accumulation stay in 64-bit throughout; checkpoints
// serialize parameters as 32-bit floats.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad; // empty means "no gradient tracked"

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    void ensure_grad();   // allocates and zeroes the grad slot
    void zero_grad();     // zeroes grad if present

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Batch of per-pixel class labels, 0-based, shape [count][height][width].
struct LabelBatch {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    std::size_t pixels() const { return count * height * width; }
};

} // namespace edl
