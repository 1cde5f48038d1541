#pragma once

#include <cstdint>
#include <vector>

#include "edl/tensor.hpp"

namespace edl {

// Same-padding convolutional stack: conv(in->hidden) + ReLU, (depth-2) x
// [conv(hidden->hidden) + ReLU], conv(hidden->num_classes). Output spatial
// size always equals input size.
struct SegNetConfig {
    std::size_t in_channels = 3;
    std::size_t hidden_channels = 16;
    std::size_t depth = 3;
    std::size_t num_classes = 4;
    std::size_t kernel_size = 3;

    void validate() const;
};

struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    Tensor weight; // [out][in][k][k]
    Tensor bias;   // [out]

    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k);

    Tensor forward(const Tensor& input) const;          // input [N][in][H][W]
    // grad_output [N][out][H][W]; accumulates weight.grad / bias.grad and
    // returns the gradient with respect to the cached input.
    Tensor backward(const Tensor& input, const Tensor& grad_output);
};

class SegNet {
public:
    explicit SegNet(const SegNetConfig& config);

    const SegNetConfig& config() const { return config_; }

    // He-style uniform init, biases zero; fully determined by the seed.
    void init_params(std::uint64_t seed);

    // images [N][in][H][W], values in [0,1]; returns logits [N][C][H][W].
    // Records the activations needed by backward().
    Tensor forward(const Tensor& images);

    // Accumulates parameter gradients from d(loss)/d(logits). Throws if no
    // forward pass has been recorded.
    void backward(const Tensor& grad_logits);

    std::vector<Tensor*> parameters(); // declaration order: weight, bias per layer
    void zero_grad();

    // hidden-layer conv outputs recorded by the last forward(), pre-ReLU;
    // lets callers confirm a finite-difference probe sits clear of the kinks
    const std::vector<Tensor>& recorded_preactivations() const { return preactivations_; }

private:
    SegNetConfig config_;
    std::vector<Conv2d> layers_;
    std::vector<Tensor> layer_inputs_;  // input to each conv, recorded by forward
    std::vector<Tensor> preactivations_; // conv outputs before hidden ReLUs
    bool forward_recorded_ = false;
};

} // namespace edl
