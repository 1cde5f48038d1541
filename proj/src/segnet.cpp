#include "edl/segnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "edl/rng.hpp"

namespace edl {

void SegNetConfig::validate() const {
    if (in_channels == 0 || hidden_channels == 0 || num_classes < 2) {
        throw std::invalid_argument("SegNetConfig: channels must be positive, num_classes >= 2");
    }
    if (depth < 2) throw std::invalid_argument("SegNetConfig: depth must be >= 2");
    if (kernel_size % 2 == 0 || kernel_size == 0) {
        throw std::invalid_argument("SegNetConfig: kernel_size must be odd");
    }
}

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k)
    : in_channels(in_ch), out_channels(out_ch), kernel(k),
      weight(Tensor::zeros({out_ch, in_ch, k, k})), bias(Tensor::zeros({out_ch})) {
    weight.ensure_grad();
    bias.ensure_grad();
}

Tensor Conv2d::forward(const Tensor& input) const {
    if (input.shape.size() != 4 || input.shape[1] != in_channels) {
        throw std::invalid_argument("Conv2d: input must be [N][" + std::to_string(in_channels) +
                                    "][H][W]");
    }
    const std::size_t n = input.shape[0], h = input.shape[2], w = input.shape[3];
    const long pad = static_cast<long>(kernel / 2);
    Tensor out = Tensor::zeros({n, out_channels, h, w});

    const std::size_t in_plane = h * w;
    const std::size_t in_img = in_channels * in_plane;
    const std::size_t out_img = out_channels * in_plane;

    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t co = 0; co < out_channels; ++co) {
            double* out_p = out.data.data() + b * out_img + co * in_plane;
            const double bv = bias.data[co];
            for (std::size_t i = 0; i < in_plane; ++i) out_p[i] = bv;
            for (std::size_t ci = 0; ci < in_channels; ++ci) {
                const double* in_p = input.data.data() + b * in_img + ci * in_plane;
                const double* w_p =
                    weight.data.data() + (co * in_channels + ci) * kernel * kernel;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const double wv = w_p[ky * kernel + kx];
                        const long dy = static_cast<long>(ky) - pad;
                        const long dx = static_cast<long>(kx) - pad;
                        const long y0 = dy < 0 ? -dy : 0;
                        const long y1 = static_cast<long>(h) - (dy > 0 ? dy : 0);
                        const long x0 = dx < 0 ? -dx : 0;
                        const long x1 = static_cast<long>(w) - (dx > 0 ? dx : 0);
                        for (long y = y0; y < y1; ++y) {
                            double* orow = out_p + y * static_cast<long>(w);
                            const double* irow =
                                in_p + (y + dy) * static_cast<long>(w) + dx;
                            for (long x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& input, const Tensor& grad_output) {
    const std::size_t n = input.shape[0], h = input.shape[2], w = input.shape[3];
    const long pad = static_cast<long>(kernel / 2);
    Tensor grad_in = Tensor::zeros(input.shape);

    const std::size_t in_plane = h * w;
    const std::size_t in_img = in_channels * in_plane;
    const std::size_t out_img = out_channels * in_plane;

    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t co = 0; co < out_channels; ++co) {
            const double* go_p = grad_output.data.data() + b * out_img + co * in_plane;
            double bacc = 0.0;
            for (std::size_t i = 0; i < in_plane; ++i) bacc += go_p[i];
            bias.grad[co] += bacc;

            for (std::size_t ci = 0; ci < in_channels; ++ci) {
                const double* in_p = input.data.data() + b * in_img + ci * in_plane;
                double* gi_p = grad_in.data.data() + b * in_img + ci * in_plane;
                const double* w_p =
                    weight.data.data() + (co * in_channels + ci) * kernel * kernel;
                double* gw_p =
                    weight.grad.data() + (co * in_channels + ci) * kernel * kernel;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const double wv = w_p[ky * kernel + kx];
                        const long dy = static_cast<long>(ky) - pad;
                        const long dx = static_cast<long>(kx) - pad;
                        const long y0 = dy < 0 ? -dy : 0;
                        const long y1 = static_cast<long>(h) - (dy > 0 ? dy : 0);
                        const long x0 = dx < 0 ? -dx : 0;
                        const long x1 = static_cast<long>(w) - (dx > 0 ? dx : 0);
                        double wacc = 0.0;
                        for (long y = y0; y < y1; ++y) {
                            const double* gorow = go_p + y * static_cast<long>(w);
                            const double* irow =
                                in_p + (y + dy) * static_cast<long>(w) + dx;
                            double* girow = gi_p + (y + dy) * static_cast<long>(w) + dx;
                            for (long x = x0; x < x1; ++x) {
                                wacc += gorow[x] * irow[x];
                                girow[x] += wv * gorow[x];
                            }
                        }
                        gw_p[ky * kernel + kx] += wacc;
                    }
                }
            }
        }
    }
    return grad_in;
}

SegNet::SegNet(const SegNetConfig& config) : config_(config) {
    config_.validate();
    layers_.reserve(config_.depth);
    std::size_t in_ch = config_.in_channels;
    for (std::size_t i = 0; i + 1 < config_.depth; ++i) {
        layers_.emplace_back(in_ch, config_.hidden_channels, config_.kernel_size);
        in_ch = config_.hidden_channels;
    }
    layers_.emplace_back(in_ch, config_.num_classes, config_.kernel_size);
}

void SegNet::init_params(std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0x5e67a1c35d06f3b1ULL));
    for (auto& layer : layers_) {
        const double fan_in =
            static_cast<double>(layer.in_channels * layer.kernel * layer.kernel);
        const double bound = std::sqrt(6.0 / fan_in);
        for (double& v : layer.weight.data) v = rng.uniform(-bound, bound);
        for (double& v : layer.bias.data) v = 0.0;
    }
}

Tensor SegNet::forward(const Tensor& images) {
    if (images.shape.size() != 4 || images.shape[1] != config_.in_channels) {
        throw std::invalid_argument("SegNet::forward: images must be [N][" +
                                    std::to_string(config_.in_channels) + "][H][W]");
    }
    for (double v : images.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("SegNet::forward: image values must lie in [0,1]");
        }
    }

    layer_inputs_.clear();
    preactivations_.clear();
    Tensor x = images;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layer_inputs_.push_back(x);
        Tensor z = layers_[i].forward(x);
        if (i + 1 < layers_.size()) {
            preactivations_.push_back(z);
            for (double& v : z.data) v = v > 0.0 ? v : 0.0; // hidden ReLU
        }
        x = std::move(z);
    }
    forward_recorded_ = true;
    return x;
}

void SegNet::backward(const Tensor& grad_logits) {
    if (!forward_recorded_) {
        throw std::logic_error("SegNet::backward: no forward pass recorded");
    }
    Tensor g = grad_logits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        g = layers_[i].backward(layer_inputs_[i], g);
        if (i > 0) {
            const Tensor& pre = preactivations_[i - 1];
            for (std::size_t j = 0; j < g.data.size(); ++j) {
                if (!(pre.data[j] > 0.0)) g.data[j] = 0.0;
            }
        }
    }
    forward_recorded_ = false;
}

std::vector<Tensor*> SegNet::parameters() {
    std::vector<Tensor*> out;
    out.reserve(layers_.size() * 2);
    for (auto& layer : layers_) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

void SegNet::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

} // namespace edl
