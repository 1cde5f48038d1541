#include "edl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace edl {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

struct BatchView {
    std::size_t n, c, h, w;
    std::size_t pixels() const { return n * h * w; }
};

BatchView checked_view(const Tensor& logits, const LabelBatch& labels) {
    require(logits.shape.size() == 4, "total_loss: logits must have shape [N][C][H][W]");
    BatchView v{logits.shape[0], logits.shape[1], logits.shape[2], logits.shape[3]};
    require(v.c >= 2, "total_loss: need at least 2 classes");
    require(labels.count == v.n && labels.height == v.h && labels.width == v.w,
            "total_loss: label maps do not match logit maps");
    require(labels.labels.size() == labels.pixels(), "total_loss: label buffer size mismatch");
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (labels.labels[i] >= v.c) {
            throw std::invalid_argument("total_loss: label " + std::to_string(labels.labels[i]) +
                                        " at pixel " + std::to_string(i) + " out of range (C=" +
                                        std::to_string(v.c) + ")");
        }
    }
    return v;
}

} // namespace

void LossWeights::validate() const {
    const double ws[4] = {w_wasserstein, w_dice, w_kl, w_mse};
    bool any_positive = false;
    for (double w : ws) {
        require(std::isfinite(w) && w >= 0.0, "LossWeights: weights must be finite and >= 0");
        any_positive = any_positive || w > 0.0;
    }
    require(any_positive, "LossWeights: at least one weight must be positive");
}

void AnnealSchedule::validate() const {
    require(ramp_start >= 0 && ramp_start < ramp_end,
            "AnnealSchedule: need 0 <= ramp_start < ramp_end");
    require(std::isfinite(plateau) && plateau >= 0.0,
            "AnnealSchedule: plateau must be finite and >= 0");
}

double mse_loss_pixel(const PixelBelief& belief, double total_evidence,
                      std::span<const double> one_hot_target) {
    const std::size_t c = belief.probabilities.size();
    require(one_hot_target.size() == c, "mse_loss_pixel: target size mismatch");
    std::size_t ones = 0;
    for (double t : one_hot_target) {
        require(t == 0.0 || t == 1.0, "mse_loss_pixel: target must be one-hot");
        if (t == 1.0) ++ones;
    }
    require(ones == 1, "mse_loss_pixel: target must have exactly one 1");

    double acc = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double p = belief.probabilities[i];
        const double d = p - one_hot_target[i];
        acc += d * d + p * (1.0 - p) / (total_evidence + 1.0);
    }
    return acc;
}

double wasserstein_loss_pixel(const PixelBelief& belief, std::size_t target_class) {
    require(target_class < belief.probabilities.size(),
            "wasserstein_loss_pixel: target class out of range");
    return 1.0 - belief.probabilities[target_class];
}

double dice_loss_class(std::span<const double> pred_map, std::span<const std::uint8_t> gt_map,
                       std::size_t height, std::size_t width) {
    require(pred_map.size() == height * width && gt_map.size() == pred_map.size(),
            "dice_loss_class: map shapes do not match");
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < pred_map.size(); ++i) {
        const double p = pred_map[i];
        require(p >= 0.0 && p <= 1.0, "dice_loss_class: predictions must lie in [0,1]");
        require(gt_map[i] == 0 || gt_map[i] == 1, "dice_loss_class: ground truth must be binary");
        inter += p * gt_map[i];
        psum += p;
        ysum += gt_map[i];
    }
    const double den = psum + ysum;
    if (den == 0.0) return 0.0; // correctly absent class
    return 1.0 - 2.0 * inter / den;
}

double kl_to_prior_pixel(const DirichletParams& params, double prior_concentration) {
    require(prior_concentration > 0.0, "kl_to_prior_pixel: prior concentration must be > 0");
    const std::size_t c = params.alpha.size();
    const double a0 = prior_concentration;
    const double s = params.total;
    double acc = log_gamma(s) - log_gamma(static_cast<double>(c) * a0) +
                 static_cast<double>(c) * log_gamma(a0);
    const double psi_s = digamma(s);
    for (std::size_t i = 0; i < c; ++i) {
        const double a = params.alpha[i];
        acc -= log_gamma(a);
        acc += (a - a0) * (digamma(a) - psi_s);
    }
    return acc;
}

double kl_weight(long iteration, const AnnealSchedule& schedule) {
    schedule.validate();
    require(iteration >= 0, "kl_weight: iteration must be non-negative");
    if (iteration <= schedule.ramp_start) return 0.0;
    if (iteration >= schedule.ramp_end) return schedule.plateau;
    return schedule.plateau * static_cast<double>(iteration - schedule.ramp_start) /
           static_cast<double>(schedule.ramp_end - schedule.ramp_start);
}

namespace {

LossBreakdown total_loss_impl(const Tensor& logits, const LabelBatch& labels,
                              const LossWeights& weights, const AnnealSchedule& schedule,
                              long iteration, double prior_concentration, Tensor* grad_out) {
    weights.validate();
    require(prior_concentration > 0.0, "total_loss: prior concentration must be > 0");
    const BatchView v = checked_view(logits, labels);
    const double klw = kl_weight(iteration, schedule);

    const std::size_t plane = v.h * v.w;      // pixels per image
    const std::size_t image = v.c * plane;    // values per image
    const double a0 = prior_concentration;
    const double cd = static_cast<double>(v.c);

    if (grad_out) {
        grad_out->shape = logits.shape;
        grad_out->data.assign(logits.data.size(), 0.0);
    }

    // alpha for the whole batch; S per pixel
    std::vector<double> alpha(logits.data.size());
    std::vector<double> total(v.pixels());
    for (std::size_t n = 0; n < v.n; ++n) {
        for (std::size_t px = 0; px < plane; ++px) {
            const std::size_t base = n * image + px;
            double s = 0.0;
            for (std::size_t c = 0; c < v.c; ++c) {
                const double l = logits.data[base + c * plane];
                if (!std::isfinite(l)) {
                    throw std::invalid_argument("total_loss: logit at flat index " +
                                                std::to_string(base + c * plane) +
                                                " is non-finite");
                }
                const double a = (l > 0.0 ? l : 0.0) + 1.0;
                alpha[base + c * plane] = a;
                s += a;
            }
            total[n * plane + px] = s;
        }
    }

    // per-image per-class Dice accumulators
    std::vector<double> dice_inter(v.n * v.c, 0.0);
    std::vector<double> dice_psum(v.n * v.c, 0.0);
    std::vector<double> dice_ysum(v.n * v.c, 0.0);

    double sum_w = 0.0, sum_mse = 0.0, sum_kl = 0.0;
    std::vector<double> p(v.c);

    for (std::size_t n = 0; n < v.n; ++n) {
        for (std::size_t px = 0; px < plane; ++px) {
            const std::size_t base = n * image + px;
            const double s = total[n * plane + px];
            const std::uint8_t y = labels.labels[n * plane + px];
            for (std::size_t c = 0; c < v.c; ++c) p[c] = alpha[base + c * plane] / s;

            sum_w += 1.0 - p[y];

            double sumsq = 0.0, varnum = 0.0, dot_a = 0.0, sum_p2 = 0.0;
            for (std::size_t c = 0; c < v.c; ++c) {
                const double d = p[c] - (c == y ? 1.0 : 0.0);
                sumsq += d * d;
                varnum += p[c] * (1.0 - p[c]);
                dot_a += d * p[c];
                sum_p2 += p[c] * p[c];
            }
            sum_mse += sumsq + varnum / (s + 1.0);

            double kl = log_gamma(s) - log_gamma(cd * a0) + cd * log_gamma(a0);
            const double psi_s = digamma(s);
            for (std::size_t c = 0; c < v.c; ++c) {
                const double a = alpha[base + c * plane];
                kl -= log_gamma(a);
                kl += (a - a0) * (digamma(a) - psi_s);
            }
            sum_kl += kl;

            for (std::size_t c = 0; c < v.c; ++c) {
                dice_psum[n * v.c + c] += p[c];
                if (c == y) {
                    dice_inter[n * v.c + c] += p[c];
                    dice_ysum[n * v.c + c] += 1.0;
                }
            }

            if (grad_out) {
                const double z = static_cast<double>(v.pixels());
                const double tri_s = trigamma(s);
                const double kl_common = (s - cd * a0) * tri_s;
                for (std::size_t c = 0; c < v.c; ++c) {
                    const std::size_t idx = base + c * plane;
                    if (!(logits.data[idx] > 0.0)) continue; // ReLU inactive or at the kink
                    const double a = alpha[idx];
                    // Wasserstein: d(1 - p_y)/d alpha_c
                    const double dw = (p[y] - (c == y ? 1.0 : 0.0)) / s;
                    // MSE squared-error part
                    const double da =
                        2.0 / s * ((p[c] - (c == y ? 1.0 : 0.0)) - dot_a);
                    // MSE Dirichlet-variance part
                    const double db = 2.0 * (sum_p2 - p[c]) / (s * (s + 1.0)) -
                                      varnum / ((s + 1.0) * (s + 1.0));
                    // KL
                    const double dk = (a - a0) * trigamma(a) - kl_common;
                    grad_out->data[idx] +=
                        (weights.w_wasserstein * dw + weights.w_mse * (da + db) + klw * dk) / z;
                }
            }
        }
    }

    // Dice: per image, per class, then average images then classes.
    double dice_total = 0.0;
    for (std::size_t n = 0; n < v.n; ++n) {
        double img_acc = 0.0;
        for (std::size_t c = 0; c < v.c; ++c) {
            const double den = dice_psum[n * v.c + c] + dice_ysum[n * v.c + c];
            if (den > 0.0) img_acc += 1.0 - 2.0 * dice_inter[n * v.c + c] / den;
        }
        dice_total += img_acc / cd;
    }

    if (grad_out && weights.w_dice > 0.0) {
        // dD_i/dp_i(z) = -2 y_i(z)/den_i + 2 inter_i/den_i^2, chained through
        // dp_i/dalpha_j = (delta_ij - p_i)/S; scaled by 1/(C*N).
        std::vector<double> g(v.c);
        const double scale = weights.w_dice / (cd * static_cast<double>(v.n));
        for (std::size_t n = 0; n < v.n; ++n) {
            std::vector<double> coef_a(v.c, 0.0), coef_b(v.c, 0.0);
            for (std::size_t c = 0; c < v.c; ++c) {
                const double den = dice_psum[n * v.c + c] + dice_ysum[n * v.c + c];
                if (den > 0.0) {
                    coef_a[c] = 2.0 / den;
                    coef_b[c] = 2.0 * dice_inter[n * v.c + c] / (den * den);
                }
            }
            for (std::size_t px = 0; px < plane; ++px) {
                const std::size_t base = n * image + px;
                const double s = total[n * plane + px];
                const std::uint8_t y = labels.labels[n * plane + px];
                double dot_g = 0.0;
                for (std::size_t c = 0; c < v.c; ++c) {
                    p[c] = alpha[base + c * plane] / s;
                    g[c] = -coef_a[c] * (c == y ? 1.0 : 0.0) + coef_b[c];
                    dot_g += g[c] * p[c];
                }
                for (std::size_t c = 0; c < v.c; ++c) {
                    const std::size_t idx = base + c * plane;
                    if (!(logits.data[idx] > 0.0)) continue;
                    grad_out->data[idx] += scale * (g[c] - dot_g) / s;
                }
            }
        }
    }

    const double z = static_cast<double>(v.pixels());
    LossBreakdown out;
    out.wasserstein = sum_w / z;
    out.mse = sum_mse / z;
    out.kl = sum_kl / z;
    out.dice = dice_total / static_cast<double>(v.n);
    out.kl_weight_used = klw;
    out.total = weights.w_wasserstein * out.wasserstein + weights.w_dice * out.dice +
                klw * out.kl + weights.w_mse * out.mse;
    return out;
}

} // namespace

LossBreakdown total_loss(const Tensor& logits, const LabelBatch& labels,
                         const LossWeights& weights, const AnnealSchedule& schedule,
                         long iteration, double prior_concentration) {
    return total_loss_impl(logits, labels, weights, schedule, iteration, prior_concentration,
                           nullptr);
}

LossBreakdown total_loss_gradient(const Tensor& logits, const LabelBatch& labels,
                                  const LossWeights& weights, const AnnealSchedule& schedule,
                                  long iteration, Tensor& grad_logits,
                                  double prior_concentration) {
    return total_loss_impl(logits, labels, weights, schedule, iteration, prior_concentration,
                           &grad_logits);
}

} // namespace edl
