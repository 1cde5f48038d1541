#pragma once

#include <cstdint>
#include <span>

#include "edl/dirichlet.hpp"
#include "edl/tensor.hpp"

namespace edl {

// Weights of the combined loss. w_kl is the post-ramp plateau value; the
// weight actually applied at a given iteration comes from the schedule.
struct LossWeights {
    double w_wasserstein = 0.0;
    double w_dice = 0.0;
    double w_kl = 0.0;
    double w_mse = 0.0;

    void validate() const;
};

// KL weight ramp: 0 before ramp_start, linear up to plateau at ramp_end.
struct AnnealSchedule {
    long ramp_start = 0;
    long ramp_end = 1;
    double plateau = 0.0;

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double wasserstein = 0.0;
    double dice = 0.0;
    double kl = 0.0;
    double mse = 0.0;
    double kl_weight_used = 0.0;
};

// Per-pixel terms. target must be exactly one-hot; target_class is 0-based.
double mse_loss_pixel(const PixelBelief& belief, double total_evidence,
                      std::span<const double> one_hot_target);
double wasserstein_loss_pixel(const PixelBelief& belief, std::size_t target_class);

// Image-level Dice for one class; both-empty maps contribute 0.
double dice_loss_class(std::span<const double> pred_map, std::span<const std::uint8_t> gt_map,
                       std::size_t height, std::size_t width);

// Closed-form KL[Dir(alpha) || Dir(a0 * 1)].
double kl_to_prior_pixel(const DirichletParams& params, double prior_concentration);

double kl_weight(long iteration, const AnnealSchedule& schedule);

// Combined loss over a batch of logit maps [N][C][H][W] and label maps
// [N][H][W]. Normalizers follow the per-term definitions: pixel terms are
// averaged over the Z = N*H*W pixels, Dice per image per class then averaged.
LossBreakdown total_loss(const Tensor& logits, const LabelBatch& labels,
                         const LossWeights& weights, const AnnealSchedule& schedule,
                         long iteration, double prior_concentration = 1.0);

// Same, also writing d(total)/d(logit) into grad_logits (allocated to the
// logits shape). Coordinates with logit <= 0 get exactly 0 (ReLU subgradient
// at 0 is taken as 0).
LossBreakdown total_loss_gradient(const Tensor& logits, const LabelBatch& labels,
                                  const LossWeights& weights, const AnnealSchedule& schedule,
                                  long iteration, Tensor& grad_logits,
                                  double prior_concentration = 1.0);

} // namespace edl
