#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edl/gradcheck.hpp"
#include "edl/losses.hpp"
#include "edl/rng.hpp"
#include "helpers.hpp"

using namespace edl;

namespace {

PixelBelief belief_of_alpha(std::vector<double> alpha) {
    DirichletParams p;
    p.total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    p.alpha = std::move(alpha);
    return belief(p);
}

Tensor single_pixel_logits(std::vector<double> values) {
    Tensor t = Tensor::zeros({1, values.size(), 1, 1});
    t.data = std::move(values);
    return t;
}

constexpr AnnealSchedule kPlateauOne{0, 1, 1.0};

// test-only Dirichlet sampler (Marsaglia-Tsang, shape >= 1) for the KL oracle
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
    std::vector<double> g(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double d = alpha[i] - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = rng.normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = rng.uniform();
            if (u == 0.0) continue;
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                g[i] = d * v;
                break;
            }
        }
    }
    const double sum = std::accumulate(g.begin(), g.end(), 0.0);
    for (double& v : g) v /= sum;
    return g;
}

double log_dirichlet_pdf(std::span<const double> x, std::span<const double> alpha) {
    double log_norm = 0.0, alpha_sum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        log_norm += log_gamma(alpha[i]);
        alpha_sum += alpha[i];
        acc += (alpha[i] - 1.0) * std::log(x[i]);
    }
    return acc - (log_norm - log_gamma(alpha_sum));
}

struct McKl {
    double mean;
    double stderr_;
};

McKl mc_kl_estimate(std::span<const double> alpha, double a0, std::size_t samples, Rng& rng) {
    const std::vector<double> prior(alpha.size(), a0);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::vector<double> x = sample_dirichlet(alpha, rng);
        const double v = log_dirichlet_pdf(x, alpha) - log_dirichlet_pdf(x, prior);
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(samples);
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    return {mean, std::sqrt(var / n)};
}

} // namespace

TEST_CASE("mse_loss_pixel evaluates the expected-squared-error formula") {
    // confident one-hot belief in the infinite-evidence limit
    PixelBelief onehot{{1.0, 0.0, 0.0}, 0.0};
    const double target[3] = {1, 0, 0};
    CHECK(mse_loss_pixel(onehot, 1e18, {target, 3}) == doctest::Approx(0.0).scale(1));

    // vacuous belief: squared error 2/3, variance term 1/6
    const auto uniform = belief_of_alpha({1, 1, 1});
    CHECK(mse_loss_pixel(uniform, 3.0, {target, 3}) == doctest::Approx(5.0 / 6).epsilon(1e-12));

    const auto skewed = belief_of_alpha({5, 1, 1});
    CHECK(mse_loss_pixel(skewed, 7.0, {target, 3}) ==
          doctest::Approx(6.0 / 49 + 22.0 / 392).epsilon(1e-12));
}

TEST_CASE("mse_loss_pixel rejects non-one-hot targets") {
    const auto b = belief_of_alpha({1, 1, 1});
    const double two_hot[3] = {1, 1, 0};
    CHECK_THROWS_AS(mse_loss_pixel(b, 3.0, {two_hot, 3}), std::invalid_argument);
    const double soft[3] = {0.5, 0.5, 0};
    CHECK_THROWS_AS(mse_loss_pixel(b, 3.0, {soft, 3}), std::invalid_argument);
    const double none[3] = {0, 0, 0};
    CHECK_THROWS_AS(mse_loss_pixel(b, 3.0, {none, 3}), std::invalid_argument);
}

TEST_CASE("wasserstein_loss_pixel is one minus the true-class mean probability") {
    PixelBelief b{{0.7, 0.2, 0.1}, 0.3};
    CHECK(wasserstein_loss_pixel(b, 0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(wasserstein_loss_pixel(belief_of_alpha({1, 1, 1}), 2) ==
          doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(wasserstein_loss_pixel(belief_of_alpha({5, 1, 1}), 0) ==
          doctest::Approx(2.0 / 7).epsilon(1e-12));
    CHECK_THROWS_AS(wasserstein_loss_pixel(b, 3), std::invalid_argument);
}

TEST_CASE("dice_loss_class overlap cases") {
    const std::vector<double> mask{1, 0, 1, 0};
    const std::vector<std::uint8_t> gt{1, 0, 1, 0};
    CHECK(dice_loss_class(mask, gt, 2, 2) == doctest::Approx(0.0).scale(1));

    const std::vector<double> pred_disjoint{0, 1, 0, 0};
    const std::vector<std::uint8_t> gt_disjoint{1, 0, 0, 0};
    CHECK(dice_loss_class(pred_disjoint, gt_disjoint, 2, 2) == doctest::Approx(1.0));

    const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
    const std::vector<std::uint8_t> one_positive{1, 0, 0, 0};
    CHECK(dice_loss_class(half, one_positive, 2, 2) == doctest::Approx(2.0 / 3).epsilon(1e-12));

    // both empty: correctly absent class contributes nothing
    const std::vector<double> zeros{0, 0, 0, 0};
    const std::vector<std::uint8_t> empty{0, 0, 0, 0};
    CHECK(dice_loss_class(zeros, empty, 2, 2) == 0.0);

    CHECK_THROWS_AS(dice_loss_class(half, gt, 1, 2), std::invalid_argument);
}

TEST_CASE("kl_to_prior_pixel closed form agrees with Monte-Carlo sampling") {
    CHECK(kl_to_prior_pixel({{1, 1, 1}, 3.0}, 1.0) == doctest::Approx(0.0).scale(1));

    Rng rng(20240812);
    // spot alphas incl. the documented (2,1,1) case; full 1e6-sample sweep
    // lives in the acceptance suite
    const std::vector<std::vector<double>> alphas = {
        {2, 1, 1}, {1.5, 3.0, 1.0}, {4, 4}, {1.2, 2.2, 3.2, 1.7, 2.5}};
    for (const auto& alpha : alphas) {
        DirichletParams p;
        p.alpha = alpha;
        p.total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        for (double a0 : {1.0, 0.25}) {
            const double closed = kl_to_prior_pixel(p, a0);
            const McKl mc = mc_kl_estimate(alpha, a0, 100000, rng);
            CHECK_MESSAGE(std::abs(closed - mc.mean) <= 3.0 * mc.stderr_,
                          "alpha[0]=", alpha[0], " a0=", a0, " closed=", closed,
                          " mc=", mc.mean, " se=", mc.stderr_);
        }
    }

    // vacuous belief against a sparse prior is strictly positive
    CHECK(kl_to_prior_pixel({{1, 1, 1}, 3.0}, 0.25) > 0.0);
    CHECK_THROWS_AS(kl_to_prior_pixel({{1, 1, 1}, 3.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(kl_to_prior_pixel({{1, 1, 1}, 3.0}, -1.0), std::invalid_argument);
}

TEST_CASE("kl_weight ramps linearly between the schedule bounds") {
    const AnnealSchedule s{40000, 48000, 0.15};
    CHECK(kl_weight(40000, s) == 0.0);
    CHECK(kl_weight(44000, s) == doctest::Approx(0.075).epsilon(1e-15));
    CHECK(kl_weight(48000, s) == 0.15);
    CHECK(kl_weight(80000, s) == 0.15);
    CHECK(kl_weight(0, s) == 0.0);
    CHECK_THROWS_AS(kl_weight(-1, s), std::invalid_argument);
    CHECK_THROWS_AS(kl_weight(1, AnnealSchedule{5, 5, 0.1}), std::invalid_argument);

    // non-decreasing and continuous at the ramp boundaries
    double prev = -1.0;
    for (long t = 39990; t <= 48010; ++t) {
        const double w = kl_weight(t, s);
        CHECK(w >= prev);
        prev = w;
    }
    CHECK(kl_weight(40001, s) - kl_weight(40000, s) < 1e-4);
    CHECK(kl_weight(48000, s) - kl_weight(47999, s) < 1e-4);
}

TEST_CASE("total_loss matches the per-pixel examples on uniform batches") {
    Tensor logits = Tensor::zeros({2, 3, 2, 2}); // all zero -> vacuous
    LabelBatch labels{2, 2, 2, std::vector<std::uint8_t>(8, 1)};
    const AnnealSchedule off{0, 1, 0.0};

    const LossBreakdown mse_only = total_loss(logits, labels, {0, 0, 0, 1}, off, 1);
    CHECK(mse_only.total == doctest::Approx(5.0 / 6).epsilon(1e-12));
    CHECK(mse_only.mse == doctest::Approx(5.0 / 6).epsilon(1e-12));

    const LossBreakdown w_only = total_loss(logits, labels, {1, 0, 0, 0}, off, 1);
    CHECK(w_only.total == doctest::Approx(2.0 / 3).epsilon(1e-12));

    // best-row weighting before the ramp: total excludes the KL term
    const LossWeights best{1.0, 0.75, 0.15, 0.45};
    const AnnealSchedule ramp{1000, 1200, 0.15};
    const LossBreakdown pre_ramp = total_loss(logits, labels, best, ramp, 0);
    CHECK(pre_ramp.kl_weight_used == 0.0);
    CHECK(pre_ramp.total ==
          doctest::Approx(1.0 * pre_ramp.wasserstein + 0.75 * pre_ramp.dice +
                          0.45 * pre_ramp.mse)
              .epsilon(1e-12));
    CHECK(pre_ramp.kl == doctest::Approx(0.0).scale(1)); // alpha = 1 everywhere
}

TEST_CASE("total_loss rejects malformed inputs") {
    Tensor logits = Tensor::zeros({1, 3, 2, 2});
    LabelBatch bad_shape{1, 2, 3, std::vector<std::uint8_t>(6, 0)};
    const AnnealSchedule off{0, 1, 0.0};
    CHECK_THROWS_AS(total_loss(logits, bad_shape, {0, 0, 0, 1}, off, 1), std::invalid_argument);

    LabelBatch bad_label{1, 2, 2, std::vector<std::uint8_t>{0, 1, 3, 0}}; // 3 >= C
    CHECK_THROWS_AS(total_loss(logits, bad_label, {0, 0, 0, 1}, off, 1), std::invalid_argument);

    LabelBatch ok{1, 2, 2, std::vector<std::uint8_t>(4, 0)};
    CHECK_THROWS_AS(total_loss(logits, ok, {0, 0, 0, 0}, off, 1), std::invalid_argument);
    logits.data[0] = std::nan("");
    CHECK_THROWS_AS(total_loss(logits, ok, {0, 0, 0, 1}, off, 1), std::invalid_argument);
}

TEST_CASE("total_loss_gradient reproduces the hand-derived Wasserstein gradient") {
    // alpha = (5,1,1): only the active coordinate carries gradient
    Tensor logits = single_pixel_logits({4.0, -1.0, -1.0});
    LabelBatch labels{1, 1, 1, {0}};
    Tensor grad;
    total_loss_gradient(logits, labels, {1, 0, 0, 0}, AnnealSchedule{0, 1, 0.0}, 1, grad);
    CHECK(grad.data[0] == doctest::Approx(-2.0 / 49).epsilon(1e-12));
    CHECK(grad.data[1] == 0.0);
    CHECK(grad.data[2] == 0.0);
}

TEST_CASE("total_loss_gradient is zero in the ReLU dead zone") {
    Tensor logits = Tensor::zeros({2, 4, 3, 3});
    for (double& v : logits.data) v = -0.5 - 0.1 * (&v - logits.data.data()) / 72.0;
    LabelBatch labels{2, 3, 3, std::vector<std::uint8_t>(18, 2)};
    Tensor grad;
    total_loss_gradient(logits, labels, {1.0, 0.75, 0.15, 0.45}, kPlateauOne, 1, grad);
    for (double g : grad.data) CHECK(g == 0.0);
}

TEST_CASE("KL gradient vanishes at the prior") {
    // alpha barely above 1 on the active coordinate: the KL slope is O(eps)
    Tensor logits = single_pixel_logits({1e-9, -1.0, -1.0});
    LabelBatch labels{1, 1, 1, {0}};
    Tensor grad;
    total_loss_gradient(logits, labels, {0, 0, 1, 0}, kPlateauOne, 1, grad);
    for (double g : grad.data) CHECK(std::abs(g) < 1e-7);
}

TEST_CASE("analytic gradients match finite differences over random configurations") {
    const GradCheckReport report = run_gradient_check(200, 1);
    for (const auto& failure : report.failures) MESSAGE(failure);
    CHECK(report.pass);
    for (const auto& term : report.terms) {
        CHECK_MESSAGE(term.max_rel_err <= 1e-5, term.term);
        CHECK(term.coordinates > 0);
    }
}

TEST_CASE("gradient checker catches an injected sign flip") {
    const GradCheckReport report = run_gradient_check(5, 1, 1e-5, true);
    CHECK_FALSE(report.pass);
}

TEST_CASE("total_loss is permutation-equivariant in the class indices") {
    Rng rng(31);
    const std::size_t n = 2, c = 4, h = 3, w = 3;
    for (int rep = 0; rep < 20; ++rep) {
        Tensor logits = Tensor::zeros({n, c, h, w});
        for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
        LabelBatch labels{n, h, w, {}};
        labels.labels.resize(n * h * w);
        for (auto& l : labels.labels) l = static_cast<std::uint8_t>(rng.below(c));

        std::vector<std::size_t> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = c; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

        Tensor permuted = logits;
        const std::size_t plane = h * w;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t px = 0; px < plane; ++px) {
                    permuted.data[(b * c + perm[k]) * plane + px] =
                        logits.data[(b * c + k) * plane + px];
                }
            }
        }
        LabelBatch permuted_labels = labels;
        for (auto& l : permuted_labels.labels) l = static_cast<std::uint8_t>(perm[l]);

        const LossWeights weights{0.8, 0.6, 0.2, 0.4};
        const AnnealSchedule sched{0, 1, 0.2};
        const double a = total_loss(logits, labels, weights, sched, 5).total;
        const double b = total_loss(permuted, permuted_labels, weights, sched, 5).total;
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
}

TEST_CASE("per-pixel Wasserstein loss stays in its range") {
    Rng rng(37);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t c = 2 + rng.below(5);
        std::vector<double> alpha(c);
        for (double& a : alpha) a = 1.0 + rng.uniform(0.0, 20.0);
        const auto b = belief_of_alpha(alpha);
        const std::size_t y = rng.below(c);
        const double loss = wasserstein_loss_pixel(b, y);
        CHECK(loss >= 0.0);
        CHECK(loss < 1.0);
    }
    // zero evidence: exactly (C-1)/C
    for (std::size_t c = 2; c <= 6; ++c) {
        const auto vac = belief_of_alpha(std::vector<double>(c, 1.0));
        CHECK(wasserstein_loss_pixel(vac, 0) ==
              doctest::Approx((static_cast<double>(c) - 1.0) / static_cast<double>(c))
                  .epsilon(1e-12));
    }
}

TEST_CASE("single-pixel descent: MSE seeks the vertex, Wasserstein+KL keeps vacuity") {
    auto optimize = [](const LossWeights& weights, int iterations, double lr) {
        Tensor logits = single_pixel_logits({0.5, 0.1, 0.1});
        LabelBatch labels{1, 1, 1, {0}};
        const AnnealSchedule sched{0, 1, weights.w_kl};
        Tensor grad;
        for (int t = 0; t < iterations; ++t) {
            total_loss_gradient(logits, labels, weights, sched, 1, grad);
            for (std::size_t i = 0; i < logits.data.size(); ++i) {
                logits.data[i] -= lr * grad.data[i];
            }
        }
        double s = 0.0;
        for (double l : logits.data) s += (l > 0.0 ? l : 0.0) + 1.0;
        return 3.0 / s;
    };
    const int budget = 400000;
    const double u_mse = optimize({0, 0, 0, 1}, budget, 1.0);
    const double u_wkl = optimize({1, 0, 0.15, 0}, budget, 1.0);
    CHECK(u_mse < 0.05);
    CHECK(u_wkl > u_mse);
}
