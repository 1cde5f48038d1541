#include "edl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "edl/losses.hpp"
#include "edl/rng.hpp"

namespace edl {

namespace {

constexpr double kStep = 1e-5;
constexpr double kKinkMargin = 1e-4;
constexpr double kAnalyticFloor = 1e-8;
// Central differences at step 1e-5 carry ~1e-11 of absolute noise; measuring
// error against a 1e-4 denominator floor grants tiny coordinates a 1e-9
// absolute allowance instead of a meaningless relative one.
constexpr double kDenominatorFloor = 1e-4;

struct Trial {
    Tensor logits;
    LabelBatch labels;
    double prior = 1.0;
};

Trial make_trial(Rng& rng) {
    Trial t;
    const std::size_t c = 2 + rng.below(4); // 2..5
    const std::size_t n = 2, h = 3, w = 3;
    t.logits = Tensor::zeros({n, c, h, w});
    for (double& v : t.logits.data) v = rng.uniform(-2.0, 3.0);
    t.logits.data[0] = rng.uniform(0.5, 3.0); // keep at least one coordinate active
    t.labels.count = n;
    t.labels.height = h;
    t.labels.width = w;
    t.labels.labels.resize(n * h * w);
    for (auto& l : t.labels.labels) l = static_cast<std::uint8_t>(rng.below(c));
    t.prior = rng.uniform() < 0.25 ? 0.25 : 1.0;
    return t;
}

// max relative error of the analytic gradient vs central differences for one
// weighting; returns the number of coordinates actually compared.
std::pair<double, std::size_t> check_weighting(const Trial& trial, const LossWeights& weights,
                                               const AnnealSchedule& schedule, long iteration,
                                               bool negative_control) {
    Tensor analytic;
    total_loss_gradient(trial.logits, trial.labels, weights, schedule, iteration, analytic,
                        trial.prior);
    if (negative_control) {
        for (double& g : analytic.data) g = -g;
    }

    Tensor perturbed = trial.logits;
    double max_err = 0.0;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < perturbed.data.size(); ++i) {
        if (std::abs(trial.logits.data[i]) < kKinkMargin) continue;
        const double kept = perturbed.data[i];
        perturbed.data[i] = kept + kStep;
        const double up =
            total_loss(perturbed, trial.labels, weights, schedule, iteration, trial.prior).total;
        perturbed.data[i] = kept - kStep;
        const double down =
            total_loss(perturbed, trial.labels, weights, schedule, iteration, trial.prior).total;
        perturbed.data[i] = kept;
        const double fd = (up - down) / (2.0 * kStep);
        const double a = analytic.data[i];
        if (std::abs(a) <= kAnalyticFloor) continue;
        const double err =
            std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kDenominatorFloor});
        max_err = std::max(max_err, err);
        ++checked;
    }
    return {max_err, checked};
}

} // namespace

GradCheckReport run_gradient_check(int trials, std::uint64_t seed, double tolerance,
                                   bool negative_control) {
    if (trials < 1) throw std::invalid_argument("run_gradient_check: trials must be >= 1");

    GradCheckReport report;
    report.trials = trials;
    report.tolerance = tolerance;
    report.terms = {{"wasserstein", 0.0, 0},
                    {"dice", 0.0, 0},
                    {"kl", 0.0, 0},
                    {"mse", 0.0, 0},
                    {"combined", 0.0, 0}};

    // the KL coefficient in effect comes from the schedule, not from w_kl:
    // isolating a non-KL term needs a zero plateau
    const AnnealSchedule kl_off{0, 1, 0.0};
    const AnnealSchedule kl_unit{0, 1, 1.0};
    Rng rng(mix64(seed ^ 0x7f4a7c159e3779b9ULL));

    for (int trial_idx = 0; trial_idx < trials; ++trial_idx) {
        const Trial trial = make_trial(rng);

        LossWeights combined;
        if (trial_idx % 10 == 0) {
            combined = LossWeights{1.0, 0.75, 0.15, 0.45}; // best-row weighting
        } else {
            combined.w_wasserstein = rng.uniform(0.0, 1.5);
            combined.w_dice = rng.uniform(0.0, 1.5);
            combined.w_kl = rng.uniform(0.0, 0.5);
            combined.w_mse = rng.uniform(0.0, 1.5);
            if (combined.w_wasserstein + combined.w_dice + combined.w_kl + combined.w_mse <
                1e-3) {
                combined.w_mse = 1.0;
            }
        }
        const AnnealSchedule combined_schedule{0, 10, combined.w_kl};
        const long combined_iteration = trial_idx % 3 == 1 ? 5 : 10; // mid-ramp sometimes

        const LossWeights isolated[4] = {
            {1.0, 0.0, 0.0, 0.0},
            {0.0, 1.0, 0.0, 0.0},
            {0.0, 0.0, 1.0, 0.0},
            {0.0, 0.0, 0.0, 1.0},
        };
        for (int term = 0; term < 4; ++term) {
            const auto [err, n] = check_weighting(trial, isolated[term],
                                                  term == 2 ? kl_unit : kl_off, 1,
                                                  negative_control);
            report.terms[term].max_rel_err = std::max(report.terms[term].max_rel_err, err);
            report.terms[term].coordinates += n;
            if (err > tolerance) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "trial %d term %s: rel err %.3e exceeds %.1e (C=%zu, prior=%g)",
                              trial_idx, report.terms[term].term.c_str(), err, tolerance,
                              trial.logits.shape[1], trial.prior);
                report.failures.push_back(buf);
            }
        }
        const auto [err, n] = check_weighting(trial, combined, combined_schedule,
                                              combined_iteration, negative_control);
        report.terms[4].max_rel_err = std::max(report.terms[4].max_rel_err, err);
        report.terms[4].coordinates += n;
        if (err > tolerance) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "trial %d combined: rel err %.3e exceeds %.1e (C=%zu, prior=%g)",
                          trial_idx, err, tolerance, trial.logits.shape[1], trial.prior);
            report.failures.push_back(buf);
        }
    }

    report.pass = report.failures.empty();
    return report;
}

std::string format_gradcheck_report(const GradCheckReport& report) {
    std::string out;
    char buf[160];
    for (const auto& term : report.terms) {
        std::snprintf(buf, sizeof(buf), "%-12s max rel err %.3e over %zu coordinates\n",
                      term.term.c_str(), term.max_rel_err, term.coordinates);
        out += buf;
    }
    for (const auto& failure : report.failures) {
        out += "FAIL: " + failure + "\n";
    }
    std::snprintf(buf, sizeof(buf), "%d trials, tolerance %.1e: %s\n", report.trials,
                  report.tolerance, report.pass ? "PASS" : "FAIL");
    out += buf;
    return out;
}

} // namespace edl
