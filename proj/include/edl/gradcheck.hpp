#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edl {

// Central finite-difference verification of total_loss_gradient over random
// configurations (C in 2..5, random weights, the best-row weighting mixed
// in). Checks each loss term in isolation plus the combined draw; kink
// coordinates (|logit| < 1e-4) and vanishing analytic entries are skipped.
struct GradCheckReport {
    struct TermStat {
        std::string term;
        double max_rel_err = 0.0;
        std::size_t coordinates = 0;
    };
    std::vector<TermStat> terms;
    std::vector<std::string> failures; // one message per failing configuration
    int trials = 0;
    double tolerance = 0.0;
    bool pass = false;
};

GradCheckReport run_gradient_check(int trials, std::uint64_t seed, double tolerance = 1e-5,
                                   bool negative_control = false);

std::string format_gradcheck_report(const GradCheckReport& report);

} // namespace edl
