#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace edl {

// Special functions backing the Dirichlet KL closed form. All three are
// pure, thread-safe, and defined for x > 0 only (domain_error otherwise).
double log_gamma(double x);
double digamma(double x);
double trigamma(double x);

// Per-pixel non-negative class evidence (post-ReLU logits).
struct EvidenceVector {
    std::vector<double> values;
};

// Dirichlet concentration vector; alpha_i = e_i + 1 >= 1, total = sum(alpha).
struct DirichletParams {
    std::vector<double> alpha;
    double total = 0.0;
};

// Expected class probabilities plus vacuity uncertainty U = C / total.
struct PixelBelief {
    std::vector<double> probabilities;
    double uncertainty = 0.0;
};

EvidenceVector evidence_from_logits(std::span<const double> logits);
DirichletParams dirichlet_from_evidence(const EvidenceVector& evidence);
PixelBelief belief(const DirichletParams& params);

} // namespace edl
