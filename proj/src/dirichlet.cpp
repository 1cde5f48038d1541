#include "edl/dirichlet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace edl {

namespace {

// Lanczos approximation, g = 7, 9 coefficients (Godfrey's set).
constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kHalfLogTwoPi = 0.91893853320467274178032973640562;

double log_gamma_lanczos(double x) {
    // valid for x >= 0.5
    const double z = x - 1.0;
    double series = kLanczos[0];
    for (int i = 1; i < 9; ++i) series += kLanczos[i] / (z + i);
    const double t = z + kLanczosG + 0.5;
    return kHalfLogTwoPi + (z + 0.5) * std::log(t) - t + std::log(series);
}

void require_positive(double x, const char* fn) {
    if (!(x > 0.0)) {
        throw std::domain_error(std::string(fn) + ": requires x > 0, got " + std::to_string(x));
    }
}

} // namespace

double log_gamma(double x) {
    require_positive(x, "log_gamma");
    if (x < 0.5) {
        // reflection: ln Gamma(x) = ln(pi / sin(pi x)) - ln Gamma(1 - x)
        return std::log(kPi / std::sin(kPi * x)) - log_gamma_lanczos(1.0 - x);
    }
    return log_gamma_lanczos(x);
}

double digamma(double x) {
    require_positive(x, "digamma");
    // recurrence psi(x) = psi(x+1) - 1/x until the asymptotic series is safe
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n)
    const double tail =
        inv2 *
        (1.0 / 12.0 -
         inv2 * (1.0 / 120.0 -
                 inv2 * (1.0 / 252.0 -
                         inv2 * (1.0 / 240.0 -
                                 inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    return acc + std::log(x) - 0.5 * inv - tail;
}

double trigamma(double x) {
    require_positive(x, "trigamma");
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // psi'(x) ~ 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - ...
    const double tail =
        inv2 * (1.0 / 6.0 -
                inv2 * (1.0 / 30.0 -
                        inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))));
    return acc + inv * (1.0 + 0.5 * inv + tail);
}

EvidenceVector evidence_from_logits(std::span<const double> logits) {
    if (logits.size() < 2) {
        throw std::invalid_argument("evidence_from_logits: need at least 2 classes, got " +
                                    std::to_string(logits.size()));
    }
    EvidenceVector out;
    out.values.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw std::invalid_argument("evidence_from_logits: logit[" + std::to_string(i) +
                                        "] is non-finite");
        }
        out.values[i] = logits[i] > 0.0 ? logits[i] : 0.0;
    }
    return out;
}

DirichletParams dirichlet_from_evidence(const EvidenceVector& evidence) {
    DirichletParams out;
    out.alpha.resize(evidence.values.size());
    double total = 0.0;
    for (std::size_t i = 0; i < evidence.values.size(); ++i) {
        if (!(evidence.values[i] >= 0.0)) {
            throw std::invalid_argument("dirichlet_from_evidence: evidence[" + std::to_string(i) +
                                        "] must be non-negative");
        }
        out.alpha[i] = evidence.values[i] + 1.0;
        total += out.alpha[i];
    }
    out.total = total;
    return out;
}

PixelBelief belief(const DirichletParams& params) {
    const std::size_t c = params.alpha.size();
    if (c < 2) throw std::invalid_argument("belief: need at least 2 classes");
    PixelBelief out;
    out.probabilities.resize(c);
    for (std::size_t i = 0; i < c; ++i) out.probabilities[i] = params.alpha[i] / params.total;
    out.uncertainty = static_cast<double>(c) / params.total;
    return out;
}

} // namespace edl
