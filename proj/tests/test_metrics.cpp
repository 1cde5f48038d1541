#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "edl/metrics.hpp"
#include "edl/rng.hpp"
#include "helpers.hpp"

using namespace edl;

namespace {

ScoredPixels make_scored(std::vector<double> scores, std::vector<std::uint8_t> ood) {
    ScoredPixels data;
    data.scores = std::move(scores);
    data.is_ood = std::move(ood);
    data.valid.assign(data.scores.size(), 1);
    return data;
}

// independent brute-force oracle: enumerate every distinct threshold, count
// TP/FP by scanning all pixels, and step-integrate precision over recall
double auprc_bruteforce(const ScoredPixels& data) {
    std::set<double, std::greater<double>> thresholds;
    std::size_t total_pos = 0;
    for (std::size_t i = 0; i < data.scores.size(); ++i) {
        if (!data.valid[i]) continue;
        thresholds.insert(data.scores[i]);
        total_pos += data.is_ood[i] ? 1 : 0;
    }
    double area = 0.0, prev_recall = 0.0;
    for (double tau : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < data.scores.size(); ++i) {
            if (!data.valid[i] || data.scores[i] < tau) continue;
            (data.is_ood[i] ? tp : fp) += 1;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

double fpr95_bruteforce(const ScoredPixels& data) {
    std::set<double, std::greater<double>> thresholds;
    std::size_t total_pos = 0, total_neg = 0;
    for (std::size_t i = 0; i < data.scores.size(); ++i) {
        if (!data.valid[i]) continue;
        thresholds.insert(data.scores[i]);
        (data.is_ood[i] ? total_pos : total_neg) += 1;
    }
    for (double tau : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < data.scores.size(); ++i) {
            if (!data.valid[i] || data.scores[i] < tau) continue;
            (data.is_ood[i] ? tp : fp) += 1;
        }
        if (static_cast<double>(tp) / static_cast<double>(total_pos) >= 0.95) {
            return static_cast<double>(fp) / static_cast<double>(total_neg);
        }
    }
    return 1.0;
}

Prediction prediction_from_probs(std::size_t h, std::size_t w, std::size_t c,
                                 std::vector<double> probs) {
    Prediction pred;
    pred.height = h;
    pred.width = w;
    pred.classes = c;
    pred.probabilities = std::move(probs);
    pred.uncertainty.assign(h * w, 0.5);
    return pred;
}

} // namespace

TEST_CASE("scoring functions reproduce the documented pixel examples") {
    // one pixel, three classes
    auto vac = prediction_from_probs(1, 1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    vac.uncertainty = {1.0};
    CHECK(ood_score_uncertainty(vac)[0] == 1.0);
    CHECK(ood_score_max_softmax(vac)[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(ood_score_entropy(vac)[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    auto confident = prediction_from_probs(1, 1, 3, {1.0, 0.0, 0.0});
    CHECK(ood_score_max_softmax(confident)[0] == 0.0);
    CHECK(ood_score_entropy(confident)[0] == 0.0);

    auto mixed = prediction_from_probs(1, 1, 3, {0.5, 0.3, 0.2});
    CHECK(ood_score_max_softmax(mixed)[0] == doctest::Approx(0.5).epsilon(1e-12));

    auto two = prediction_from_probs(1, 1, 3, {0.5, 0.5, 0.0});
    CHECK(ood_score_entropy(two)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto skewed = prediction_from_probs(1, 1, 3, {5.0 / 7, 1.0 / 7, 1.0 / 7});
    skewed.uncertainty = {3.0 / 7};
    CHECK(ood_score_uncertainty(skewed)[0] == doctest::Approx(3.0 / 7).epsilon(1e-12));
}

TEST_CASE("precision_recall_curve enumerates grouped thresholds in order") {
    const auto curve = precision_recall_curve(make_scored({0.9, 0.8, 0.1}, {1, 1, 0}));
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].threshold == 0.9);
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[0].recall == 0.5);
    CHECK(curve[1].threshold == 0.8);
    CHECK(curve[1].precision == 1.0);
    CHECK(curve[1].recall == 1.0);
    CHECK(curve[2].threshold == doctest::Approx(0.1));
    CHECK(curve[2].precision == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(curve[2].recall == 1.0);
}

TEST_CASE("curve metrics handle perfect and degenerate score patterns") {
    // perfectly separated
    const auto separated = make_scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    const auto curve = precision_recall_curve(separated);
    CHECK(auprc(curve) == 1.0);
    CHECK(fpr_at_95_tpr(separated) == 0.0);

    // constant scores: one grouped point, precision = prevalence, FPR jumps to 1
    const auto constant = make_scored({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0});
    const auto flat = precision_recall_curve(constant);
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].precision == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(flat[0].recall == 1.0);
    CHECK(auprc(flat) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(fpr_at_95_tpr(constant) == 1.0);

    // all-positive or all-negative inputs are rejected
    CHECK_THROWS_AS(precision_recall_curve(make_scored({0.1, 0.2}, {1, 1})),
                    std::invalid_argument);
    CHECK_THROWS_AS(fpr_at_95_tpr(make_scored({0.1, 0.2}, {0, 0})), std::invalid_argument);
}

TEST_CASE("fpr_at_95_tpr matches the interleaved hand example") {
    // 20 positives; 4 negatives scored above the 19th positive; remaining 76
    // negatives below every positive
    std::vector<double> scores;
    std::vector<std::uint8_t> ood;
    for (int i = 0; i < 18; ++i) { scores.push_back(100.0 - i); ood.push_back(1); }
    for (int i = 0; i < 4; ++i) { scores.push_back(70.0 - i); ood.push_back(0); }
    scores.push_back(60.0); ood.push_back(1); // 19th positive
    scores.push_back(59.0); ood.push_back(1); // 20th positive
    for (int i = 0; i < 76; ++i) { scores.push_back(40.0 - 0.1 * i); ood.push_back(0); }
    CHECK(fpr_at_95_tpr(make_scored(std::move(scores), std::move(ood))) ==
          doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("auprc and fpr95 agree with brute-force enumeration on random instances") {
    Rng rng(20240813);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 50 + rng.below(1951); // up to 2000 pixels
        std::vector<double> scores(n);
        std::vector<std::uint8_t> ood(n);
        const double quantize = rng.uniform() < 0.5 ? 8.0 : 0.0; // force ties half the time
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            double s = rng.uniform();
            if (quantize > 0.0) s = std::floor(s * quantize) / quantize;
            scores[i] = s;
            ood[i] = rng.uniform() < 0.3 ? 1 : 0;
            (ood[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos) ood[0] = 1;
        if (!has_neg) ood[n - 1] = 0;
        const auto data = make_scored(std::move(scores), std::move(ood));
        CHECK(std::abs(auprc(precision_recall_curve(data)) - auprc_bruteforce(data)) < 1e-12);
        CHECK(std::abs(fpr_at_95_tpr(data) - fpr95_bruteforce(data)) < 1e-12);
    }
}

TEST_CASE("inserting an extra top-scored positive never raises FPR95") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 30 + rng.below(200);
        std::vector<double> scores(n);
        std::vector<std::uint8_t> ood(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform();
            ood[i] = rng.uniform() < 0.4 ? 1 : 0;
        }
        ood[0] = 1;
        ood[1] = 0;
        const auto base = make_scored(scores, ood);
        const double before = fpr_at_95_tpr(base);
        scores.push_back(2.0); // above everything
        ood.push_back(1);
        const double after = fpr_at_95_tpr(make_scored(std::move(scores), std::move(ood)));
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("strictly increasing score transforms leave ranking metrics unchanged") {
    Rng rng(23);
    std::vector<double> scores(400);
    std::vector<std::uint8_t> ood(400);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = std::floor(rng.uniform() * 16.0) / 16.0;
        ood[i] = rng.uniform() < 0.25 ? 1 : 0;
    }
    ood[0] = 1;
    ood[1] = 0;
    const auto base = make_scored(scores, ood);

    auto transformed = scores;
    for (double& s : transformed) s = std::exp(3.0 * s) + 1.0; // strictly increasing
    const auto mapped = make_scored(transformed, ood);

    CHECK(std::abs(auprc(precision_recall_curve(base)) -
                   auprc(precision_recall_curve(mapped))) < 1e-12);
    CHECK(std::abs(fpr_at_95_tpr(base) - fpr_at_95_tpr(mapped)) < 1e-12);

    // segment metrics with the threshold list transformed the same way
    const std::size_t h = 20, w = 20;
    std::vector<double> score_map(h * w);
    std::vector<std::uint8_t> gt(h * w, 0);
    for (std::size_t i = 0; i < score_map.size(); ++i) {
        score_map[i] = std::floor(rng.uniform() * 16.0) / 16.0;
    }
    for (std::size_t y = 5; y < 9; ++y) {
        for (std::size_t x = 5; x < 9; ++x) gt[y * w + x] = 1;
    }
    std::vector<double> thresholds{0.25, 0.5, 0.75};
    std::vector<double> mapped_map = score_map;
    for (double& s : mapped_map) s = std::exp(3.0 * s) + 1.0;
    std::vector<double> mapped_thresholds = thresholds;
    for (double& t : mapped_thresholds) t = std::exp(3.0 * t) + 1.0;

    const auto a = segment_level_metrics({score_map}, {gt}, h, w, thresholds);
    const auto b = segment_level_metrics({mapped_map}, {gt}, h, w, mapped_thresholds);
    CHECK(a.mean_siou == doctest::Approx(b.mean_siou).epsilon(1e-12));
    CHECK(a.mean_ppv == doctest::Approx(b.mean_ppv).epsilon(1e-12));
    CHECK(a.mean_f1 == doctest::Approx(b.mean_f1).epsilon(1e-12));
}

TEST_CASE("entropy and max-softmax rank identically for two classes") {
    Rng rng(29);
    const std::size_t h = 8, w = 8;
    Prediction pred;
    pred.height = h;
    pred.width = w;
    pred.classes = 2;
    pred.probabilities.resize(2 * h * w);
    pred.uncertainty.assign(h * w, 0.5);
    std::vector<std::uint8_t> ood(h * w);
    for (std::size_t px = 0; px < h * w; ++px) {
        const double p = rng.uniform(0.05, 0.95);
        pred.probabilities[px] = p;
        pred.probabilities[h * w + px] = 1.0 - p;
        ood[px] = rng.uniform() < 0.3 ? 1 : 0;
    }
    ood[0] = 1;
    ood[1] = 0;
    const auto ms = make_scored(ood_score_max_softmax(pred), ood);
    const auto ent = make_scored(ood_score_entropy(pred), ood);
    CHECK(std::abs(auprc(precision_recall_curve(ms)) - auprc(precision_recall_curve(ent))) <
          1e-12);
}

TEST_CASE("connected_components handles diagonal adjacency and checkerboards") {
    CHECK(connected_components(std::vector<std::uint8_t>(9, 0), 3, 3).count == 0);

    // two diagonal pixels form one 8-connected component
    std::vector<std::uint8_t> diag(9, 0);
    diag[0] = 1;
    diag[4] = 1;
    CHECK(connected_components(diag, 3, 3).count == 1);

    std::vector<std::uint8_t> checker(16, 0);
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) checker[y * 4 + x] = (x + y) % 2 == 0 ? 1 : 0;
    }
    CHECK(connected_components(checker, 4, 4).count == 1);

    // labels assigned in row-major first-encounter order
    std::vector<std::uint8_t> two(16, 0);
    two[0] = 1;
    two[15] = 1;
    const auto comps = connected_components(two, 4, 4);
    CHECK(comps.count == 2);
    CHECK(comps.labels[0] == 1);
    CHECK(comps.labels[15] == 2);
}

TEST_CASE("component pixel-sets are invariant to traversal direction") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t h = 12, w = 9;
        std::vector<std::uint8_t> mask(h * w);
        for (auto& m : mask) m = rng.uniform() < 0.4 ? 1 : 0;
        const auto direct = connected_components(mask, h, w);

        std::vector<std::uint8_t> transposed(h * w);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) transposed[x * h + y] = mask[y * w + x];
        }
        const auto via_transpose = connected_components(transposed, w, h);
        CHECK(direct.count == via_transpose.count);

        // same partition up to renaming: pixel pairs share a component in one
        // labeling iff they do in the other
        std::map<int, std::set<std::size_t>> sets_a, sets_b;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const int la = direct.labels[y * w + x];
                const int lb = via_transpose.labels[x * h + y];
                CHECK((la == 0) == (lb == 0));
                if (la > 0) {
                    sets_a[la].insert(y * w + x);
                    sets_b[lb].insert(y * w + x);
                }
            }
        }
        std::set<std::set<std::size_t>> partition_a, partition_b;
        for (auto& [label, pixels] : sets_a) partition_a.insert(pixels);
        for (auto& [label, pixels] : sets_b) partition_b.insert(pixels);
        CHECK(partition_a == partition_b);
    }
}

TEST_CASE("segment metrics: exact predictions score 1, empty predictions 0") {
    const std::size_t h = 16, w = 16;
    std::vector<std::uint8_t> gt(h * w, 0);
    for (std::size_t y = 3; y < 8; ++y) {
        for (std::size_t x = 4; x < 9; ++x) gt[y * w + x] = 1;
    }
    std::vector<double> exact(h * w, 0.0);
    for (std::size_t i = 0; i < gt.size(); ++i) exact[i] = gt[i] ? 1.0 : 0.0;

    const auto thresholds = default_thresholds();
    const auto perfect = segment_level_metrics({exact}, {gt}, h, w, thresholds);
    CHECK(perfect.mean_siou == 1.0);
    CHECK(perfect.mean_ppv == 1.0);
    CHECK(perfect.mean_f1 == 1.0);

    const std::vector<double> nothing(h * w, 0.0);
    const auto empty = segment_level_metrics({nothing}, {gt}, h, w, thresholds);
    CHECK(empty.mean_siou == 0.0);
    CHECK(empty.mean_ppv == 0.0);
    CHECK(empty.mean_f1 == 0.0);

    CHECK_THROWS_AS(segment_level_metrics({exact}, {gt}, h, w, std::vector<double>{}),
                    std::invalid_argument);
    const std::vector<std::uint8_t> no_gt(h * w, 0);
    CHECK_THROWS_AS(segment_level_metrics({exact}, {no_gt}, h, w, thresholds),
                    std::invalid_argument);
}

TEST_CASE("segment metrics match the half-overlap hand computation") {
    // gt segment of 100 px; one predicted component covering 50 of them plus
    // 50 background px -> sIoU = 50/150, PPV = 0.5
    const std::size_t h = 20, w = 20;
    std::vector<std::uint8_t> gt(h * w, 0);
    for (std::size_t y = 0; y < 10; ++y) {
        for (std::size_t x = 0; x < 10; ++x) gt[y * w + x] = 1;
    }
    std::vector<double> score(h * w, 0.0);
    // covers gt columns 5..9 (50 px) and columns 10..14 outside gt (50 px)
    for (std::size_t y = 0; y < 10; ++y) {
        for (std::size_t x = 5; x < 15; ++x) score[y * w + x] = 1.0;
    }
    const std::vector<double> tau{0.5};
    const auto report = segment_level_metrics({score}, {gt}, h, w, tau);
    CHECK(report.mean_siou == doctest::Approx(50.0 / 150.0).epsilon(1e-12));
    CHECK(report.mean_ppv == doctest::Approx(0.5).epsilon(1e-12));
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].tp == 1); // sIoU 1/3 >= 0.25
    CHECK(report.rows[0].fp == 0); // PPV 0.5 >= 0.25
    CHECK(report.rows[0].f1 == 1.0);
}

TEST_CASE("sIoU adjustment discounts predictions claimed by other gt segments") {
    // two gt segments; one predicted component spans both
    const std::size_t h = 1, w = 12;
    std::vector<std::uint8_t> gt(w, 0);
    gt[0] = gt[1] = gt[2] = 1;      // segment A (3 px)
    gt[8] = gt[9] = gt[10] = 1;     // segment B (3 px)
    std::vector<double> score(w, 1.0); // single component across all 12 px
    const std::vector<double> tau{0.5};
    const auto report = segment_level_metrics({score}, {gt}, h, w, tau);
    // per segment: inter = 3, union = 3 + 12 - 3 = 12, adjustment = 3 (other
    // segment's pixels) -> sIoU = 3 / 9
    CHECK(report.mean_siou == doctest::Approx(3.0 / 9.0).epsilon(1e-12));
    CHECK(report.mean_ppv == doctest::Approx(6.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("ece reproduces the binned hand examples") {
    // bin A: conf 0.9 acc 0.5 half the mass; bin B: conf 0.6 acc 0.6
    std::vector<double> conf;
    std::vector<std::uint8_t> correct;
    for (int i = 0; i < 100; ++i) {
        conf.push_back(0.9);
        correct.push_back(i < 50 ? 1 : 0);
    }
    for (int i = 0; i < 100; ++i) {
        conf.push_back(0.6);
        correct.push_back(i < 60 ? 1 : 0);
    }
    CHECK(ece_from_scores(conf, correct, 15) == doctest::Approx(0.2).epsilon(1e-12));

    // always confident, always wrong
    const std::vector<double> sure(64, 1.0);
    const std::vector<std::uint8_t> wrong(64, 0);
    CHECK(ece_from_scores(sure, wrong, 15) == doctest::Approx(1.0).epsilon(1e-12));

    // perfectly calibrated within bins
    std::vector<double> cal_conf;
    std::vector<std::uint8_t> cal_correct;
    for (int i = 0; i < 1000; ++i) {
        cal_conf.push_back(0.75);
        cal_correct.push_back(i < 750 ? 1 : 0);
    }
    CHECK(ece_from_scores(cal_conf, cal_correct, 15) < 1e-9);

    CHECK_THROWS_AS(ece_from_scores(conf, correct, 0), std::invalid_argument);
    CHECK_THROWS_AS(ece_from_scores({}, {}, 15), std::invalid_argument);
}
