#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edl/checkpoint.hpp"
#include "edl/dataset.hpp"
#include "edl/trainer.hpp"

namespace edl {

// Flattened pixel scores for curve metrics; higher score = more OOD.
struct ScoredPixels {
    std::vector<double> scores;
    std::vector<std::uint8_t> is_ood;
    std::vector<std::uint8_t> valid;

    void validate() const;
};

// Per-pixel OOD scoring functions over a prediction.
std::vector<double> ood_score_uncertainty(const Prediction& pred);
std::vector<double> ood_score_max_softmax(const Prediction& pred);
std::vector<double> ood_score_entropy(const Prediction& pred);

inline constexpr const char* kMethodNames[3] = {"uncertainty", "max_softmax", "entropy"};
bool is_valid_method(const std::string& name);

struct CurvePoint {
    double threshold;
    double precision;
    double recall;
};

// One point per distinct score, thresholds descending, ties grouped.
std::vector<CurvePoint> precision_recall_curve(const ScoredPixels& data);

// Step-wise area: sum of precision * recall increment over grouped thresholds.
double auprc(std::span<const CurvePoint> curve);

// FPR at the largest threshold whose TPR reaches 0.95, ties grouped.
double fpr_at_95_tpr(const ScoredPixels& data);

// 8-connected labeling; labels 1..count in row-major first-encounter order.
struct ComponentLabels {
    std::vector<int> labels;
    int count = 0;
};
ComponentLabels connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                     std::size_t width);

struct ThresholdDetail {
    double threshold = 0.0;
    double mean_siou = 0.0;
    double mean_ppv = 0.0; // over predicted components; 0 when there are none
    std::size_t gt_segments = 0;
    std::size_t pred_components = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double f1 = 0.0;
};

struct SegmentMatchReport {
    double mean_siou = 0.0;
    double mean_ppv = 0.0;
    double mean_f1 = 0.0;
    std::vector<ThresholdDetail> rows;
};

// Segment-level protocol: per threshold, predicted components from
// score >= threshold; per gt segment adjusted IoU against the union of
// intersecting components; TP cutoff 0.25 on sIoU, FP cutoff 0.25 on PPV.
SegmentMatchReport segment_level_metrics(const std::vector<std::vector<double>>& score_maps,
                                         const std::vector<std::vector<std::uint8_t>>& gt_masks,
                                         std::size_t height, std::size_t width,
                                         std::span<const double> thresholds);

// Equal-width binning on max-probability confidence.
double ece_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                       int bins);

// ECE over in-distribution (non-OOD) pixels of an eval split.
double ece(const std::vector<Prediction>& predictions, const Dataset& eval_split, int bins);

struct EvalReport {
    std::string method;
    double auprc = 0.0;
    double fpr95 = 0.0;
    double mean_siou = 0.0;
    double mean_ppv = 0.0;
    double mean_f1 = 0.0;
    double ece = 0.0;
    std::size_t images = 0;
};

// thresholds 0.25 .. 0.75 step 0.05
std::vector<double> default_thresholds();

std::vector<EvalReport> evaluate(const Checkpoint& checkpoint, const Dataset& eval_split,
                                 std::span<const std::string> methods,
                                 std::span<const double> thresholds, int workers, int ece_bins);

std::string format_report_table(std::span<const EvalReport> reports);

// Optional per-image detail: mean scores on OOD vs in-distribution pixels.
std::string format_image_details(const Checkpoint& checkpoint, const Dataset& eval_split,
                                 std::span<const std::string> methods, int workers);

// Fraction of correctly argmax-classified pixels, skipping OOD-masked ones.
double in_distribution_accuracy(const std::vector<Prediction>& predictions,
                                const Dataset& split);

} // namespace edl
