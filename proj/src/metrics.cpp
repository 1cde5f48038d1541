#include "edl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "edl/errors.hpp"

namespace edl {

void ScoredPixels::validate() const {
    if (scores.size() != is_ood.size() || scores.size() != valid.size()) {
        throw std::invalid_argument("ScoredPixels: parallel arrays differ in length");
    }
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!valid[i]) continue;
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument("ScoredPixels: non-finite score at index " +
                                        std::to_string(i));
        }
        (is_ood[i] ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw std::invalid_argument(
            "ScoredPixels: curve metrics need at least one positive and one negative pixel");
    }
}

std::vector<double> ood_score_uncertainty(const Prediction& pred) {
    return pred.uncertainty;
}

std::vector<double> ood_score_max_softmax(const Prediction& pred) {
    const std::size_t plane = pred.height * pred.width;
    std::vector<double> out(plane);
    for (std::size_t px = 0; px < plane; ++px) {
        double best = 0.0;
        for (std::size_t c = 0; c < pred.classes; ++c) {
            best = std::max(best, pred.probabilities[c * plane + px]);
        }
        out[px] = 1.0 - best;
    }
    return out;
}

std::vector<double> ood_score_entropy(const Prediction& pred) {
    const std::size_t plane = pred.height * pred.width;
    std::vector<double> out(plane);
    for (std::size_t px = 0; px < plane; ++px) {
        double h = 0.0;
        for (std::size_t c = 0; c < pred.classes; ++c) {
            const double p = pred.probabilities[c * plane + px];
            if (p > 0.0) h -= p * std::log(p);
        }
        out[px] = h;
    }
    return out;
}

bool is_valid_method(const std::string& name) {
    for (const char* m : kMethodNames) {
        if (name == m) return true;
    }
    return false;
}

namespace {

// Indices of valid pixels sorted by score descending, pixel index as
// tiebreaker; makes every downstream metric independent of input chunking.
std::vector<std::size_t> sorted_valid_indices(const ScoredPixels& data) {
    std::vector<std::size_t> idx;
    idx.reserve(data.scores.size());
    for (std::size_t i = 0; i < data.scores.size(); ++i) {
        if (data.valid[i]) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (data.scores[a] != data.scores[b]) return data.scores[a] > data.scores[b];
        return a < b;
    });
    return idx;
}

} // namespace

std::vector<CurvePoint> precision_recall_curve(const ScoredPixels& data) {
    data.validate();
    const std::vector<std::size_t> idx = sorted_valid_indices(data);
    std::size_t total_pos = 0;
    for (std::size_t i : idx) total_pos += data.is_ood[i] ? 1 : 0;

    std::vector<CurvePoint> curve;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double score = data.scores[idx[i]];
        std::size_t j = i;
        while (j < idx.size() && data.scores[idx[j]] == score) {
            (data.is_ood[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        curve.push_back({score, static_cast<double>(tp) / static_cast<double>(tp + fp),
                         static_cast<double>(tp) / static_cast<double>(total_pos)});
        i = j;
    }
    return curve;
}

double auprc(std::span<const CurvePoint> curve) {
    if (curve.empty()) throw std::invalid_argument("auprc: empty curve");
    double area = 0.0;
    double prev_recall = 0.0;
    for (const CurvePoint& pt : curve) {
        area += (pt.recall - prev_recall) * pt.precision;
        prev_recall = pt.recall;
    }
    return area;
}

double fpr_at_95_tpr(const ScoredPixels& data) {
    data.validate();
    const std::vector<std::size_t> idx = sorted_valid_indices(data);
    std::size_t total_pos = 0;
    for (std::size_t i : idx) total_pos += data.is_ood[i] ? 1 : 0;
    const std::size_t total_neg = idx.size() - total_pos;

    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double score = data.scores[idx[i]];
        std::size_t j = i;
        while (j < idx.size() && data.scores[idx[j]] == score) {
            (data.is_ood[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(total_pos);
        if (tpr >= 0.95) {
            return static_cast<double>(fp) / static_cast<double>(total_neg);
        }
        i = j;
    }
    return 1.0; // unreachable: tpr hits 1 at the last group
}

ComponentLabels connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                     std::size_t width) {
    if (mask.size() != height * width) {
        throw std::invalid_argument("connected_components: mask size mismatch");
    }
    ComponentLabels out;
    out.labels.assign(mask.size(), 0);
    std::vector<std::size_t> stack;
    const long h = static_cast<long>(height), w = static_cast<long>(width);
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || out.labels[start] != 0) continue;
        const int label = ++out.count;
        out.labels[start] = label;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t px = stack.back();
            stack.pop_back();
            const long y = static_cast<long>(px / width), x = static_cast<long>(px % width);
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const long ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const std::size_t np = static_cast<std::size_t>(ny) * width +
                                           static_cast<std::size_t>(nx);
                    if (mask[np] && out.labels[np] == 0) {
                        out.labels[np] = label;
                        stack.push_back(np);
                    }
                }
            }
        }
    }
    return out;
}

SegmentMatchReport segment_level_metrics(const std::vector<std::vector<double>>& score_maps,
                                         const std::vector<std::vector<std::uint8_t>>& gt_masks,
                                         std::size_t height, std::size_t width,
                                         std::span<const double> thresholds) {
    if (thresholds.empty()) {
        throw std::invalid_argument("segment_level_metrics: empty threshold list");
    }
    if (score_maps.size() != gt_masks.size()) {
        throw std::invalid_argument("segment_level_metrics: score/gt counts differ");
    }
    const std::size_t plane = height * width;

    // ground-truth segments are threshold-independent
    std::vector<ComponentLabels> gt_components(gt_masks.size());
    std::size_t total_gt_segments = 0;
    for (std::size_t i = 0; i < gt_masks.size(); ++i) {
        if (gt_masks[i].size() != plane || score_maps[i].size() != plane) {
            throw std::invalid_argument("segment_level_metrics: map size mismatch at image " +
                                        std::to_string(i));
        }
        gt_components[i] = connected_components(gt_masks[i], height, width);
        total_gt_segments += static_cast<std::size_t>(gt_components[i].count);
    }
    if (total_gt_segments == 0) {
        throw std::invalid_argument("segment_level_metrics: no ground-truth segments in the set");
    }

    SegmentMatchReport report;
    double siou_over_thresholds = 0.0;
    double ppv_over_thresholds = 0.0;
    std::size_t thresholds_with_components = 0;
    double f1_over_thresholds = 0.0;

    std::vector<std::uint8_t> pred_mask(plane);
    for (const double tau : thresholds) {
        ThresholdDetail row;
        row.threshold = tau;
        double siou_sum = 0.0;
        double ppv_sum = 0.0;

        for (std::size_t img = 0; img < score_maps.size(); ++img) {
            const auto& scores = score_maps[img];
            const auto& gt = gt_components[img];
            for (std::size_t px = 0; px < plane; ++px) {
                pred_mask[px] = scores[px] >= tau ? 1 : 0;
            }
            const ComponentLabels pred = connected_components(pred_mask, height, width);
            row.pred_components += static_cast<std::size_t>(pred.count);

            const std::size_t n_gt = static_cast<std::size_t>(gt.count);
            const std::size_t n_pred = static_cast<std::size_t>(pred.count);

            // sizes and pairwise overlaps
            std::vector<std::size_t> gt_size(n_gt, 0), pred_size(n_pred, 0);
            std::vector<std::size_t> pred_in_gt(n_pred, 0); // |k cap GT-union|
            std::vector<std::vector<std::size_t>> overlap(n_gt,
                                                          std::vector<std::size_t>(n_pred, 0));
            for (std::size_t px = 0; px < plane; ++px) {
                const int g = gt.labels[px];
                const int k = pred.labels[px];
                if (g > 0) gt_size[g - 1] += 1;
                if (k > 0) pred_size[k - 1] += 1;
                if (g > 0 && k > 0) {
                    overlap[g - 1][k - 1] += 1;
                    pred_in_gt[k - 1] += 1;
                }
            }

            for (std::size_t g = 0; g < n_gt; ++g) {
                // union of predicted components intersecting this gt segment
                std::size_t union_size = 0, inter = 0, adjustment = 0;
                for (std::size_t k = 0; k < n_pred; ++k) {
                    if (overlap[g][k] == 0) continue;
                    union_size += pred_size[k];
                    inter += overlap[g][k];
                    // predicted pixels lying in other gt segments
                    adjustment += pred_in_gt[k] - overlap[g][k];
                }
                const double denom =
                    static_cast<double>(gt_size[g] + union_size - inter - adjustment);
                const double siou = denom > 0.0 ? static_cast<double>(inter) / denom : 0.0;
                siou_sum += siou;
                if (siou >= 0.25) row.tp += 1;
            }
            for (std::size_t k = 0; k < n_pred; ++k) {
                const double ppv =
                    static_cast<double>(pred_in_gt[k]) / static_cast<double>(pred_size[k]);
                ppv_sum += ppv;
                if (ppv < 0.25) row.fp += 1;
            }
        }

        row.gt_segments = total_gt_segments;
        row.fn = total_gt_segments - row.tp;
        row.mean_siou = siou_sum / static_cast<double>(total_gt_segments);
        if (row.pred_components > 0) {
            row.mean_ppv = ppv_sum / static_cast<double>(row.pred_components);
            ppv_over_thresholds += row.mean_ppv;
            thresholds_with_components += 1;
        }
        row.f1 = 2.0 * static_cast<double>(row.tp) /
                 static_cast<double>(2 * row.tp + row.fp + row.fn);
        siou_over_thresholds += row.mean_siou;
        f1_over_thresholds += row.f1;
        report.rows.push_back(row);
    }

    const double nt = static_cast<double>(thresholds.size());
    report.mean_siou = siou_over_thresholds / nt;
    report.mean_f1 = f1_over_thresholds / nt;
    report.mean_ppv = thresholds_with_components > 0
                          ? ppv_over_thresholds / static_cast<double>(thresholds_with_components)
                          : 0.0;
    return report;
}

double ece_from_scores(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                       int bins) {
    if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
    if (confidence.size() != correct.size()) {
        throw std::invalid_argument("ece: confidence/correct size mismatch");
    }
    if (confidence.empty()) throw std::invalid_argument("ece: no valid pixels");

    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> n(bins, 0);
    for (std::size_t i = 0; i < confidence.size(); ++i) {
        int b = static_cast<int>(confidence[i] * bins);
        b = std::clamp(b, 0, bins - 1);
        conf_sum[b] += confidence[i];
        acc_sum[b] += correct[i] ? 1.0 : 0.0;
        n[b] += 1;
    }
    double out = 0.0;
    const double total = static_cast<double>(confidence.size());
    for (int b = 0; b < bins; ++b) {
        if (n[b] == 0) continue;
        const double nb = static_cast<double>(n[b]);
        out += nb / total * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
    }
    return out;
}

double ece(const std::vector<Prediction>& predictions, const Dataset& eval_split, int bins) {
    std::vector<double> confidence;
    std::vector<std::uint8_t> correct;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Prediction& pred = predictions[i];
        const Sample& sample = eval_split.samples[i];
        const std::size_t plane = pred.height * pred.width;
        for (std::size_t px = 0; px < plane; ++px) {
            if (sample.ood_mask[px]) continue;
            double best = -1.0;
            std::size_t arg = 0;
            for (std::size_t c = 0; c < pred.classes; ++c) {
                const double p = pred.probabilities[c * plane + px];
                if (p > best) {
                    best = p;
                    arg = c;
                }
            }
            confidence.push_back(best);
            correct.push_back(arg == sample.labels[px] ? 1 : 0);
        }
    }
    return ece_from_scores(confidence, correct, bins);
}

std::vector<double> default_thresholds() {
    std::vector<double> out;
    for (int i = 0; i <= 10; ++i) out.push_back(0.25 + 0.05 * i);
    return out;
}

namespace {

std::vector<Prediction> predict_all(const Checkpoint& checkpoint, const Dataset& split,
                                    int workers) {
    if (workers < 1) throw std::invalid_argument("evaluate: workers must be >= 1");
    std::vector<Prediction> out(split.samples.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = predict(checkpoint, single_image_tensor(split.samples[i]));
        }
    };
    const std::size_t n = split.samples.size();
    const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), n ? n : 1);
    if (nw <= 1) {
        run(0, n);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nw; ++w) {
            const std::size_t begin = n * w / nw, end = n * (w + 1) / nw;
            pool.emplace_back(run, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

std::vector<double> score_with(const std::string& method, const Prediction& pred) {
    if (method == "uncertainty") return ood_score_uncertainty(pred);
    if (method == "max_softmax") return ood_score_max_softmax(pred);
    if (method == "entropy") return ood_score_entropy(pred);
    throw ConfigError("unknown method '" + method +
                      "'; valid methods: uncertainty, max_softmax, entropy");
}

} // namespace

std::vector<EvalReport> evaluate(const Checkpoint& checkpoint, const Dataset& eval_split,
                                 std::span<const std::string> methods,
                                 std::span<const double> thresholds, int workers, int ece_bins) {
    if (methods.empty()) throw ConfigError("evaluate: empty method list");
    for (const std::string& m : methods) {
        if (!is_valid_method(m)) {
            throw ConfigError("unknown method '" + m +
                              "'; valid methods: uncertainty, max_softmax, entropy");
        }
    }
    if (eval_split.samples.empty()) throw DataContractError("evaluate: empty eval split");

    const std::vector<Prediction> predictions = predict_all(checkpoint, eval_split, workers);
    const double calibration = ece(predictions, eval_split, ece_bins);
    const std::size_t plane = eval_split.height * eval_split.width;

    std::vector<EvalReport> reports;
    for (const std::string& method : methods) {
        std::vector<std::vector<double>> score_maps(predictions.size());
        std::vector<std::vector<std::uint8_t>> gt_masks(predictions.size());
        ScoredPixels pooled;
        pooled.scores.reserve(predictions.size() * plane);
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            score_maps[i] = score_with(method, predictions[i]);
            gt_masks[i] = eval_split.samples[i].ood_mask;
            pooled.scores.insert(pooled.scores.end(), score_maps[i].begin(), score_maps[i].end());
            pooled.is_ood.insert(pooled.is_ood.end(), gt_masks[i].begin(), gt_masks[i].end());
        }
        pooled.valid.assign(pooled.scores.size(), 1);

        EvalReport report;
        report.method = method;
        report.auprc = auprc(precision_recall_curve(pooled));
        report.fpr95 = fpr_at_95_tpr(pooled);
        const SegmentMatchReport seg = segment_level_metrics(
            score_maps, gt_masks, eval_split.height, eval_split.width, thresholds);
        report.mean_siou = seg.mean_siou;
        report.mean_ppv = seg.mean_ppv;
        report.mean_f1 = seg.mean_f1;
        report.ece = calibration;
        report.images = eval_split.samples.size();
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string format_report_table(std::span<const EvalReport> reports) {
    std::string out = "method\tAuPRC\tFPR95\tsIoU\tPPV\tF1\tECE\timages\n";
    char buf[256];
    for (const EvalReport& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%zu\n",
                      r.method.c_str(), r.auprc, r.fpr95, r.mean_siou, r.mean_ppv, r.mean_f1,
                      r.ece, r.images);
        out += buf;
    }
    return out;
}

std::string format_image_details(const Checkpoint& checkpoint, const Dataset& eval_split,
                                 std::span<const std::string> methods, int workers) {
    const std::vector<Prediction> predictions = predict_all(checkpoint, eval_split, workers);
    std::string out = "method\timage\tood_pixels\tmean_score_ood\tmean_score_in\n";
    char buf[256];
    for (const std::string& method : methods) {
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const std::vector<double> scores = score_with(method, predictions[i]);
            const Sample& sample = eval_split.samples[i];
            double sum_ood = 0.0, sum_in = 0.0;
            std::size_t n_ood = 0, n_in = 0;
            for (std::size_t px = 0; px < scores.size(); ++px) {
                if (sample.ood_mask[px]) {
                    sum_ood += scores[px];
                    ++n_ood;
                } else {
                    sum_in += scores[px];
                    ++n_in;
                }
            }
            std::snprintf(buf, sizeof(buf), "%s\t%zu\t%zu\t%.6f\t%.6f\n", method.c_str(), i, n_ood,
                          n_ood ? sum_ood / static_cast<double>(n_ood) : 0.0,
                          n_in ? sum_in / static_cast<double>(n_in) : 0.0);
            out += buf;
        }
    }
    return out;
}

double in_distribution_accuracy(const std::vector<Prediction>& predictions, const Dataset& split) {
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Prediction& pred = predictions[i];
        const Sample& sample = split.samples[i];
        const std::size_t plane = pred.height * pred.width;
        for (std::size_t px = 0; px < plane; ++px) {
            if (sample.ood_mask[px]) continue;
            double best = -1.0;
            std::size_t arg = 0;
            for (std::size_t c = 0; c < pred.classes; ++c) {
                const double p = pred.probabilities[c * plane + px];
                if (p > best) {
                    best = p;
                    arg = c;
                }
            }
            correct += arg == sample.labels[px] ? 1 : 0;
            total += 1;
        }
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

} // namespace edl
