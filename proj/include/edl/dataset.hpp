#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edl/tensor.hpp"

namespace edl {

enum class ShapeKind { square, circle, triangle, cross };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

// Shapes-world generator config. class_count() = background + shape classes;
// the OOD shape appears only in eval images and only in the ood mask.
struct DatasetConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t num_train = 200;
    std::size_t num_eval = 50;
    std::vector<ShapeKind> shape_classes = {ShapeKind::square, ShapeKind::circle,
                                            ShapeKind::triangle};
    ShapeKind ood_shape = ShapeKind::cross;
    double noise_std = 0.02;
    int min_radius = 4;
    int max_radius = 8;
    int shapes_min = 3;
    int shapes_max = 5;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t class_count() const { return shape_classes.size() + 1; }
};

// Image is 8-bit planar RGB [3][H][W]; labels are 0-based class indices with
// 0 = background; ood_mask is 1 on out-of-distribution pixels (eval only).
struct Sample {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> image;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> ood_mask;
};

struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t class_count = 0;
    std::vector<Sample> samples;
};

struct GeneratedDataset {
    Dataset train;
    Dataset eval;
};

// Reserved sentinel; generated labels never contain it, the trainer rejects it.
inline constexpr std::uint8_t kOodLabelSentinel = 255;

inline constexpr const char* kTrainFileName = "train.edsd";
inline constexpr const char* kEvalFileName = "eval.edsd";
inline constexpr std::uint16_t kDatasetVersion = 1;

GeneratedDataset generate_dataset(const DatasetConfig& config);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset_file(const std::filesystem::path& path);

// Rasterizer used by the generator; exposed for geometry tests. Paints the
// label as well unless label == kOodLabelSentinel (OOD pixels keep the
// background label and set the ood mask instead).
void draw_shape(Sample& sample, ShapeKind kind, int cx, int cy, int radius, const double rgb[3],
                std::uint8_t label);

// Batch assembly for the trainer (values scaled to [0,1]).
Tensor image_batch(const Dataset& dataset, std::span<const std::size_t> indices);
LabelBatch label_batch(const Dataset& dataset, std::span<const std::size_t> indices);
Tensor single_image_tensor(const Sample& sample);

} // namespace edl
