#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "edl/dataset.hpp"
#include "edl/segnet.hpp"
#include "edl/trainer.hpp"

namespace edl {

// Run configuration file: INI-style sections [data] [model] [train] [loss]
// [eval]. Parsing is strict: unknown sections or keys and duplicate keys are
// fatal, with the offending line reported. Missing keys fall back to the
// desk-scale defaults.
struct EvalConfig {
    std::vector<double> thresholds; // empty = default 0.25..0.75 step 0.05
    int ece_bins = 15;
    std::vector<std::string> methods = {"uncertainty", "max_softmax", "entropy"};
};

struct RunConfig {
    DatasetConfig data;
    SegNetConfig model;
    TrainConfig train;
    EvalConfig eval;
    bool model_classes_explicit = false;

    // effective key = value listing, echoed for provenance
    std::string echo() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// FNV-1a over the raw file bytes; hex string.
std::string config_hash_file(const std::filesystem::path& path);

} // namespace edl
