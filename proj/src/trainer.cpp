#include "edl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "edl/adam.hpp"
#include "edl/errors.hpp"
#include "edl/rng.hpp"

namespace edl {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
    if (total_iterations < 1) throw ConfigError("TrainConfig: total_iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("TrainConfig: checkpoint_every must be >= 1");
    if (!(prior_concentration > 0.0)) {
        throw ConfigError("TrainConfig: prior_concentration must be > 0");
    }
    loss_weights.validate();
    anneal.validate();
}

TrainConfig reference_scale_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.total_iterations = 80000;
    cfg.learning_rate = 3e-4;
    cfg.weight_decay = 1e-4;
    cfg.anneal = AnnealSchedule{40000, 48000, 0.15};
    cfg.checkpoint_every = 10000;
    return cfg;
}

TrainConfig desk_scale_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.total_iterations = 2000;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 1e-4;
    cfg.anneal = AnnealSchedule{1000, 1200, 0.15};
    cfg.checkpoint_every = 500;
    return cfg;
}

namespace {

std::string checkpoint_name(long iteration) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06ld.edlc", iteration);
    return buf;
}

std::string format_row(long iteration, const LossBreakdown& b) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", iteration,
                  b.total, b.wasserstein, b.dice, b.kl, b.mse, b.kl_weight_used);
    return buf;
}

} // namespace

void write_train_log(const std::vector<LossBreakdown>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < log.size(); ++i) {
        out << format_row(static_cast<long>(i) + 1, log[i]);
    }
    if (!out) throw IoError("short write to " + path.string());
}

TrainResult train(const Dataset& train_split, const SegNetConfig& net_config,
                  const TrainConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    net_config.validate();
    if (train_split.samples.empty()) throw DataContractError("train: dataset is empty");
    if (train_split.class_count != net_config.num_classes) {
        throw DataContractError("train: dataset has " + std::to_string(train_split.class_count) +
                                " classes but the model expects " +
                                std::to_string(net_config.num_classes));
    }
    for (std::size_t s = 0; s < train_split.samples.size(); ++s) {
        for (std::uint8_t label : train_split.samples[s].labels) {
            if (label == kOodLabelSentinel) {
                throw DataContractError("train: sample " + std::to_string(s) +
                                        " carries the reserved OOD label in training labels");
            }
            if (label >= net_config.num_classes) {
                throw DataContractError("train: sample " + std::to_string(s) + " has label " +
                                        std::to_string(label) + " out of range");
            }
        }
    }

    std::filesystem::create_directories(out_dir);

    SegNet net(net_config);
    net.init_params(config.seed);
    auto params = net.parameters();
    AdamState adam_state;
    adam_state.init(params);
    const AdamParams adam_hyper;

    Rng batch_rng(mix64(config.seed ^ 0x243f6a8885a308d3ULL));
    std::vector<std::size_t> indices(config.batch_size);
    Tensor grad;
    TrainResult result;
    result.log.reserve(static_cast<std::size_t>(config.total_iterations));

    for (long t = 1; t <= config.total_iterations; ++t) {
        for (std::size_t& idx : indices) idx = batch_rng.below(train_split.samples.size());
        const Tensor images = image_batch(train_split, indices);
        const LabelBatch labels = label_batch(train_split, indices);

        const Tensor logits = net.forward(images);
        const LossBreakdown breakdown =
            total_loss_gradient(logits, labels, config.loss_weights, config.anneal, t, grad,
                                config.prior_concentration);
        net.zero_grad();
        net.backward(grad);

        double lr = config.learning_rate;
        if (config.lr_schedule == LrSchedule::poly) {
            const double progress = static_cast<double>(t - 1) /
                                    static_cast<double>(config.total_iterations);
            lr *= std::pow(1.0 - progress, config.lr_poly_power);
        }
        adam_step(params, adam_hyper, adam_state, lr, config.weight_decay, t);

        result.log.push_back(breakdown);
        if (t % config.checkpoint_every == 0 && t != config.total_iterations) {
            save_checkpoint(make_checkpoint(net), out_dir / checkpoint_name(t));
        }
    }

    result.final_checkpoint = make_checkpoint(net);
    save_checkpoint(result.final_checkpoint, out_dir / kFinalCheckpointFileName);
    write_train_log(result.log, out_dir / kTrainLogFileName);
    return result;
}

Prediction predict(const Checkpoint& checkpoint, const Tensor& image) {
    Tensor input = image;
    if (input.shape.size() == 3) {
        input.shape = {1, image.shape[0], image.shape[1], image.shape[2]};
    }
    if (input.shape.size() != 4 || input.shape[0] != 1) {
        throw std::invalid_argument("predict: expected a single [3][H][W] image");
    }

    SegNet net = to_network(checkpoint);
    const Tensor logits = net.forward(input);
    const std::size_t c = logits.shape[1], h = logits.shape[2], w = logits.shape[3];
    const std::size_t plane = h * w;

    Prediction out;
    out.height = h;
    out.width = w;
    out.classes = c;
    out.probabilities.resize(c * plane);
    out.uncertainty.resize(plane);
    for (std::size_t px = 0; px < plane; ++px) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double l = logits.data[k * plane + px];
            s += (l > 0.0 ? l : 0.0) + 1.0;
        }
        for (std::size_t k = 0; k < c; ++k) {
            const double l = logits.data[k * plane + px];
            out.probabilities[k * plane + px] = ((l > 0.0 ? l : 0.0) + 1.0) / s;
        }
        out.uncertainty[px] = static_cast<double>(c) / s;
    }
    return out;
}

} // namespace edl
