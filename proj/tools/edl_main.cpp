// Command-line surface: dataset generation, training, evaluation, gradient
// checking, KL schedule tables, and uncertainty heatmap export.
//
// Exit codes: 0 success, 1 check failure, 2 config/usage error, 3 I/O error,
// 4 data-contract violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edl/checkpoint.hpp"
#include "edl/config.hpp"
#include "edl/dataset.hpp"
#include "edl/errors.hpp"
#include "edl/gradcheck.hpp"
#include "edl/losses.hpp"
#include "edl/metrics.hpp"
#include "edl/pgm.hpp"
#include "edl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDataContract = 4;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw edl::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw edl::IoError("short write to " + path.string());
}

std::vector<std::string> split_methods(const std::string& arg) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream stream(arg);
    while (std::getline(stream, token, ',')) {
        if (!token.empty()) out.push_back(token);
    }
    return out;
}

int cmd_generate_data(const std::string& config_path, const std::string& out_dir) {
    const edl::RunConfig cfg = edl::load_run_config(config_path);
    fs::create_directories(out_dir);
    const edl::GeneratedDataset ds = edl::generate_dataset(cfg.data);
    edl::save_dataset(ds.train, fs::path(out_dir) / edl::kTrainFileName);
    edl::save_dataset(ds.eval, fs::path(out_dir) / edl::kEvalFileName);

    nlohmann::json manifest;
    manifest["config_hash"] = edl::config_hash_file(config_path);
    manifest["seed"] = cfg.data.seed;
    manifest["image_height"] = cfg.data.height;
    manifest["image_width"] = cfg.data.width;
    manifest["class_count"] = cfg.data.class_count();
    manifest["train_samples"] = ds.train.samples.size();
    manifest["eval_samples"] = ds.eval.samples.size();
    manifest["files"] = {{"train", edl::kTrainFileName}, {"eval", edl::kEvalFileName}};
    write_text(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
    write_text(fs::path(out_dir) / "config_echo.txt", cfg.echo());

    std::cout << "wrote " << ds.train.samples.size() << " train / " << ds.eval.samples.size()
              << " eval samples to " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    const edl::RunConfig cfg = edl::load_run_config(config_path);
    const edl::Dataset train_split = edl::load_dataset_file(fs::path(data_dir) / edl::kTrainFileName);
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config_echo.txt", cfg.echo());
    std::cout << cfg.echo();

    const edl::TrainResult result = edl::train(train_split, cfg.model, cfg.train, out_dir);
    std::cout << "final total loss " << result.log.back().total << " after "
              << result.log.size() << " iterations; checkpoint at "
              << (fs::path(out_dir) / edl::kFinalCheckpointFileName).string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& methods_arg, const std::string& out_path,
                 const std::string& config_path, const std::string& detail_path, int workers) {
    const std::vector<std::string> methods = split_methods(methods_arg);
    if (methods.empty()) {
        throw edl::ConfigError("no methods given; valid methods: uncertainty, max_softmax, entropy");
    }
    edl::EvalConfig eval_cfg;
    if (!config_path.empty()) eval_cfg = edl::load_run_config(config_path).eval;
    const std::vector<double> thresholds =
        eval_cfg.thresholds.empty() ? edl::default_thresholds() : eval_cfg.thresholds;

    const edl::Checkpoint ckpt = edl::load_checkpoint(checkpoint_path);
    const edl::Dataset eval_split = edl::load_dataset_file(fs::path(data_dir) / edl::kEvalFileName);

    const std::vector<edl::EvalReport> reports =
        edl::evaluate(ckpt, eval_split, methods, thresholds, workers, eval_cfg.ece_bins);
    const std::string table = edl::format_report_table(reports);
    if (out_path.empty()) {
        std::cout << table;
    } else {
        write_text(out_path, table);
        std::cout << "wrote report to " << out_path << "\n";
    }
    if (!detail_path.empty()) {
        write_text(detail_path, edl::format_image_details(ckpt, eval_split, methods, workers));
    }
    return kExitOk;
}

int cmd_grad_check(int trials, std::uint64_t seed, bool negative_control) {
    if (trials < 1) throw edl::ConfigError("--trials must be >= 1");
    const edl::GradCheckReport report =
        edl::run_gradient_check(trials, seed, 1e-5, negative_control);
    std::cout << edl::format_gradcheck_report(report);
    return report.pass ? kExitOk : kExitCheckFailure;
}

int cmd_kl_table(const std::string& config_path, const std::string& out_path, long points) {
    edl::TrainConfig train = edl::desk_scale_defaults();
    if (!config_path.empty()) train = edl::load_run_config(config_path).train;
    const edl::AnnealSchedule& schedule = train.anneal;

    std::set<long> iterations = {0, schedule.ramp_start,
                                 (schedule.ramp_start + schedule.ramp_end) / 2,
                                 schedule.ramp_end, train.total_iterations};
    for (long i = 1; i < points; ++i) {
        iterations.insert(train.total_iterations * i / points);
    }
    std::string table = "iteration\tkl_weight\n";
    char buf[64];
    for (long it : iterations) {
        if (it < 0 || it > train.total_iterations) continue;
        std::snprintf(buf, sizeof(buf), "%ld\t%.17g\n", it, edl::kl_weight(it, schedule));
        table += buf;
    }
    if (out_path.empty()) {
        std::cout << table;
    } else {
        write_text(out_path, table);
    }
    return kExitOk;
}

int cmd_heatmap(const std::string& checkpoint_path, const std::string& data_dir, long index,
                const std::string& image_path, const std::string& out_path) {
    const edl::Checkpoint ckpt = edl::load_checkpoint(checkpoint_path);
    edl::Tensor image;
    if (!image_path.empty()) {
        const edl::Ppm8 ppm = edl::read_ppm8(image_path);
        image = edl::Tensor::zeros({3, ppm.height, ppm.width});
        for (std::size_t i = 0; i < ppm.rgb.size(); ++i) image.data[i] = ppm.rgb[i] / 255.0;
    } else {
        if (data_dir.empty()) {
            throw edl::ConfigError("heatmap needs either --image or --data with --index");
        }
        const edl::Dataset eval_split =
            edl::load_dataset_file(fs::path(data_dir) / edl::kEvalFileName);
        if (index < 0 || static_cast<std::size_t>(index) >= eval_split.samples.size()) {
            throw edl::ConfigError("--index " + std::to_string(index) +
                                   " out of range; eval split has " +
                                   std::to_string(eval_split.samples.size()) + " images");
        }
        image = edl::single_image_tensor(eval_split.samples[static_cast<std::size_t>(index)]);
        image.shape = {3, eval_split.height, eval_split.width};
    }
    const edl::Prediction pred = edl::predict(ckpt, image);
    edl::write_pgm16(out_path, pred.width, pred.height,
                     edl::uncertainty_to_pgm_values(pred.uncertainty));
    std::cout << "wrote " << pred.width << "x" << pred.height << " heatmap to " << out_path
              << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"evidential OOD segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, methods_arg, checkpoint_path, image_path,
        detail_path;
    int trials = 200;
    int workers = 1;
    long index = 0;
    long points = 8;
    std::uint64_t seed = 1;
    bool negative_control = false;

    auto* generate = app.add_subcommand("generate-data", "generate a shapes dataset");
    generate->add_option("--config", config_path, "run config file")->required();
    generate->add_option("--out", out_path, "output directory")->required();

    auto* train = app.add_subcommand("train", "train the evidential segmentation model");
    train->add_option("--config", config_path, "run config file")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_path, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "run the OOD metric suite");
    evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    evaluate->add_option("--data", data_dir, "dataset directory")->required();
    evaluate->add_option("--methods", methods_arg, "comma-separated scoring methods")
        ->default_val("uncertainty,max_softmax,entropy");
    evaluate->add_option("--out", out_path, "report file (stdout when omitted)");
    evaluate->add_option("--config", config_path, "run config for thresholds/bins");
    evaluate->add_option("--detail", detail_path, "per-image detail file");
    evaluate->add_option("--workers", workers, "parallel workers")->default_val(1);

    auto* gradcheck = app.add_subcommand("grad-check", "verify analytic loss gradients");
    gradcheck->add_option("--trials", trials, "random configurations")->default_val(200);
    gradcheck->add_option("--seed", seed, "rng seed")->default_val(1);
    gradcheck
        ->add_flag("--negative-control", negative_control,
                   "flip the analytic gradient sign; the check must then fail")
        ->group("");

    auto* kltable = app.add_subcommand("kl-table", "print the KL annealing schedule");
    kltable->add_option("--config", config_path, "run config file");
    kltable->add_option("--out", out_path, "output file (stdout when omitted)");
    kltable->add_option("--points", points, "sample points across the run")->default_val(8);

    auto* heatmap = app.add_subcommand("heatmap", "export an uncertainty heatmap as 16-bit PGM");
    heatmap->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    heatmap->add_option("--data", data_dir, "dataset directory (with --index)");
    heatmap->add_option("--index", index, "eval image index")->default_val(0);
    heatmap->add_option("--image", image_path, "standalone PPM (P6) image");
    heatmap->add_option("--out", out_path, "output PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (generate->parsed()) return cmd_generate_data(config_path, out_path);
        if (train->parsed()) return cmd_train(config_path, data_dir, out_path);
        if (evaluate->parsed()) {
            return cmd_evaluate(checkpoint_path, data_dir, methods_arg, out_path, config_path,
                                detail_path, workers);
        }
        if (gradcheck->parsed()) return cmd_grad_check(trials, seed, negative_control);
        if (kltable->parsed()) return cmd_kl_table(config_path, out_path, points);
        if (heatmap->parsed()) {
            return cmd_heatmap(checkpoint_path, data_dir, index, image_path, out_path);
        }
    } catch (const edl::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const edl::IoError& ex) {
        std::cerr << "io error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const edl::DataContractError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kExitDataContract;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitCheckFailure;
    }
    return kExitConfig;
}
