#include "edl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "edl/errors.hpp"
#include "edl/rng.hpp"

namespace edl {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'S', 'D'};
constexpr int kPlacementAttempts = 1000;

constexpr double kBackground[3] = {0.40, 0.40, 0.40};
constexpr double kClassPalette[3][3] = {
    {0.80, 0.15, 0.15},
    {0.15, 0.75, 0.20},
    {0.15, 0.25, 0.80},
};
constexpr double kOodColor[3] = {0.85, 0.75, 0.10};

struct Placed {
    int cx, cy, radius;
};

bool inside_shape(ShapeKind kind, int dx, int dy, int r) {
    switch (kind) {
        case ShapeKind::square:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case ShapeKind::circle:
            return dx * dx + dy * dy <= r * r;
        case ShapeKind::triangle: {
            if (dy < -r || dy > r) return false;
            const int halfwidth = (dy + r) / 2;
            return std::abs(dx) <= halfwidth;
        }
        case ShapeKind::cross: {
            const int arm = std::max(1, r / 3);
            return (std::abs(dx) <= arm && std::abs(dy) <= r) ||
                   (std::abs(dy) <= arm && std::abs(dx) <= r);
        }
    }
    return false;
}

struct Canvas {
    std::size_t h, w;
    std::vector<double> rgb; // [3][H][W]
};

void paint(Canvas& canvas, Sample& sample, ShapeKind kind, int cx, int cy, int r,
           const double color[3], std::uint8_t label) {
    const long h = static_cast<long>(canvas.h), w = static_cast<long>(canvas.w);
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (!inside_shape(kind, dx, dy, r)) continue;
            const long x = cx + dx, y = cy + dy;
            if (x < 0 || x >= w || y < 0 || y >= h) continue;
            const std::size_t px = static_cast<std::size_t>(y) * canvas.w +
                                   static_cast<std::size_t>(x);
            for (int c = 0; c < 3; ++c) canvas.rgb[c * canvas.h * canvas.w + px] = color[c];
            if (label == kOodLabelSentinel) {
                sample.ood_mask[px] = 1;
            } else {
                sample.labels[px] = label;
            }
        }
    }
}

Sample generate_sample(const DatasetConfig& cfg, std::uint64_t sample_seed, bool with_ood,
                       std::size_t sample_index) {
    Rng geom(sample_seed);
    Rng noise(mix64(sample_seed ^ 0x6a09e667f3bcc909ULL));

    Sample sample;
    sample.height = cfg.height;
    sample.width = cfg.width;
    const std::size_t plane = cfg.height * cfg.width;
    sample.labels.assign(plane, 0);
    sample.ood_mask.assign(plane, 0);

    Canvas canvas{cfg.height, cfg.width, {}};
    canvas.rgb.resize(3 * plane);
    for (int c = 0; c < 3; ++c) {
        std::fill_n(canvas.rgb.begin() + c * static_cast<long>(plane), plane, kBackground[c]);
    }

    // pixel-exact overlap test with a one-pixel margin, against everything
    // painted so far (labels and ood mask double as the occupancy grid)
    auto fits = [&](ShapeKind kind, int cx, int cy, int r) {
        const int h = static_cast<int>(cfg.height), w = static_cast<int>(cfg.width);
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                if (!inside_shape(kind, dx, dy, r)) continue;
                for (int ny = cy + dy - 1; ny <= cy + dy + 1; ++ny) {
                    for (int nx = cx + dx - 1; nx <= cx + dx + 1; ++nx) {
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        const std::size_t px = static_cast<std::size_t>(ny) * cfg.width +
                                               static_cast<std::size_t>(nx);
                        if (sample.labels[px] != 0 || sample.ood_mask[px] != 0) return false;
                    }
                }
            }
        }
        return true;
    };

    auto place = [&](ShapeKind kind, int radius) -> Placed {
        const int max_x = static_cast<int>(cfg.width) - 1 - radius;
        const int max_y = static_cast<int>(cfg.height) - 1 - radius;
        if (max_x < radius || max_y < radius) {
            throw ConfigError("sample " + std::to_string(sample_index) +
                              ": image too small for shape radius " + std::to_string(radius));
        }
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const int cx = geom.uniform_int(radius, max_x);
            const int cy = geom.uniform_int(radius, max_y);
            if (fits(kind, cx, cy, radius)) return {cx, cy, radius};
        }
        throw ConfigError("sample " + std::to_string(sample_index) + ": could not place shape after " +
                          std::to_string(kPlacementAttempts) +
                          " attempts; image too small for requested shapes");
    };

    struct ShapeDraw {
        std::size_t kind_idx;
        int radius;
        double jitter;
    };
    const int count = geom.uniform_int(cfg.shapes_min, cfg.shapes_max);
    std::vector<ShapeDraw> draws(static_cast<std::size_t>(count));
    for (ShapeDraw& d : draws) {
        d.kind_idx = geom.below(cfg.shape_classes.size());
        d.radius = geom.uniform_int(cfg.min_radius, cfg.max_radius);
        d.jitter = 0.9 + 0.2 * geom.uniform();
    }

    // the OOD shape is mandatory in eval images, so it gets first pick
    if (with_ood) {
        const int radius = geom.uniform_int(cfg.min_radius, cfg.max_radius);
        const double jitter = 0.9 + 0.2 * geom.uniform();
        const bool reuse_color = geom.uniform() < 0.5;
        const double* base =
            reuse_color ? kClassPalette[geom.below(cfg.shape_classes.size()) % 3] : kOodColor;
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = std::clamp(base[c] * jitter, 0.0, 1.0);
        const Placed at = place(cfg.ood_shape, radius);
        paint(canvas, sample, cfg.ood_shape, at.cx, at.cy, radius, color, kOodLabelSentinel);
    }

    // large shapes first: packs the canvas far more reliably
    std::stable_sort(draws.begin(), draws.end(),
                     [](const ShapeDraw& a, const ShapeDraw& b) { return a.radius > b.radius; });
    for (const ShapeDraw& d : draws) {
        const Placed at = place(cfg.shape_classes[d.kind_idx], d.radius);
        double color[3];
        for (int c = 0; c < 3; ++c) {
            color[c] = std::clamp(kClassPalette[d.kind_idx % 3][c] * d.jitter, 0.0, 1.0);
        }
        paint(canvas, sample, cfg.shape_classes[d.kind_idx], at.cx, at.cy, d.radius, color,
              static_cast<std::uint8_t>(d.kind_idx + 1));
    }

    if (cfg.noise_std > 0.0) {
        for (double& v : canvas.rgb) v = std::clamp(v + cfg.noise_std * noise.normal(), 0.0, 1.0);
    }

    sample.image.resize(3 * plane);
    for (std::size_t i = 0; i < canvas.rgb.size(); ++i) {
        sample.image[i] = static_cast<std::uint8_t>(std::lround(canvas.rgb[i] * 255.0));
    }
    return sample;
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

} // namespace

const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::square: return "square";
        case ShapeKind::circle: return "circle";
        case ShapeKind::triangle: return "triangle";
        case ShapeKind::cross: return "cross";
    }
    return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
    if (name == "square") return ShapeKind::square;
    if (name == "circle") return ShapeKind::circle;
    if (name == "triangle") return ShapeKind::triangle;
    if (name == "cross") return ShapeKind::cross;
    throw ConfigError("unknown shape kind '" + name + "'");
}

void DatasetConfig::validate() const {
    if (height < 8 || width < 8) throw ConfigError("DatasetConfig: image size too small");
    if (shape_classes.empty()) throw ConfigError("DatasetConfig: need at least one shape class");
    for (std::size_t i = 0; i < shape_classes.size(); ++i) {
        if (shape_classes[i] == ood_shape) {
            throw ConfigError("DatasetConfig: ood_shape must not be an in-distribution class");
        }
        for (std::size_t j = i + 1; j < shape_classes.size(); ++j) {
            if (shape_classes[i] == shape_classes[j]) {
                throw ConfigError("DatasetConfig: duplicate shape class");
            }
        }
    }
    if (min_radius < 2 || max_radius < min_radius) {
        throw ConfigError("DatasetConfig: need 2 <= min_radius <= max_radius");
    }
    if (shapes_min < 1 || shapes_max < shapes_min) {
        throw ConfigError("DatasetConfig: need 1 <= shapes_min <= shapes_max");
    }
    if (!(noise_std >= 0.0) || noise_std > 1.0) {
        throw ConfigError("DatasetConfig: noise_std must lie in [0,1]");
    }
    if (class_count() > 250) throw ConfigError("DatasetConfig: too many classes");
}

void draw_shape(Sample& sample, ShapeKind kind, int cx, int cy, int radius, const double rgb[3],
                std::uint8_t label) {
    const std::size_t plane = sample.height * sample.width;
    if (sample.image.size() != 3 * plane) sample.image.assign(3 * plane, 0);
    if (sample.labels.size() != plane) sample.labels.assign(plane, 0);
    if (sample.ood_mask.size() != plane) sample.ood_mask.assign(plane, 0);
    Canvas canvas{sample.height, sample.width, {}};
    canvas.rgb.resize(3 * plane);
    for (std::size_t i = 0; i < canvas.rgb.size(); ++i) canvas.rgb[i] = sample.image[i] / 255.0;
    paint(canvas, sample, kind, cx, cy, radius, rgb, label);
    for (std::size_t i = 0; i < canvas.rgb.size(); ++i) {
        sample.image[i] = static_cast<std::uint8_t>(std::lround(canvas.rgb[i] * 255.0));
    }
}

GeneratedDataset generate_dataset(const DatasetConfig& config) {
    config.validate();
    GeneratedDataset out;
    for (Dataset* split : {&out.train, &out.eval}) {
        split->height = config.height;
        split->width = config.width;
        split->class_count = config.class_count();
    }
    out.train.samples.reserve(config.num_train);
    out.eval.samples.reserve(config.num_eval);
    for (std::size_t i = 0; i < config.num_train; ++i) {
        const std::uint64_t s = mix64(config.seed ^ mix64((0ULL << 48) | i));
        out.train.samples.push_back(generate_sample(config, s, false, i));
    }
    for (std::size_t i = 0; i < config.num_eval; ++i) {
        const std::uint64_t s = mix64(config.seed ^ mix64((1ULL << 48) | i));
        out.eval.samples.push_back(generate_sample(config, s, true, i));
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kDatasetVersion);
    put_u32(buf, static_cast<std::uint32_t>(dataset.height));
    put_u32(buf, static_cast<std::uint32_t>(dataset.width));
    put_u32(buf, static_cast<std::uint32_t>(dataset.class_count));
    put_u32(buf, static_cast<std::uint32_t>(dataset.samples.size()));
    const std::size_t plane = dataset.height * dataset.width;
    const std::size_t mask_bytes = (plane + 7) / 8;
    for (const Sample& s : dataset.samples) {
        buf.append(reinterpret_cast<const char*>(s.image.data()), s.image.size());
        buf.append(reinterpret_cast<const char*>(s.labels.data()), s.labels.size());
        std::string packed(mask_bytes, '\0');
        for (std::size_t i = 0; i < plane; ++i) {
            if (s.ood_mask[i]) packed[i / 8] |= static_cast<char>(1u << (i % 8));
        }
        buf.append(packed);
    }
    std::ofstream fout(path, std::ios::binary | std::ios::trunc);
    if (!fout) throw IoError("cannot open " + path.string() + " for writing");
    fout.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!fout) throw IoError("short write to " + path.string());
}

Dataset load_dataset_file(const std::filesystem::path& path) {
    std::ifstream fin(path, std::ios::binary);
    if (!fin) throw IoError("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(fin)), std::istreambuf_iterator<char>());

    auto truncated = [&](std::size_t needed) {
        return IoError(path.string() + ": truncated at byte offset " + std::to_string(buf.size()) +
                       " (needed " + std::to_string(needed) + ")");
    };
    if (buf.size() < 22) throw truncated(22);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw IoError(path.string() + ": not a dataset file (bad magic)");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint16_t version = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
    if (version != kDatasetVersion) {
        throw IoError(path.string() + ": dataset version " + std::to_string(version) +
                      " unsupported (this build reads version " + std::to_string(kDatasetVersion) +
                      ")");
    }
    auto u32_at = [&](std::size_t off) {
        return static_cast<std::uint32_t>(p[off]) | (static_cast<std::uint32_t>(p[off + 1]) << 8) |
               (static_cast<std::uint32_t>(p[off + 2]) << 16) |
               (static_cast<std::uint32_t>(p[off + 3]) << 24);
    };
    Dataset ds;
    ds.height = u32_at(6);
    ds.width = u32_at(10);
    ds.class_count = u32_at(14);
    const std::uint32_t count = u32_at(18);
    if (ds.height == 0 || ds.width == 0 || ds.class_count < 2) {
        throw IoError(path.string() + ": corrupt header");
    }

    const std::size_t plane = ds.height * ds.width;
    const std::size_t mask_bytes = (plane + 7) / 8;
    const std::size_t per_sample = 3 * plane + plane + mask_bytes;
    const std::size_t expected = 22 + static_cast<std::size_t>(count) * per_sample;
    if (buf.size() != expected) throw truncated(expected);

    std::size_t pos = 22;
    ds.samples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Sample& s = ds.samples[i];
        s.height = ds.height;
        s.width = ds.width;
        s.image.assign(p + pos, p + pos + 3 * plane);
        pos += 3 * plane;
        s.labels.assign(p + pos, p + pos + plane);
        pos += plane;
        s.ood_mask.assign(plane, 0);
        for (std::size_t j = 0; j < plane; ++j) {
            s.ood_mask[j] = (p[pos + j / 8] >> (j % 8)) & 1u;
        }
        pos += mask_bytes;
    }
    return ds;
}

Tensor image_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    Tensor out = Tensor::zeros({indices.size(), 3, dataset.height, dataset.width});
    const std::size_t img = 3 * dataset.height * dataset.width;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Sample& s = dataset.samples.at(indices[b]);
        for (std::size_t i = 0; i < img; ++i) out.data[b * img + i] = s.image[i] / 255.0;
    }
    return out;
}

LabelBatch label_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    LabelBatch out;
    out.count = indices.size();
    out.height = dataset.height;
    out.width = dataset.width;
    out.labels.reserve(out.pixels());
    for (std::size_t idx : indices) {
        const Sample& s = dataset.samples.at(idx);
        out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    }
    return out;
}

Tensor single_image_tensor(const Sample& sample) {
    Tensor out = Tensor::zeros({1, 3, sample.height, sample.width});
    for (std::size_t i = 0; i < sample.image.size(); ++i) out.data[i] = sample.image[i] / 255.0;
    return out;
}

} // namespace edl
