#include "edl/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "edl/errors.hpp"

namespace edl {

namespace {

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

SectionMap parse_ini(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    SectionMap sections;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": malformed section header '" + t + "'");
            }
            section = trim(t.substr(1, t.size() - 2));
            sections[section]; // block may stay empty
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + t + "'");
        }
        if (section.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": key outside of any section");
        }
        const std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        const std::size_t comment = value.find('#');
        if (comment != std::string::npos) value = trim(value.substr(0, comment));
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        auto [it, inserted] = sections[section].emplace(key, Entry{value, lineno, false});
        if (!inserted) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "' (first defined at line " + std::to_string(it->second.line) +
                              ")");
        }
    }
    return sections;
}

class SectionReader {
public:
    SectionReader(SectionMap& sections, std::string section, std::string path)
        : sections_(sections), section_(std::move(section)), path_(std::move(path)) {}

    bool has(const std::string& key) {
        auto sec = sections_.find(section_);
        if (sec == sections_.end()) return false;
        return sec->second.count(key) > 0;
    }

    std::string raw(const std::string& key) {
        auto& entry = sections_[section_][key];
        entry.used = true;
        return entry.value;
    }

    template <typename T, typename Parse>
    void get(const std::string& key, T& out, Parse parse) {
        if (!has(key)) return;
        auto& entry = sections_[section_][key];
        entry.used = true;
        try {
            out = parse(entry.value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ConfigError(path_ + ":" + std::to_string(entry.line) + ": bad value for '" +
                              key + "': " + ex.what());
        }
    }

    void get_double(const std::string& key, double& out) {
        get(key, out, [](const std::string& v) {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing characters in '" + v + "'");
            return d;
        });
    }

    void get_size(const std::string& key, std::size_t& out) {
        get(key, out, [](const std::string& v) {
            const long long d = std::stoll(v);
            if (d < 0) throw std::invalid_argument("must be non-negative");
            return static_cast<std::size_t>(d);
        });
    }

    void get_long(const std::string& key, long& out) {
        get(key, out, [](const std::string& v) { return std::stol(v); });
    }

    void get_int(const std::string& key, int& out) {
        get(key, out, [](const std::string& v) { return std::stoi(v); });
    }

    void get_u64(const std::string& key, std::uint64_t& out) {
        get(key, out, [](const std::string& v) { return std::stoull(v); });
    }

    std::vector<std::string> get_words(const std::string& key) {
        std::vector<std::string> out;
        std::istringstream stream(raw(key));
        std::string word;
        while (stream >> word) out.push_back(word);
        return out;
    }

private:
    SectionMap& sections_;
    std::string section_;
    std::string path_;
};

void reject_leftovers(const SectionMap& sections, const std::filesystem::path& path) {
    static const std::map<std::string, int> known_sections = {
        {"data", 0}, {"model", 0}, {"train", 0}, {"loss", 0}, {"eval", 0}};
    for (const auto& [section, entries] : sections) {
        if (!known_sections.count(section)) {
            throw ConfigError(path.string() + ": unknown section [" + section + "]");
        }
        for (const auto& [key, entry] : entries) {
            if (!entry.used) {
                throw ConfigError(path.string() + ":" + std::to_string(entry.line) +
                                  ": unknown key '" + key + "' in section [" + section + "]");
            }
        }
    }
}

} // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    SectionMap sections = parse_ini(path);
    RunConfig cfg;
    cfg.train = desk_scale_defaults();
    const std::string p = path.string();

    {
        SectionReader data(sections, "data", p);
        data.get_size("height", cfg.data.height);
        data.get_size("width", cfg.data.width);
        data.get_size("num_train", cfg.data.num_train);
        data.get_size("num_eval", cfg.data.num_eval);
        if (data.has("shape_classes")) {
            cfg.data.shape_classes.clear();
            for (const std::string& w : data.get_words("shape_classes")) {
                cfg.data.shape_classes.push_back(shape_kind_from_string(w));
            }
        }
        if (data.has("ood_shape")) {
            cfg.data.ood_shape = shape_kind_from_string(data.raw("ood_shape"));
        }
        data.get_double("noise_std", cfg.data.noise_std);
        data.get_int("min_radius", cfg.data.min_radius);
        data.get_int("max_radius", cfg.data.max_radius);
        data.get_int("shapes_min", cfg.data.shapes_min);
        data.get_int("shapes_max", cfg.data.shapes_max);
        data.get_u64("seed", cfg.data.seed);
    }
    {
        SectionReader model(sections, "model", p);
        model.get_size("in_channels", cfg.model.in_channels);
        model.get_size("hidden_channels", cfg.model.hidden_channels);
        model.get_size("depth", cfg.model.depth);
        if (model.has("num_classes")) {
            cfg.model_classes_explicit = true;
            model.get_size("num_classes", cfg.model.num_classes);
        }
        model.get_size("kernel_size", cfg.model.kernel_size);
    }
    {
        SectionReader train(sections, "train", p);
        train.get_size("batch_size", cfg.train.batch_size);
        train.get_long("total_iterations", cfg.train.total_iterations);
        train.get_double("learning_rate", cfg.train.learning_rate);
        train.get_double("weight_decay", cfg.train.weight_decay);
        train.get_u64("seed", cfg.train.seed);
        train.get_long("checkpoint_every", cfg.train.checkpoint_every);
        if (train.has("lr_schedule")) {
            const std::string s = train.raw("lr_schedule");
            if (s == "constant") {
                cfg.train.lr_schedule = LrSchedule::constant;
            } else if (s == "poly") {
                cfg.train.lr_schedule = LrSchedule::poly;
            } else {
                throw ConfigError(p + ": lr_schedule must be 'constant' or 'poly', got '" + s +
                                  "'");
            }
        }
        train.get_double("lr_poly_power", cfg.train.lr_poly_power);
    }
    {
        SectionReader loss(sections, "loss", p);
        loss.get_double("w_wasserstein", cfg.train.loss_weights.w_wasserstein);
        loss.get_double("w_dice", cfg.train.loss_weights.w_dice);
        loss.get_double("w_kl", cfg.train.loss_weights.w_kl);
        loss.get_double("w_mse", cfg.train.loss_weights.w_mse);
        loss.get_long("kl_ramp_start", cfg.train.anneal.ramp_start);
        loss.get_long("kl_ramp_end", cfg.train.anneal.ramp_end);
        loss.get_double("prior_concentration", cfg.train.prior_concentration);
    }
    {
        SectionReader eval(sections, "eval", p);
        if (eval.has("thresholds")) {
            cfg.eval.thresholds.clear();
            for (const std::string& w : eval.get_words("thresholds")) {
                try {
                    cfg.eval.thresholds.push_back(std::stod(w));
                } catch (const std::exception&) {
                    throw ConfigError(p + ": bad threshold '" + w + "'");
                }
            }
        }
        eval.get_int("ece_bins", cfg.eval.ece_bins);
        if (eval.has("methods")) cfg.eval.methods = eval.get_words("methods");
    }
    reject_leftovers(sections, path);

    // the KL plateau is the configured w_kl
    cfg.train.anneal.plateau = cfg.train.loss_weights.w_kl;
    if (!cfg.model_classes_explicit) cfg.model.num_classes = cfg.data.class_count();

    cfg.data.validate();
    cfg.model.validate();
    cfg.train.validate();
    if (cfg.model.num_classes != cfg.data.class_count()) {
        throw ConfigError(p + ": [model] num_classes = " + std::to_string(cfg.model.num_classes) +
                          " does not match [data] class count " +
                          std::to_string(cfg.data.class_count()));
    }
    if (cfg.eval.ece_bins < 1) throw ConfigError(p + ": ece_bins must be >= 1");
    for (double t : cfg.eval.thresholds) {
        if (!std::isfinite(t)) throw ConfigError(p + ": non-finite threshold");
    }
    return cfg;
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "[data]\n";
    out << "height = " << data.height << "\n";
    out << "width = " << data.width << "\n";
    out << "num_train = " << data.num_train << "\n";
    out << "num_eval = " << data.num_eval << "\n";
    out << "shape_classes =";
    for (ShapeKind k : data.shape_classes) out << " " << to_string(k);
    out << "\n";
    out << "ood_shape = " << to_string(data.ood_shape) << "\n";
    out << "noise_std = " << data.noise_std << "\n";
    out << "min_radius = " << data.min_radius << "\n";
    out << "max_radius = " << data.max_radius << "\n";
    out << "shapes_min = " << data.shapes_min << "\n";
    out << "shapes_max = " << data.shapes_max << "\n";
    out << "seed = " << data.seed << "\n";
    out << "[model]\n";
    out << "in_channels = " << model.in_channels << "\n";
    out << "hidden_channels = " << model.hidden_channels << "\n";
    out << "depth = " << model.depth << "\n";
    out << "num_classes = " << model.num_classes << "\n";
    out << "kernel_size = " << model.kernel_size << "\n";
    out << "[train]\n";
    out << "batch_size = " << train.batch_size << "\n";
    out << "total_iterations = " << train.total_iterations << "\n";
    out << "learning_rate = " << train.learning_rate << "\n";
    out << "weight_decay = " << train.weight_decay << "\n";
    out << "seed = " << train.seed << "\n";
    out << "checkpoint_every = " << train.checkpoint_every << "\n";
    out << "lr_schedule = " << (train.lr_schedule == LrSchedule::poly ? "poly" : "constant")
        << "\n";
    out << "lr_poly_power = " << train.lr_poly_power << "\n";
    out << "[loss]\n";
    out << "w_wasserstein = " << train.loss_weights.w_wasserstein << "\n";
    out << "w_dice = " << train.loss_weights.w_dice << "\n";
    out << "w_kl = " << train.loss_weights.w_kl << "\n";
    out << "w_mse = " << train.loss_weights.w_mse << "\n";
    out << "kl_ramp_start = " << train.anneal.ramp_start << "\n";
    out << "kl_ramp_end = " << train.anneal.ramp_end << "\n";
    out << "prior_concentration = " << train.prior_concentration << "\n";
    out << "[eval]\n";
    out << "thresholds =";
    if (eval.thresholds.empty()) {
        out << " (default 0.25..0.75 step 0.05)";
    } else {
        for (double t : eval.thresholds) out << " " << t;
    }
    out << "\n";
    out << "ece_bins = " << eval.ece_bins << "\n";
    out << "methods =";
    for (const std::string& m : eval.methods) out << " " << m;
    out << "\n";
    return out.str();
}

std::string config_hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace edl
