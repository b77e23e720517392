#pragma once

// JSON run configuration. Every field has a default; the fully resolved
// configuration is echoed into each run manifest so that feeding the manifest
// back in reproduces the run.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "redsc/baselines.hpp"
#include "redsc/data/idx.hpp"
#include "redsc/data/image_dir.hpp"
#include "redsc/data/synth.hpp"
#include "redsc/model.hpp"
#include "redsc/trainer.hpp"

namespace redsc::cli {

using nlohmann::json;

struct DatasetConfig {
    std::string type = "synth";  // synth | idx | image_dir
    data::SynthSpec synth;
    std::string images;
    std::string labels;
    std::string path;
    std::size_t height = 48;
    std::size_t width = 42;
    std::size_t per_class = 0;  // 0 keeps every sample
    std::size_t n_classes = 0;  // 0 keeps every class
    std::vector<int> classes;
    std::uint64_t seed = 7;
};

struct ClusteringConfig {
    std::size_t n_clusters = 0;  // 0: number of ground-truth classes
    std::uint64_t seed = 7;
    std::size_t restarts = 20;
    std::size_t max_iterations = 300;

    SpectralOptions spectral() const { return {{restarts, max_iterations}, 1e-12}; }
};

struct RunConfig {
    DatasetConfig dataset;
    Architecture architecture;
    TrainConfig train;
    std::size_t err_interval = 1;  // per-epoch ERR every k epochs during fine-tuning; 0 disables
    ClusteringConfig clustering;
    double baseline_lambda = 1.0;
    std::string output_dir = "redsc_out";
};

namespace detail {

class FieldReader {
public:
    FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    void reject_unknown() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where_ + "." + k + ": unknown field");
    }

    const std::string& where() const { return where_; }
    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) const { return j_.at(key); }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline std::string resolve(const std::string& p, const std::filesystem::path& base) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    if (path.is_relative()) path = base / path;
    return std::filesystem::absolute(path).lexically_normal().string();
}

inline std::pair<std::size_t, std::size_t> read_hw(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [height, width]");
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

}  // namespace detail

inline json to_json(const DatasetConfig& d) {
    if (d.type == "synth")
        return {{"type", "synth"},
                {"n", d.synth.subspaces},
                {"d", d.synth.dim},
                {"hw", {d.synth.height, d.synth.width}},
                {"per_class", d.synth.per_class},
                {"sigma", d.synth.noise_sigma},
                {"seed", d.synth.seed}};
    json j{{"type", d.type}, {"per_class", d.per_class}, {"n_classes", d.n_classes}, {"classes", d.classes},
           {"seed", d.seed}};
    if (d.type == "idx") {
        j["images"] = d.images;
        j["labels"] = d.labels;
    } else {
        j["path"] = d.path;
        j["hw"] = {d.height, d.width};
    }
    return j;
}

inline json to_json(const RunConfig& c) {
    const TrainConfig& t = c.train;
    return {{"dataset", to_json(c.dataset)},
            {"architecture",
             {{"input_channels", c.architecture.input_channels},
              {"kernel_sizes", c.architecture.kernel_sizes},
              {"channels", c.architecture.channels},
              {"stride", c.architecture.stride}}},
            {"train",
             {{"learning_rate", t.learning_rate},
              {"adam_beta1", t.adam_beta1},
              {"adam_beta2", t.adam_beta2},
              {"adam_eps", t.adam_eps},
              {"epochs_pretrain", t.epochs_pretrain},
              {"epochs_finetune", t.epochs_finetune},
              {"lambda", t.lambda},
              {"seed", t.seed},
              {"zero_diag", t.zero_diag},
              {"skip_mode", to_string(t.skip_mode)},
              {"err_interval", c.err_interval}}},
            {"clustering",
             {{"n_clusters", c.clustering.n_clusters},
              {"seed", c.clustering.seed},
              {"restarts", c.clustering.restarts},
              {"max_iterations", c.clustering.max_iterations}}},
            {"baseline", {{"lambda", c.baseline_lambda}}},
            {"output_dir", c.output_dir}};
}

/// Parses a run configuration. Relative paths resolve against `base_dir`.
/// A dataset of type "manifest" is replaced by the dataset recorded in that manifest.
inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    detail::FieldReader top(j, "config");
    top.read("output_dir", c.output_dir);
    c.output_dir = detail::resolve(c.output_dir, base_dir);

    json dataset_json = j.value("dataset", json::object());
    top.read("dataset", dataset_json);
    std::filesystem::path dataset_base = base_dir;
    for (int depth = 0; dataset_json.is_object() && dataset_json.value("type", "") == "manifest"; ++depth) {
        if (depth > 8) throw ConfigError("config.dataset: manifest chain too deep");
        const std::string p = detail::resolve(dataset_json.value("path", ""), dataset_base);
        std::ifstream in(p);
        if (!in) throw ConfigError("config.dataset.path: cannot open manifest " + p);
        json m = json::parse(in, nullptr, false);
        if (m.is_discarded() || !m.contains("config") || !m["config"].contains("dataset"))
            throw ConfigError("config.dataset.path: " + p + " is not a run manifest");
        dataset_json = m["config"]["dataset"];
        dataset_base = std::filesystem::path(p).parent_path();
    }
    {
        detail::FieldReader r(dataset_json, "config.dataset");
        DatasetConfig& d = c.dataset;
        r.read("type", d.type);
        if (d.type == "synth") {
            r.read("n", d.synth.subspaces);
            r.read("d", d.synth.dim);
            r.read("per_class", d.synth.per_class);
            r.read("sigma", d.synth.noise_sigma);
            r.read("seed", d.synth.seed);
            json hw;
            r.read("hw", hw);
            if (!hw.is_null()) std::tie(d.synth.height, d.synth.width) = detail::read_hw(hw, "config.dataset.hw");
        } else if (d.type == "idx" || d.type == "image_dir") {
            r.read("images", d.images);
            r.read("labels", d.labels);
            r.read("path", d.path);
            r.read("per_class", d.per_class);
            r.read("n_classes", d.n_classes);
            r.read("classes", d.classes);
            r.read("seed", d.seed);
            json hw;
            r.read("hw", hw);
            if (!hw.is_null()) std::tie(d.height, d.width) = detail::read_hw(hw, "config.dataset.hw");
            d.images = detail::resolve(d.images, dataset_base);
            d.labels = detail::resolve(d.labels, dataset_base);
            d.path = detail::resolve(d.path, dataset_base);
            if (d.type == "idx" && (d.images.empty() || d.labels.empty()))
                throw ConfigError("config.dataset: idx datasets need 'images' and 'labels'");
            if (d.type == "image_dir" && d.path.empty())
                throw ConfigError("config.dataset.path: image_dir datasets need a directory");
        } else {
            throw ConfigError("config.dataset.type: unknown dataset type '" + d.type + "'");
        }
        r.reject_unknown();
    }

    json arch = json::object();
    top.read("architecture", arch);
    {
        detail::FieldReader r(arch, "config.architecture");
        r.read("input_channels", c.architecture.input_channels);
        r.read("kernel_sizes", c.architecture.kernel_sizes);
        r.read("channels", c.architecture.channels);
        r.read("stride", c.architecture.stride);
        r.reject_unknown();
        try {
            c.architecture.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config.architecture: ") + e.what());
        }
    }

    json train = json::object();
    top.read("train", train);
    {
        detail::FieldReader r(train, "config.train");
        TrainConfig& t = c.train;
        r.read("learning_rate", t.learning_rate);
        r.read("adam_beta1", t.adam_beta1);
        r.read("adam_beta2", t.adam_beta2);
        r.read("adam_eps", t.adam_eps);
        r.read("epochs_pretrain", t.epochs_pretrain);
        r.read("epochs_finetune", t.epochs_finetune);
        r.read("lambda", t.lambda);
        r.read("seed", t.seed);
        r.read("zero_diag", t.zero_diag);
        r.read("err_interval", c.err_interval);
        std::string mode = to_string(t.skip_mode);
        r.read("skip_mode", mode);
        try {
            t.skip_mode = skip_mode_from_string(mode);
            t.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config.train: ") + e.what());
        }
        r.reject_unknown();
    }

    json clustering = json::object();
    top.read("clustering", clustering);
    {
        detail::FieldReader r(clustering, "config.clustering");
        r.read("n_clusters", c.clustering.n_clusters);
        r.read("seed", c.clustering.seed);
        r.read("restarts", c.clustering.restarts);
        r.read("max_iterations", c.clustering.max_iterations);
        r.reject_unknown();
    }

    json baseline = json::object();
    top.read("baseline", baseline);
    {
        detail::FieldReader r(baseline, "config.baseline");
        r.read("lambda", c.baseline_lambda);
        r.reject_unknown();
        if (!(c.baseline_lambda >= 0.0)) throw ConfigError("config.baseline.lambda: must be >= 0");
    }
    top.reject_unknown();
    return c;
}

/// Reads a config file, or the "config" member of a run manifest.
inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
    if (j.contains("tool") && j.contains("config")) j = j["config"];
    return parse_config(j, std::filesystem::absolute(path).parent_path());
}

struct LoadedData {
    data::Dataset dataset;
    // Pre-rescale data matrix (D x N) for synthetic data, used by the LSR baseline.
    std::optional<Eigen::MatrixXd> raw;
};

inline LoadedData load_dataset(const DatasetConfig& d) {
    LoadedData out;
    if (d.type == "synth") {
        data::SynthDataset s = data::synth_subspaces(d.synth);
        out.dataset = std::move(s.dataset);
        out.raw = std::move(s.raw);
        return out;
    }
    for (const std::string* p : {&d.images, &d.labels, &d.path}) {
        if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("config.dataset: path " + *p + " does not exist");
    }
    data::Dataset ds = d.type == "idx" ? data::load_idx(d.images, d.labels)
                                       : data::load_image_dir(d.path, {d.height, d.width});
    std::vector<int> classes = d.classes;
    if (classes.empty() && d.n_classes > 0) classes = data::random_classes(ds, d.n_classes, d.seed);
    if (d.per_class > 0) {
        ds = data::subset_select(ds, d.per_class, classes, d.seed);
    } else if (!classes.empty()) {
        ds = data::select_classes(ds, classes);
    }
    ds.validate();
    out.dataset = std::move(ds);
    return out;
}

}  // namespace redsc::cli
