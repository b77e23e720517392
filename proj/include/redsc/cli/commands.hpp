#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "redsc/checkpoint.hpp"
#include "redsc/cli/config.hpp"
#include "redsc/gradcheck_suite.hpp"
#include "redsc/metrics.hpp"
#include "redsc/spectral.hpp"

namespace redsc::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDivergence = 3 };

/// Maps library exceptions onto the documented exit codes.
template <typename F>
int run_guarded(F&& body, std::ostream& err = std::cerr) {
    try {
        return body();
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kConfigError;
    } catch (const json::exception& e) {
        err << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Run manifest: resolved config, inputs, timestamps and the output inventory.
class Manifest {
public:
    Manifest(std::string command, const RunConfig& config)
        : doc_{{"tool", "redsc"},
               {"version", kToolVersion},
               {"command", std::move(command)},
               {"config", to_json(config)},
               {"inputs", json::object()},
               {"started_at", utc_timestamp()}} {}

    void input(const std::string& key, json value) { doc_["inputs"][key] = std::move(value); }
    void output(const std::string& name) { outputs_.push_back(name); }

    void write(const std::filesystem::path& dir) {
        doc_["finished_at"] = utc_timestamp();
        outputs_.push_back("manifest.json");
        doc_["outputs"] = outputs_;
        std::ofstream os(dir / "manifest.json");
        os << doc_.dump(2) << '\n';
    }

private:
    json doc_;
    std::vector<std::string> outputs_;
};

/// Creates the run directory. A directory already holding another command's
/// manifest is rejected so that each run directory keeps exactly one manifest.
inline std::filesystem::path prepare_output(const std::string& dir, const std::string& command) {
    std::filesystem::path p(dir);
    const auto existing = p / "manifest.json";
    if (std::filesystem::exists(existing)) {
        std::ifstream in(existing);
        const json j = json::parse(in, nullptr, false);
        const std::string owner = !j.is_discarded() && j.contains("command") ? j["command"].get<std::string>() : "";
        if (owner != command)
            throw ConfigError("output directory " + p.string() + " already holds a " +
                              (owner.empty() ? std::string("foreign") : owner) + " run; choose another with --out");
    }
    std::filesystem::create_directories(p);
    return p;
}

inline void write_history(const std::filesystem::path& path, const LossHistory& h) {
    std::ofstream os(path);
    h.write_csv(os);
}

inline void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& predicted,
                             const std::vector<int>& truth) {
    std::ofstream os(path);
    os << "index,predicted,truth\n";
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        os << i << ',' << predicted[i] << ',';
        if (i < truth.size()) os << truth[i];
        os << '\n';
    }
}

inline json metrics_json(const ClusterResult& r, bool labelled, std::size_t n, std::uint64_t seed) {
    json j{{"n", n}, {"seed", seed}, {"n_clusters", r.n_clusters}};
    if (labelled) {
        j["err"] = r.err;
        j["nmi"] = r.nmi;
        j["pur"] = r.pur;
    } else {
        j["err"] = nullptr;
        j["nmi"] = nullptr;
        j["pur"] = nullptr;
    }
    return j;
}

inline std::size_t resolve_cluster_count(const RunConfig& cfg, const data::Dataset& ds) {
    std::size_t k = cfg.clustering.n_clusters;
    if (k == 0) {
        if (!ds.labelled()) throw ConfigError("config.clustering.n_clusters: required for unlabelled data");
        k = ds.class_count();
    }
    if (k < 2) throw ConfigError("config.clustering.n_clusters: need at least 2 clusters");
    return k;
}

inline ClusterResult cluster_coefficients(const Array& theta, const RunConfig& cfg, const data::Dataset& ds,
                                          std::size_t k) {
    std::vector<int> labels = spectral_cluster(build_affinity(theta), k, cfg.clustering.seed, cfg.clustering.spectral());
    if (ds.labelled()) return evaluate_clustering(std::move(labels), ds.labels, k);
    ClusterResult r;
    r.labels = std::move(labels);
    r.n_clusters = k;
    return r;
}

struct CommonArgs {
    std::string config_path;
    std::string output_dir;  // overrides config.output_dir when set
};

inline RunConfig load_with_overrides(const CommonArgs& a) {
    RunConfig cfg = load_config(a.config_path);
    if (!a.output_dir.empty()) cfg.output_dir = std::filesystem::absolute(a.output_dir).lexically_normal().string();
    return cfg;
}

/// Pre-trains the encoder-decoder: checkpoint.bin, pretrain_loss.csv, manifest.json.
inline int cmd_pretrain(const CommonArgs& args, std::ostream& log = std::cout) {
    const RunConfig cfg = load_with_overrides(args);
    const LoadedData data = load_dataset(cfg.dataset);
    Manifest manifest("pretrain", cfg);
    const auto out = prepare_output(cfg.output_dir, "pretrain");

    log << "pretraining on " << data.dataset.size() << " images for " << cfg.train.epochs_pretrain << " epochs\n";
    const PretrainResult r = pretrain(data.dataset.images, cfg.architecture, cfg.train);
    save_checkpoint(out / "checkpoint.bin", {cfg.architecture, cfg.train.seed, r.params, std::nullopt});
    manifest.output("checkpoint.bin");
    write_history(out / "pretrain_loss.csv", r.history);
    manifest.output("pretrain_loss.csv");
    manifest.write(out);
    if (!r.history.empty())
        log << "reconstruction loss " << r.history.records.front().loss.total << " -> "
            << r.history.records.back().loss.total << '\n';
    return kOk;
}

struct FinetuneArgs {
    CommonArgs common;
    std::string checkpoint_path;
    std::optional<std::string> skip_mode;
};

inline void check_checkpoint_matches(const Checkpoint& ck, const Architecture& arch) {
    auto str = [](const std::vector<std::size_t>& v) {
        std::ostringstream os;
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "-" : "") << v[i];
        return os.str();
    };
    if (ck.arch.kernel_sizes != arch.kernel_sizes || ck.arch.channels != arch.channels ||
        ck.arch.input_channels != arch.input_channels || ck.arch.stride != arch.stride)
        throw ConfigError("checkpoint shape mismatch: checkpoint has kernels " + str(ck.arch.kernel_sizes) +
                          ", channels " + str(ck.arch.channels) + ", input channels " +
                          std::to_string(ck.arch.input_channels) + ", stride " + std::to_string(ck.arch.stride) +
                          "; config has kernels " + str(arch.kernel_sizes) + ", channels " + str(arch.channels) +
                          ", input channels " + std::to_string(arch.input_channels) + ", stride " +
                          std::to_string(arch.stride));
}

/// Fine-tunes from a checkpoint, then clusters the learned coefficients:
/// finetune_loss.csv, params.bin, labels.csv, metrics.json, manifest.json.
inline int cmd_finetune(const FinetuneArgs& args, std::ostream& log = std::cout) {
    RunConfig cfg = load_with_overrides(args.common);
    std::string checkpoint_path = args.checkpoint_path;
    if (checkpoint_path.empty()) {
        // A finetune manifest records the checkpoint it started from.
        std::ifstream in(args.common.config_path);
        const json j = json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("inputs") && j["inputs"].contains("checkpoint"))
            checkpoint_path = j["inputs"]["checkpoint"].get<std::string>();
    }
    if (checkpoint_path.empty()) throw ConfigError("finetune: --checkpoint is required");
    if (!std::filesystem::exists(checkpoint_path))
        throw ConfigError("finetune: checkpoint " + checkpoint_path + " does not exist");
    if (args.skip_mode) cfg.train.skip_mode = skip_mode_from_string(*args.skip_mode);

    const LoadedData data = load_dataset(cfg.dataset);
    const data::Dataset& ds = data.dataset;
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    check_checkpoint_matches(ck, cfg.architecture);
    if (ck.self_expressive && ck.self_expressive->dim(0) != ds.size())
        throw ConfigError("checkpoint shape mismatch: Theta_c is " + shape_str(ck.self_expressive->shape()) +
                          " but the dataset has N = " + std::to_string(ds.size()));
    const std::size_t k = resolve_cluster_count(cfg, ds);

    Manifest manifest("finetune", cfg);
    manifest.input("checkpoint", std::filesystem::absolute(checkpoint_path).lexically_normal().string());
    const auto out = prepare_output(cfg.output_dir, "finetune");

    ThetaEvaluator evaluator;
    if (ds.labelled() && cfg.err_interval > 0)
        evaluator = [&](std::size_t epoch, const Array& theta) -> std::optional<double> {
            if (epoch % cfg.err_interval != 0) return std::nullopt;
            return cluster_coefficients(theta, cfg, ds, k).err;
        };

    log << "fine-tuning on " << ds.size() << " images for " << cfg.train.epochs_finetune << " epochs (skip mode "
        << to_string(cfg.train.skip_mode) << ")\n";
    const FinetuneResult r = finetune(ds.images, {ck.autoencoder, ck.self_expressive}, cfg.architecture, cfg.train, evaluator);
    write_history(out / "finetune_loss.csv", r.history);
    manifest.output("finetune_loss.csv");
    save_checkpoint(out / "params.bin",
                    {cfg.architecture, cfg.train.seed, r.params.autoencoder, r.params.self_expressive.value()});
    manifest.output("params.bin");

    const ClusterResult clusters = cluster_coefficients(r.params.self_expressive.value(), cfg, ds, k);
    write_labels_csv(out / "labels.csv", clusters.labels, ds.labels);
    manifest.output("labels.csv");
    json metrics = metrics_json(clusters, ds.labelled(), ds.size(), cfg.clustering.seed);
    metrics["skip_mode"] = to_string(cfg.train.skip_mode);
    metrics["epochs"] = r.history.size();
    metrics["epochs_to_110pct_final_loss"] = epochs_to_reach(r.history, 1.1);
    metrics["final_loss"] = r.history.empty() ? 0.0 : r.history.records.back().loss.total;
    std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';
    manifest.output("metrics.json");
    manifest.write(out);
    log << "ERR " << metrics["err"] << " NMI " << metrics["nmi"] << " PUR " << metrics["pur"] << '\n';
    return kOk;
}

/// LSR baseline: ridge closed form on the raw data, spectral clustering, metrics.
inline int cmd_baseline(const CommonArgs& args, std::ostream& log = std::cout) {
    const RunConfig cfg = load_with_overrides(args);
    const LoadedData data = load_dataset(cfg.dataset);
    const data::Dataset& ds = data.dataset;
    const std::size_t k = resolve_cluster_count(cfg, ds);
    Manifest manifest("baseline", cfg);
    const auto out = prepare_output(cfg.output_dir, "baseline");

    const Eigen::MatrixXd x = data.raw ? *data.raw : ds.as_columns();
    BaselineOptions opt{cfg.baseline_lambda, cfg.clustering.seed, cfg.clustering.spectral()};
    const BaselineResult r = lsr_baseline_cluster(x, k, opt, ds.labels);
    write_labels_csv(out / "labels.csv", r.clusters.labels, ds.labels);
    manifest.output("labels.csv");
    json metrics = metrics_json(r.clusters, ds.labelled(), ds.size(), cfg.clustering.seed);
    metrics["method"] = "lsr";
    metrics["lambda"] = cfg.baseline_lambda;
    std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';
    manifest.output("metrics.json");
    manifest.write(out);
    log << "ERR " << metrics["err"] << " NMI " << metrics["nmi"] << " PUR " << metrics["pur"] << '\n';
    return kOk;
}

struct SynthArgs {
    data::SynthSpec spec;
    std::string output_dir = "synth";
};

/// Writes a synthetic union-of-subspaces dataset as IDX files plus a manifest
/// whose dataset descriptor regenerates it exactly.
inline int cmd_synth(const SynthArgs& args, std::ostream& log = std::cout) {
    RunConfig cfg;
    cfg.dataset.type = "synth";
    cfg.dataset.synth = args.spec;
    cfg.output_dir = std::filesystem::absolute(args.output_dir).lexically_normal().string();
    const data::SynthDataset s = data::synth_subspaces(args.spec);
    Manifest manifest("synth", cfg);
    manifest.input("offset", s.offset);
    manifest.input("scale", s.scale);
    const auto out = prepare_output(cfg.output_dir, "synth");
    data::write_idx(s.dataset, out / "images.idx", out / "labels.idx");
    manifest.output("images.idx");
    manifest.output("labels.idx");
    manifest.write(out);
    log << "wrote " << s.dataset.size() << " images of " << args.spec.height << "x" << args.spec.width << " to "
        << out.string() << '\n';
    return kOk;
}

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double eps = 1e-5;
    std::string json_path;
};

/// Exit 0 when every check is below tolerance, 1 otherwise.
inline int cmd_gradcheck(const GradcheckArgs& args, std::ostream& log = std::cout) {
    const auto entries = run_gradcheck_suite(args.seed, args.eps);
    bool ok = true;
    json report = json::array();
    log << std::left << std::setw(20) << "op" << std::setw(16) << "max_rel_error" << std::setw(10) << "checked"
        << "skipped\n";
    for (const GradcheckEntry& e : entries) {
        const bool pass = e.report.max_relative_error < kGradcheckTolerance;
        ok = ok && pass;
        log << std::left << std::setw(20) << e.name << std::setw(16) << std::scientific << std::setprecision(3)
            << e.report.max_relative_error << std::defaultfloat << std::setw(10) << e.report.checked << e.report.skipped
            << (pass ? "" : "  FAIL") << '\n';
        report.push_back({{"op", e.name},
                          {"max_relative_error", e.report.max_relative_error},
                          {"checked", e.report.checked},
                          {"skipped", e.report.skipped},
                          {"pass", pass}});
    }
    if (!args.json_path.empty()) std::ofstream(args.json_path) << report.dump(2) << '\n';
    log << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << kGradcheckTolerance << ")\n";
    return ok ? kOk : kFailure;
}

}  // namespace redsc::cli
