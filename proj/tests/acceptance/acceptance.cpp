// Acceptance runner: evaluates criteria A1-A10 and prints one PASS/FAIL line each.
//
// Exit status is 0 when the set of failing criteria equals --expect-fail
// (empty by default), 1 otherwise.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "redsc/gradcheck_suite.hpp"
#include "redsc/redsc.hpp"
#include "support/oracles.hpp"

using namespace redsc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    json metrics = json::object();
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

Eigen::MatrixXd to_eigen(const Array& a) {
    Eigen::MatrixXd m(a.dim(0), a.dim(1));
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) m(i, j) = a.at(i, j);
    return m;
}

constexpr std::uint64_t kSeed = 7;

/// State shared by A4-A7: the synthetic dataset and the trained runs on it.
struct SynthRuns {
    data::SynthDataset data = data::synth_subspaces({});
    std::optional<ClusterResult> lsr;
    struct Arm {
        PretrainResult pre;
        FinetuneResult fine;
        ClusterResult clusters;
    };
    std::map<SkipMode, Arm> arms;
    fs::path csv_dir;

    TrainConfig config(SkipMode mode) const {
        TrainConfig c;
        c.seed = kSeed;
        c.skip_mode = mode;
        return c;
    }

    const ClusterResult& baseline() {
        if (!lsr) {
            BaselineOptions opt;
            opt.seed = kSeed;
            lsr = lsr_baseline_cluster(data.raw, 5, opt, data.dataset.labels).clusters;
        }
        return *lsr;
    }

    const PretrainResult& pretrained(SkipMode mode) {
        auto it = arms.find(mode);
        if (it == arms.end()) {
            it = arms.emplace(mode, Arm{pretrain(data.dataset.images, Architecture{}, config(mode)), {}, {}}).first;
            write_csv("pretrain_loss_" + to_string(mode) + ".csv", it->second.pre.history);
        }
        return it->second.pre;
    }

    const Arm& finetuned(SkipMode mode) {
        pretrained(mode);
        Arm& arm = arms.at(mode);
        if (arm.fine.history.empty()) {
            const auto& labels = data.dataset.labels;
            auto evaluator = [&](std::size_t, const Array& theta) -> std::optional<double> {
                return clustering_error(spectral_cluster(build_affinity(theta), 5, kSeed), labels);
            };
            arm.fine = finetune(data.dataset.images, {arm.pre.params, std::nullopt}, Architecture{}, config(mode), evaluator);
            arm.clusters = evaluate_clustering(
                spectral_cluster(build_affinity(arm.fine.params.self_expressive.value()), 5, kSeed), labels, 5);
            write_csv("finetune_loss_" + to_string(mode) + ".csv", arm.fine.history);
        }
        return arm;
    }

    void write_csv(const std::string& name, const LossHistory& h) const {
        if (csv_dir.empty()) return;
        fs::create_directories(csv_dir);
        std::ofstream os(csv_dir / name);
        h.write_csv(os);
    }
};

Outcome a1_gradcheck() {
    const double t0 = cpu_seconds();
    const auto entries = run_gradcheck_suite(0, 1e-5);
    const double cpu = cpu_seconds() - t0;
    Outcome o;
    double worst = 0.0;
    std::string worst_op;
    for (const GradcheckEntry& e : entries) {
        o.metrics["max_relative_error"][e.name] = e.report.max_relative_error;
        if (e.report.max_relative_error >= worst) {
            worst = e.report.max_relative_error;
            worst_op = e.name;
        }
    }
    o.metrics["cpu_seconds"] = cpu;
    o.pass = worst < 1e-4 && cpu < 60.0 && entries.size() == 6;
    o.detail = "worst " + worst_op + " " + fmt(worst) + " (< 1e-4), cpu " + fmt(cpu, 3) + " s (< 60 s)";
    return o;
}

Outcome a2_adjoint() {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> kd(0, 2), cd(1, 4), sd(1, 3), hd(1, 12);
    double worst = 0.0;
    for (int draw = 0; draw < 20; ++draw) {
        const ConvSpec spec = ConvSpec::same(2 * kd(rng) + 1, cd(rng), cd(rng), sd(rng));
        const std::size_t n = cd(rng), h = hd(rng), w = hd(rng);
        const Array x = random_array({n, spec.in_channels, h, w}, rng);
        const Array y = random_array({n, spec.out_channels, spec.output_extent(h), spec.output_extent(w)}, rng);
        const ad::Var wt = ad::constant(random_array(spec.weight_shape(), rng));
        const double lhs = dot(ad::conv2d(ad::constant(x), spec, wt, ad::constant(Array(spec.bias_shape()))).value(), y);
        const double rhs =
            dot(x, ad::deconv2d(ad::constant(y), spec, wt, ad::constant(Array({spec.in_channels})), {h, w}).value());
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return {worst < 1e-10, "max |<conv x, y> - <x, deconv y>| = " + fmt(worst) + " over 20 draws (< 1e-10)",
            {{"max_abs_difference", worst}}};
}

Outcome a3_ridge() {
    const Architecture arch;
    const std::size_t n = 60;
    std::mt19937_64 rng(3);
    const ad::Var x = ad::constant(random_array({n, 1, 8, 8}, rng, 0.0, 1.0));
    const LatentStack z = encode(x, init_autoencoder(arch, 11), arch);
    RidgeProblem problem;
    problem.lambda = 1.0;
    std::vector<Array> maps;
    for (std::size_t i = 1; i <= arch.depth(); ++i) {
        maps.push_back(z.maps[i - 1].value());
        problem.features.push_back(to_eigen(z.flat(i).value()));
    }
    const Eigen::MatrixXd c_star = ridge_closed_form(problem);
    const SelfExpressionFit fit = fit_self_expression(maps, 1.0, 20000, AdamHyper{}, false);
    const double rel = (to_eigen(fit.theta_c) - c_star).norm() / c_star.norm();
    return {rel < 1e-3, "relative Frobenius error " + fmt(rel) + " after 20000 Adam steps (< 1e-3)",
            {{"relative_error", rel}, {"steps", 20000}, {"n", n}}};
}

Outcome a4_lsr(SynthRuns& runs) {
    const double t0 = cpu_seconds();
    const ClusterResult& r = runs.baseline();
    const double cpu = cpu_seconds() - t0;
    return {r.err < 0.05 && r.nmi > 0.9 && cpu < 30.0,
            "LSR ERR " + fmt(r.err) + " (< 0.05), NMI " + fmt(r.nmi) + " (> 0.9), cpu " + fmt(cpu, 3) + " s (< 30 s)",
            {{"err", r.err}, {"nmi", r.nmi}, {"pur", r.pur}, {"cpu_seconds", cpu}}};
}

Outcome a5_pretrain(SynthRuns& runs) {
    const LossHistory& h = runs.pretrained(SkipMode::full).history;
    const std::vector<double> totals = h.totals();
    const double ratio = totals.back() / totals.front();
    const std::vector<double> ma = moving_average(totals, 10);
    std::size_t violations = 0;
    for (std::size_t i = 1; i < ma.size(); ++i) violations += ma[i] > ma[i - 1];
    return {ratio <= 0.05 && violations == 0 && totals.size() <= 500,
            "L_e " + fmt(totals.front()) + " -> " + fmt(totals.back()) + " in " + std::to_string(totals.size()) +
                " epochs, ratio " + fmt(ratio) + " (<= 0.05); moving-average increases: " + std::to_string(violations),
            {{"initial", totals.front()},
             {"final", totals.back()},
             {"ratio", ratio},
             {"epochs", totals.size()},
             {"moving_average_increases", violations}}};
}

Outcome a6_end_to_end(SynthRuns& runs, const fs::path& data_dir) {
    Outcome o;
    const ClusterResult& red = runs.finetuned(SkipMode::full).clusters;
    const double lsr = runs.baseline().err;
    const bool synth_ok = red.err <= lsr + 0.02;
    o.metrics["synthetic"] = {{"err", red.err}, {"nmi", red.nmi}, {"pur", red.pur}, {"lsr_err", lsr}};
    o.detail = "synthetic ERR " + fmt(red.err) + " vs LSR " + fmt(lsr) + " + 0.02";

    const fs::path images = data_dir / "mnist" / "mnist5k-images-idx3-ubyte";
    const fs::path labels = data_dir / "mnist" / "mnist5k-labels-idx1-ubyte";
    if (!fs::exists(images) || !fs::exists(labels)) {
        o.detail += "; MNIST subset not found under " + (data_dir / "mnist").string();
        return o;
    }
    const double t0 = cpu_seconds();
    const data::Dataset mnist = data::subset_select(data::load_idx(images, labels), 100, {}, kSeed);
    TrainConfig cfg;
    cfg.seed = kSeed;
    const Architecture arch;
    const PretrainResult pre = pretrain(mnist.images, arch, cfg);
    const FinetuneResult fine = finetune(mnist.images, {pre.params, std::nullopt}, arch, cfg);
    const ClusterResult r = evaluate_clustering(
        spectral_cluster(build_affinity(fine.params.self_expressive.value()), 10, kSeed), mnist.labels, 10);
    const double cpu_min = (cpu_seconds() - t0) / 60.0;
    runs.write_csv("mnist_pretrain_loss.csv", pre.history);
    runs.write_csv("mnist_finetune_loss.csv", fine.history);
    const bool mnist_ok = r.err < 0.60 && r.nmi > 0.30 && cpu_min < 30.0;
    o.metrics["mnist"] = {{"n", mnist.size()}, {"err", r.err}, {"nmi", r.nmi}, {"pur", r.pur}, {"cpu_minutes", cpu_min}};
    o.detail += "; MNIST-1000 ERR " + fmt(r.err) + " (< 0.60), NMI " + fmt(r.nmi) + " (> 0.30), " + fmt(cpu_min, 3) +
                " CPU-min (< 30)";
    o.pass = synth_ok && mnist_ok;
    return o;
}

Outcome a7_convergence(SynthRuns& runs) {
    const auto& full = runs.finetuned(SkipMode::full);
    const auto& none = runs.finetuned(SkipMode::none);
    const std::size_t ef = epochs_to_reach(full.fine.history, 1.1);
    const std::size_t en = epochs_to_reach(none.fine.history, 1.1);
    // First epoch from which the per-epoch ERR stays at its final value.
    auto err_settled = [](const LossHistory& h) {
        std::size_t settled = h.records.back().epoch;
        for (std::size_t i = h.size(); i-- > 0;) {
            if (h.records[i].err != h.records.back().err) break;
            settled = h.records[i].epoch;
        }
        return settled;
    };
    const auto pf = epochs_to_reach(runs.pretrained(SkipMode::full).history, 1.1);
    const auto pn = epochs_to_reach(runs.pretrained(SkipMode::none).history, 1.1);
    return {ef <= en,
            "epochs to 110% of final loss: full-skip " + std::to_string(ef) + ", no-skip ablation " + std::to_string(en) +
                " (need full <= none); final loss " + fmt(full.fine.history.records.back().loss.total) + " vs " +
                fmt(none.fine.history.records.back().loss.total) + ", ERR " + fmt(full.clusters.err) + " vs " +
                fmt(none.clusters.err),
            {{"epochs_to_110pct_full", ef},
             {"epochs_to_110pct_none", en},
             {"final_loss_full", full.fine.history.records.back().loss.total},
             {"final_loss_none", none.fine.history.records.back().loss.total},
             {"err_full", full.clusters.err},
             {"err_none", none.clusters.err},
             {"err_settled_epoch_full", err_settled(full.fine.history)},
             {"err_settled_epoch_none", err_settled(none.fine.history)},
             {"pretrain_epochs_to_110pct_full", pf},
             {"pretrain_epochs_to_110pct_none", pn}}};
}

Outcome a8_metrics() {
    std::mt19937_64 rng(8);
    std::size_t err_mismatch = 0;
    double nmi_dev = 0.0, pur_dev = 0.0;
    for (int k = 1; k <= 6; ++k)
        for (int trial = 0; trial < 100; ++trial) {
            const auto truth = oracle::random_labels(40, k, rng);
            const auto pred = oracle::random_labels(40, k, rng);
            err_mismatch += clustering_error(pred, truth) != oracle::brute_force_error(pred, truth);
            nmi_dev = std::max(nmi_dev, std::abs(nmi(pred, truth) - oracle::nmi(pred, truth)));
            pur_dev = std::max(pur_dev, std::abs(purity(pred, truth) - oracle::purity(pred, truth)));
        }
    return {err_mismatch == 0 && nmi_dev <= 1e-12 && pur_dev <= 1e-12,
            std::to_string(err_mismatch) + " ERR mismatches in 600 pairs; max NMI deviation " + fmt(nmi_dev) +
                ", PUR " + fmt(pur_dev) + " (<= 1e-12)",
            {{"err_mismatches", err_mismatch}, {"nmi_max_deviation", nmi_dev}, {"pur_max_deviation", pur_dev}}};
}

Outcome a9_parameters() {
    const std::size_t n = 1000;
    const ParameterCount f = parameter_count_formula(Architecture{}, n);
    const ParameterCount e = parameter_count_enumerated(Architecture{}, n);
    bool consistent = true;
    try {
        count_parameters(Architecture{}, n);
    } catch (const InternalConsistencyError&) {
        consistent = false;
    }
    const bool pass = consistent && f == e && f.weights == 14900 && f.biases == 111 && f.self_expressive == n * n;
    return {pass,
            "formula weights " + std::to_string(f.weights) + " / enumerated " + std::to_string(e.weights) +
                "; formula biases " + std::to_string(f.biases) + " / enumerated " + std::to_string(e.biases) +
                "; self-expressive " + std::to_string(f.self_expressive) + " / " + std::to_string(e.self_expressive),
            {{"formula", {{"weights", f.weights}, {"biases", f.biases}, {"self_expressive", f.self_expressive}}},
             {"enumerated", {{"weights", e.weights}, {"biases", e.biases}, {"self_expressive", e.self_expressive}}}}};
}

Outcome a10_spectral() {
    std::size_t failures = 0, runs = 0;
    for (std::size_t n : {2, 3, 5})
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(seed * 101 + n);
            std::uniform_int_distribution<int> size(3, 12);
            std::uniform_real_distribution<double> weight(0.1, 1.0);
            std::vector<int> truth;
            for (std::size_t c = 0; c < n; ++c) truth.insert(truth.end(), size(rng), static_cast<int>(c));
            std::shuffle(truth.begin(), truth.end(), rng);
            const auto m = static_cast<Eigen::Index>(truth.size());
            Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < m; ++j)
                    if (truth[i] == truth[j]) coeff(i, j) = weight(rng);
            const auto pred = spectral_cluster(build_affinity(coeff), n, seed);
            failures += clustering_error(pred, truth) != 0.0;
            ++runs;
        }
    return {failures == 0, std::to_string(runs - failures) + "/" + std::to_string(runs) + " recovered exactly",
            {{"runs", runs}, {"failures", failures}}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria A1-A10"};
    std::string json_path, csv_dir, only, expect_fail;
    std::string data_dir = REDSC_DATA_DIR;
    app.add_option("--json", json_path, "write per-criterion metrics as JSON");
    app.add_option("--csv-dir", csv_dir, "write loss histories of the training runs");
    app.add_option("--data-dir", data_dir, "directory containing mnist/");
    app.add_option("--only", only, "comma-separated subset, e.g. A1,A8");
    app.add_option("--expect-fail", expect_fail, "comma-separated criteria known to fail");
    CLI11_PARSE(app, argc, argv);

    auto split = [](const std::string& s) {
        std::set<std::string> out;
        std::stringstream ss(s);
        for (std::string item; std::getline(ss, item, ',');)
            if (!item.empty()) out.insert(item);
        return out;
    };
    const std::set<std::string> selected = split(only), expected = split(expect_fail);

    SynthRuns runs;
    runs.csv_dir = csv_dir;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"A1", a1_gradcheck},
        {"A2", a2_adjoint},
        {"A3", a3_ridge},
        {"A4", [&] { return a4_lsr(runs); }},
        {"A5", [&] { return a5_pretrain(runs); }},
        {"A6", [&] { return a6_end_to_end(runs, data_dir); }},
        {"A7", [&] { return a7_convergence(runs); }},
        {"A8", a8_metrics},
        {"A9", a9_parameters},
        {"A10", a10_spectral},
    };

    json report = json::object();
    std::set<std::string> failed;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what(), json::object()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) failed.insert(id);
        std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << fmt(secs, 3) << " s]"
                  << std::endl;
        report[id] = {{"pass", o.pass}, {"detail", o.detail}, {"metrics", o.metrics}, {"wall_seconds", secs}};
    }

    if (!json_path.empty()) std::ofstream(json_path) << report.dump(2) << '\n';

    std::set<std::string> expected_here;
    for (const std::string& id : expected)
        if (report.contains(id)) expected_here.insert(id);
    if (failed == expected_here) {
        std::cout << (failed.empty() ? "all criteria passed" : "failures match the expected set") << std::endl;
        return 0;
    }
    std::cout << "failing criteria differ from the expected set" << std::endl;
    return 1;
}
