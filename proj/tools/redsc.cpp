#include <CLI11.hpp>

#include <iostream>
#include <regex>

#include "redsc/cli/commands.hpp"

namespace {

std::pair<std::size_t, std::size_t> parse_hw(const std::string& s) {
    static const std::regex re(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw redsc::ConfigError("--hw: expected HxW, got '" + s + "'");
    return {std::stoul(m[1]), std::stoul(m[2])};
}

}  // namespace

int main(int argc, char** argv) {
    using namespace redsc::cli;
    CLI::App app{"Deep subspace clustering with a residual encoder-decoder"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    CommonArgs pre;
    auto* pretrain = app.add_subcommand("pretrain", "pre-train the encoder-decoder on reconstruction");
    pretrain->add_option("--config", pre.config_path, "run config or manifest (JSON)")->required();
    pretrain->add_option("--out", pre.output_dir, "output directory (overrides config)");

    FinetuneArgs fine;
    auto* finetune = app.add_subcommand("finetune", "fine-tune with self-expression and cluster");
    finetune->add_option("--config", fine.common.config_path, "run config or manifest (JSON)")->required();
    finetune->add_option("--checkpoint", fine.checkpoint_path, "pre-trained checkpoint");
    finetune->add_option("--skip-mode", fine.skip_mode, "full | none")->check(CLI::IsMember({"full", "none"}));
    finetune->add_option("--out", fine.common.output_dir, "output directory (overrides config)");

    CommonArgs base;
    auto* baseline = app.add_subcommand("baseline", "least-squares-regression subspace clustering");
    baseline->add_option("--config", base.config_path, "run config or manifest (JSON)")->required();
    baseline->add_option("--out", base.output_dir, "output directory (overrides config)");

    GradcheckArgs grad;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck->add_option("--seed", grad.seed, "RNG seed");
    gradcheck->add_option("--eps", grad.eps, "central-difference step");
    gradcheck->add_option("--json", grad.json_path, "write the report as JSON");

    SynthArgs syn;
    std::string hw = "8x8";
    auto* synth = app.add_subcommand("synth", "generate a synthetic union-of-subspaces dataset");
    synth->add_option("--n", syn.spec.subspaces, "number of subspaces");
    synth->add_option("--d", syn.spec.dim, "subspace dimension");
    synth->add_option("--hw", hw, "image size HxW");
    synth->add_option("--per-class", syn.spec.per_class, "samples per subspace");
    synth->add_option("--sigma", syn.spec.noise_sigma, "Gaussian noise level");
    synth->add_option("--seed", syn.spec.seed, "RNG seed");
    synth->add_option("--out", syn.output_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    if (*pretrain) return run_guarded([&] { return cmd_pretrain(pre); });
    if (*finetune) return run_guarded([&] { return cmd_finetune(fine); });
    if (*baseline) return run_guarded([&] { return cmd_baseline(base); });
    if (*gradcheck) return run_guarded([&] { return cmd_gradcheck(grad); });
    return run_guarded([&] {
        std::tie(syn.spec.height, syn.spec.width) = parse_hw(hw);
        return cmd_synth(syn);
    });
}
