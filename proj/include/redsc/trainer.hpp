#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "redsc/adam.hpp"
#include "redsc/model.hpp"

namespace redsc {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs_pretrain = 500;
    std::size_t epochs_finetune = 300;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    bool zero_diag = true;
    SkipMode skip_mode = SkipMode::full;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must be in [0, 1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must be in [0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
        if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
    }

    AdamHyper adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;
    std::optional<double> err;
};

/// One record per completed epoch. Losses are measured at the parameters the
/// epoch starts from, i.e. before its optimizer step.
struct LossHistory {
    std::vector<EpochRecord> records;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }

    std::vector<double> totals() const {
        std::vector<double> t;
        for (const EpochRecord& r : records) t.push_back(r.loss.total);
        return t;
    }

    /// epoch,reconstruction,self_expression,regularizer,total,err
    void write_csv(std::ostream& os) const {
        os << "epoch,reconstruction,self_expression,regularizer,total,err\n";
        const auto flags = os.flags();
        const auto prec = os.precision();
        os << std::setprecision(17);
        for (const EpochRecord& r : records) {
            os << r.epoch << ',' << r.loss.reconstruction << ',' << r.loss.self_expression << ',' << r.loss.regularizer
               << ',' << r.loss.total << ',';
            if (r.err) os << *r.err;
            os << '\n';
        }
        os.flags(flags);
        os.precision(prec);
    }
};

/// First epoch whose total loss is within `factor` of the final epoch's total
/// (e.g. 1.1 for 110%). Returns 0 on an empty history.
inline std::size_t epochs_to_reach(const LossHistory& h, double factor) {
    if (h.empty()) return 0;
    const double target = factor * h.records.back().loss.total;
    for (const EpochRecord& r : h.records)
        if (r.loss.total <= target) return r.epoch;
    return h.records.back().epoch;
}

/// Trailing moving average with the given window (first window-1 entries omitted).
inline std::vector<double> moving_average(std::span<const double> xs, std::size_t window) {
    std::vector<double> out;
    if (window == 0 || xs.size() < window) return out;
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        s += xs[i];
        if (i >= window) s -= xs[i - window];
        if (i + 1 >= window) out.push_back(s / static_cast<double>(window));
    }
    return out;
}

namespace detail {

class DivergenceGuard {
public:
    static constexpr double kFactor = 1e6;

    void check(std::size_t epoch, double total) {
        if (!std::isfinite(total))
            throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        if (!initial_) initial_ = total;
        if (total > kFactor * *initial_)
            throw DivergenceError("training diverged: loss " + std::to_string(total) + " at epoch " +
                                  std::to_string(epoch) + " exceeds 1e6 x initial loss");
    }

private:
    std::optional<double> initial_;
};

template <typename F>
auto guarded_forward(std::size_t epoch, F&& f) {
    try {
        return f();
    } catch (const DivergenceError&) {
        throw;
    } catch (const NumericalError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
}

inline void zero_diagonal(Array& c) {
    for (std::size_t i = 0; i < c.dim(0); ++i) c.at(i, i) = 0.0;
}

}  // namespace detail

struct PretrainResult {
    AutoencoderParams params;
    LossHistory history;
};

/// Minimises the reconstruction loss of the pre-training network from the given
/// initial parameters (copied, not modified).
inline PretrainResult pretrain(const Array& x, const AutoencoderParams& init, const Architecture& arch,
                               const TrainConfig& config) {
    config.validate();
    arch.validate();
    check_params(init, arch);
    PretrainResult out{init.clone(), {}};
    std::vector<ad::Var> params = out.params.trainables();
    AdamState state = AdamState::for_params(params);
    const ad::Var input = ad::constant(x);
    detail::DivergenceGuard guard;

    for (std::size_t epoch = 1; epoch <= config.epochs_pretrain; ++epoch) {
        for (ad::Var& p : params) p.zero_grad();
        ad::Var loss = detail::guarded_forward(epoch, [&] {
            return reconstruction_loss(input, forward_pretrain(input, out.params, arch, config.skip_mode));
        });
        const double rec = loss.item();
        guard.check(epoch, rec);
        out.history.records.push_back({epoch, {rec, 0.0, 0.0, rec}, std::nullopt});
        ad::backward(loss);
        adam_step(params, state, config.adam());
    }
    return out;
}

/// Pre-training from a seeded initialisation.
inline PretrainResult pretrain(const Array& x, const Architecture& arch, const TrainConfig& config) {
    return pretrain(x, init_autoencoder(arch, config.seed), arch, config);
}

struct FinetuneInit {
    AutoencoderParams autoencoder;
    std::optional<Array> self_expressive;  // defaults to init_self_expressive(N)
};

struct FinetuneResult {
    ModelParams params;
    LossHistory history;
};

/// Optional per-epoch evaluation of Theta_c (e.g. clustering error).
using ThetaEvaluator = std::function<std::optional<double>(std::size_t epoch, const Array& theta_c)>;

/// Jointly minimises the global loss over encoder, decoder and Theta_c on the
/// full batch. With zero_diag, diag(Theta_c) is reset to 0 after every step.
inline FinetuneResult finetune(const Array& x, const FinetuneInit& init, const Architecture& arch,
                               const TrainConfig& config, const ThetaEvaluator& evaluator = {}) {
    config.validate();
    arch.validate();
    check_params(init.autoencoder, arch);
    if (x.ndim() != 4) throw ConfigError("finetune: input must be [N, C, H, W]");
    const std::size_t n = x.dim(0);

    FinetuneResult out;
    out.params.autoencoder = init.autoencoder.clone();
    if (init.self_expressive) {
        if (init.self_expressive->shape() != Shape{n, n})
            throw ConfigError("finetune: initial Theta_c has shape " + shape_str(init.self_expressive->shape()) +
                              " but the batch has N = " + std::to_string(n));
        out.params.self_expressive = ad::parameter(*init.self_expressive);
    } else {
        out.params.self_expressive = init_self_expressive(n);
    }
    if (config.zero_diag) detail::zero_diagonal(out.params.self_expressive.mutable_value());

    std::vector<ad::Var> params = out.params.trainables();
    AdamState state = AdamState::for_params(params);
    const ad::Var input = ad::constant(x);
    detail::DivergenceGuard guard;

    for (std::size_t epoch = 1; epoch <= config.epochs_finetune; ++epoch) {
        for (ad::Var& p : params) p.zero_grad();
        GlobalLoss loss = detail::guarded_forward(epoch, [&] {
            FinetuneOutput fwd = forward_finetune(input, out.params, arch, config.skip_mode);
            return loss_global(input, fwd, out.params.self_expressive, config.lambda);
        });
        guard.check(epoch, loss.breakdown.total);
        std::optional<double> err;
        if (evaluator) err = evaluator(epoch, out.params.self_expressive.value());
        out.history.records.push_back({epoch, loss.breakdown, err});
        ad::backward(loss.total);
        adam_step(params, state, config.adam());
        if (config.zero_diag) detail::zero_diagonal(out.params.self_expressive.mutable_value());
    }
    return out;
}

struct SelfExpressionFit {
    Array theta_c;
    std::vector<double> losses;
};

/// Trains Theta_c alone by Adam on sum_i ||Z_i - Z_i Theta_c||^2 + lambda ||Theta_c||^2
/// for fixed feature maps, through the same self-expressive layer the network uses.
inline SelfExpressionFit fit_self_expression(const std::vector<Array>& feature_maps, double lambda, std::size_t steps,
                                             const AdamHyper& hyper, bool zero_diag,
                                             std::optional<Array> theta_init = std::nullopt) {
    if (feature_maps.empty()) throw ContractError("fit_self_expression: no feature maps");
    LatentStack z;
    z.shapes.push_back(feature_maps.front().shape());
    for (const Array& m : feature_maps) {
        if (m.ndim() < 2 || m.dim(0) != z.shapes.front()[0])
            throw ConfigError("fit_self_expression: feature maps disagree on the batch size");
        z.maps.push_back(ad::constant(m));
        z.shapes.push_back(m.shape());
    }
    const std::size_t n = z.batch();
    ad::Var theta = theta_init ? ad::parameter(std::move(*theta_init)) : init_self_expressive(n);
    std::vector<ad::Var> params{theta};
    AdamState state = AdamState::for_params(params);
    SelfExpressionFit out;
    for (std::size_t step = 0; step < steps; ++step) {
        theta.zero_grad();
        ad::Var loss = self_expression_loss(self_express(z, theta), theta, lambda);
        out.losses.push_back(loss.item());
        ad::backward(loss);
        adam_step(params, state, hyper);
        if (zero_diag) detail::zero_diagonal(theta.mutable_value());
    }
    out.theta_c = theta.value();
    return out;
}

}  // namespace redsc
