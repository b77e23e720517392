#pragma once

// Standard gradient checks for every differentiable op the network uses, plus
// the composed global loss on a small batch.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "redsc/gradcheck.hpp"
#include "redsc/model.hpp"

namespace redsc {

struct GradcheckEntry {
    std::string name;
    ad::GradcheckReport report;
};

inline Array random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : a.values()) v = u(rng);
    return a;
}

namespace detail {

inline GradcheckEntry check(std::string name, const std::function<ad::Var()>& f, std::vector<ad::Var> params,
                            const ad::GradcheckOptions& opt) {
    return {std::move(name), ad::gradcheck(f, params, opt)};
}

// Random weights on a fixed random readout keep every op's output gradient non-uniform.
inline ad::Var weighted_sum(const ad::Var& v, const Array& readout) {
    const std::size_t n = v.value().size();
    return ad::matmul(ad::reshape(v, {1, n}), ad::constant(readout.reshaped({n, 1})));
}

}  // namespace detail

/// Runs the suite with central differences of step `eps`. Large parameter
/// arrays are subsampled with a seeded RNG.
inline std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed, double eps = 1e-5) {
    std::mt19937_64 rng(seed);
    ad::GradcheckOptions opt{eps, 0, seed};
    std::vector<GradcheckEntry> out;

    {
        const ConvSpec spec = ConvSpec::same(3, 2, 3, 2);
        ad::Var x = ad::parameter(random_array({2, 2, 6, 5}, rng));
        ad::Var w = ad::parameter(random_array(spec.weight_shape(), rng));
        ad::Var b = ad::parameter(random_array(spec.bias_shape(), rng));
        const Array readout = random_array({2 * 3 * 3 * 3}, rng);
        out.push_back(detail::check("conv2d", [&] { return detail::weighted_sum(ad::conv2d(x, spec, w, b), readout); },
                                    {x, w, b}, opt));
    }
    {
        const ConvSpec spec = ConvSpec::same(3, 2, 3, 2);
        ad::Var y = ad::parameter(random_array({2, 3, 3, 3}, rng));
        ad::Var w = ad::parameter(random_array(spec.weight_shape(), rng));
        ad::Var b = ad::parameter(random_array({2}, rng));
        const Array readout = random_array({2 * 2 * 6 * 5}, rng);
        out.push_back(detail::check(
            "deconv2d", [&] { return detail::weighted_sum(ad::deconv2d(y, spec, w, b, {6, 5}), readout); }, {y, w, b},
            opt));
    }
    {
        ad::Var x = ad::parameter(random_array({4, 5}, rng));
        const Array readout = random_array({20}, rng);
        out.push_back(detail::check("relu", [&] { return detail::weighted_sum(ad::relu(x), readout); }, {x}, opt));
    }
    {
        ad::Var a = ad::parameter(random_array({3, 4}, rng));
        ad::Var b = ad::parameter(random_array({4, 5}, rng));
        const Array readout = random_array({15}, rng);
        out.push_back(
            detail::check("matmul", [&] { return detail::weighted_sum(ad::matmul(a, b), readout); }, {a, b}, opt));
    }
    {
        ad::Var a = ad::parameter(random_array({3, 4}, rng));
        out.push_back(detail::check("frobenius_sq", [&] { return ad::frobenius_sq(a); }, {a}, opt));
    }
    {
        const Architecture arch;
        const std::size_t n = 4;
        const ad::Var x = ad::constant(random_array({n, 1, 8, 8}, rng, 0.0, 1.0));
        ModelParams params{init_autoencoder(arch, seed), ad::parameter(random_array({n, n}, rng, -0.5, 0.5))};
        for (ConvLayer* l : {&params.autoencoder.encoder[0], &params.autoencoder.decoder[0]})
            l->bias.mutable_value() = random_array(l->bias.shape(), rng, -0.1, 0.1);
        ad::GradcheckOptions sub = opt;
        sub.max_coords_per_param = 200;
        out.push_back(detail::check(
            "redsc_global_loss",
            [&] { return loss_global(x, forward_finetune(x, params, arch), params.self_expressive, 1.0).total; },
            params.trainables(), sub));
    }
    return out;
}

}  // namespace redsc
