#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "redsc/autodiff.hpp"

namespace redsc::ad {

struct GradcheckOptions {
    double eps = 1e-5;
    // 0 checks every coordinate; otherwise a seeded random subset per parameter.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
};

struct GradcheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    // Coordinates whose +eps/-eps evaluations flip some ReLU.
    std::size_t skipped = 0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central differences.
///
/// The relative error of a coordinate is |a - d| / max(|a|, |d|, 1e-12). Perturbations
/// are applied to the parameters in place and restored afterwards.
inline GradcheckReport gradcheck(const std::function<Var()>& loss_builder, std::span<Var> params,
                                 const GradcheckOptions& options = {}) {
    if (!(options.eps > 0.0)) throw ContractError("gradcheck: eps must be positive");

    for (Var& p : params) p.zero_grad();
    backward(loss_builder());
    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (Var& p : params) analytic.push_back(p.grad());

    auto evaluate = [&](KinkMonitor& monitor) {
        ScopedKinkMonitor guard(monitor);
        return loss_builder().item();
    };

    GradcheckReport report;
    std::mt19937_64 rng(options.seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Array& value = params[pi].mutable_value();
        std::vector<std::size_t> coords(value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t idx : coords) {
            const double saved = value[idx];
            KinkMonitor plus, minus;
            value[idx] = saved + options.eps;
            const double f_plus = evaluate(plus);
            value[idx] = saved - options.eps;
            const double f_minus = evaluate(minus);
            value[idx] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericalError("gradcheck: non-finite loss when perturbing parameter " + std::to_string(pi) +
                                     " coordinate " + std::to_string(idx));
            if (plus.pattern != minus.pattern) {
                ++report.skipped;
                continue;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * options.eps);
            const double a = analytic[pi][idx];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            const double rel = std::abs(a - numeric) / denom;
            ++report.checked;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_param = pi;
                report.worst_index = idx;
            }
        }
    }
    return report;
}

}  // namespace redsc::ad
