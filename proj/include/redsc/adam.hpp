#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "redsc/autodiff.hpp"

namespace redsc {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Array> m;
    std::vector<Array> v;
    std::uint64_t step = 0;

    static AdamState for_params(std::span<const ad::Var> params) {
        AdamState s;
        for (const ad::Var& p : params) {
            s.m.push_back(Array::zeros_like(p.value()));
            s.v.push_back(Array::zeros_like(p.value()));
        }
        return s;
    }
};

/// One bias-corrected Adam update of every parameter from its current grad.
inline void adam_step(std::span<ad::Var> params, AdamState& state, const AdamHyper& h) {
    if (state.m.size() != params.size()) throw ContractError("adam_step: state does not match parameter list");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Array& p = params[k].mutable_value();
        const Array& g = params[k].grad();
        Array& m = state.m[k];
        Array& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            p[i] -= h.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
        }
    }
}

}  // namespace redsc
