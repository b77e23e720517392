#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

#include "redsc/data/dataset.hpp"

namespace redsc::data {

struct SynthSpec {
    std::size_t subspaces = 5;
    std::size_t dim = 4;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t per_class = 50;
    double noise_sigma = 0.01;
    std::uint64_t seed = 7;

    std::size_t ambient() const { return height * width; }
};

/// Synthetic union of subspaces. `raw` holds the D x N data before the affine
/// [0, 1] rescale that produces the images: image = (raw - offset) / scale.
struct SynthDataset {
    Dataset dataset;
    Eigen::MatrixXd raw;
    double offset = 0.0;
    double scale = 1.0;
};

/// For each subspace: orthonormal D x d basis from the QR of a Gaussian matrix,
/// N(0, 1) coefficients, plus N(0, sigma^2) ambient noise. Samples are grouped by
/// subspace; column j of the data becomes image j (row-major H x W).
inline SynthDataset synth_subspaces(const SynthSpec& spec) {
    const std::size_t big_d = spec.ambient();
    if (spec.subspaces == 0 || spec.per_class == 0) throw ContractError("synth: need at least one subspace and sample");
    if (spec.dim == 0 || spec.dim >= big_d)
        throw ContractError("synth: intrinsic dimension " + std::to_string(spec.dim) + " must be in [1, D = " +
                            std::to_string(big_d) + ")");
    if (!(spec.noise_sigma >= 0.0)) throw ContractError("synth: noise sigma must be non-negative");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
        return m;
    };

    const auto D = static_cast<Eigen::Index>(big_d);
    const auto d = static_cast<Eigen::Index>(spec.dim);
    const auto per = static_cast<Eigen::Index>(spec.per_class);
    const Eigen::Index n = per * static_cast<Eigen::Index>(spec.subspaces);

    SynthDataset out;
    out.raw.resize(D, n);
    std::vector<int> labels;
    for (std::size_t s = 0; s < spec.subspaces; ++s) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(D, d));
        const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(D, d);
        out.raw.middleCols(static_cast<Eigen::Index>(s) * per, per) = basis * gaussian(d, per);
        labels.insert(labels.end(), spec.per_class, static_cast<int>(s));
    }
    if (spec.noise_sigma > 0.0) out.raw += spec.noise_sigma * gaussian(D, n);

    out.offset = out.raw.minCoeff();
    const double range = out.raw.maxCoeff() - out.offset;
    out.scale = range > 0.0 ? range : 1.0;

    Array images({static_cast<std::size_t>(n), 1, spec.height, spec.width});
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < D; ++i)
            images[static_cast<std::size_t>(j * D + i)] = std::clamp((out.raw(i, j) - out.offset) / out.scale, 0.0, 1.0);

    out.dataset.images = std::move(images);
    out.dataset.labels = std::move(labels);
    out.dataset.name = "synth";
    out.dataset.provenance = "synth n=" + std::to_string(spec.subspaces) + " d=" + std::to_string(spec.dim) +
                             " hw=" + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                             " per_class=" + std::to_string(spec.per_class) + " seed=" + std::to_string(spec.seed);
    return out;
}

}  // namespace redsc::data
