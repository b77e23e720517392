#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "redsc/errors.hpp"
#include "redsc/metrics.hpp"
#include "redsc/spectral.hpp"

namespace redsc {

/// Ridge-regularised self-expression over one or more feature matrices
/// (each D_i x N, columns are samples).
struct RidgeProblem {
    std::vector<Eigen::MatrixXd> features;
    double lambda = 1.0;
    bool zero_diag = false;
};

/// Gram matrix G = sum_i Z_i^T Z_i.
inline Eigen::MatrixXd ridge_gram(const RidgeProblem& p) {
    if (p.features.empty()) throw ContractError("ridge: no feature matrices");
    const Eigen::Index n = p.features.front().cols();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (const Eigen::MatrixXd& z : p.features) {
        if (z.cols() != n) throw ContractError("ridge: feature matrices disagree on N");
        g.noalias() += z.transpose() * z;
    }
    return g;
}

/// Minimiser of sum_i ||Z_i - Z_i C||_F^2 + lambda ||C||_F^2, i.e.
/// C* = (G + lambda I)^{-1} G, solved by Cholesky.
inline Eigen::MatrixXd ridge_closed_form(const RidgeProblem& p) {
    if (p.zero_diag) throw ContractError("ridge: the closed form covers the unconstrained problem only (zero_diag = false)");
    if (!(p.lambda >= 0.0)) throw ContractError("ridge: lambda must be non-negative");
    const Eigen::MatrixXd g = ridge_gram(p);
    Eigen::MatrixXd lhs = g;
    lhs.diagonal().array() += p.lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(lhs);
    if (llt.info() != Eigen::Success) throw NumericalError("ridge: regularization required (G + lambda I is singular)");
    if (p.lambda == 0.0) {
        // LLT can succeed on a numerically singular Gram matrix; reject tiny pivots.
        const Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal();
        if (d.minCoeff() <= 1e-10 * d.maxCoeff())
            throw NumericalError("ridge: regularization required (G is singular)");
    }
    return llt.solve(g);
}

/// Gradient of the ridge objective: 2 (G + lambda I) C - 2 G.
inline Eigen::MatrixXd ridge_objective_gradient(const RidgeProblem& p, const Eigen::MatrixXd& c) {
    const Eigen::MatrixXd g = ridge_gram(p);
    return 2.0 * (g * c + p.lambda * c - g);
}

struct BaselineOptions {
    double lambda = 1.0;
    std::uint64_t seed = 0;
    SpectralOptions spectral;
};

struct BaselineResult {
    Eigen::MatrixXd coefficients;
    ClusterResult clusters;
};

/// Least-squares-regression subspace clustering on raw data (columns are samples):
/// ridge closed form, affinity, spectral clustering and, with truth labels, metrics.
inline BaselineResult lsr_baseline_cluster(const Eigen::MatrixXd& x_raw, std::size_t n_clusters,
                                           const BaselineOptions& options, std::span<const int> truth = {}) {
    if (n_clusters < 2) throw ContractError("lsr baseline: need at least 2 clusters");
    BaselineResult out;
    out.coefficients = ridge_closed_form({{x_raw}, options.lambda, false});
    std::vector<int> labels =
        spectral_cluster(build_affinity(out.coefficients), n_clusters, options.seed, options.spectral);
    if (!truth.empty()) {
        out.clusters = evaluate_clustering(std::move(labels), truth, n_clusters);
    } else {
        out.clusters.labels = std::move(labels);
        out.clusters.n_clusters = n_clusters;
    }
    return out;
}

}  // namespace redsc
