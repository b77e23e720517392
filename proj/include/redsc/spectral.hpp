#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "redsc/array.hpp"
#include "redsc/errors.hpp"

namespace redsc {

/// Symmetric, nonnegative, zero-diagonal similarity matrix.
struct Affinity {
    Eigen::MatrixXd matrix;

    Eigen::Index size() const { return matrix.rows(); }
};

/// A = (|C| + |C^T|) / 2 with the diagonal zeroed.
inline Affinity build_affinity(const Eigen::MatrixXd& coefficients) {
    if (coefficients.rows() != coefficients.cols()) throw ContractError("build_affinity: coefficient matrix must be square");
    const Eigen::MatrixXd abs = coefficients.cwiseAbs();
    Affinity a{0.5 * (abs + abs.transpose())};
    // Entry-wise (x + y)/2 is commutative in floating point, so the result is exactly symmetric.
    a.matrix.diagonal().setZero();
    return a;
}

inline Affinity build_affinity(const Array& coefficients) {
    if (coefficients.ndim() != 2) throw ContractError("build_affinity: coefficient array must be a matrix");
    Eigen::MatrixXd c(coefficients.dim(0), coefficients.dim(1));
    for (std::size_t i = 0; i < coefficients.dim(0); ++i)
        for (std::size_t j = 0; j < coefficients.dim(1); ++j) c(i, j) = coefficients.at(i, j);
    return build_affinity(c);
}

struct KMeansOptions {
    std::size_t restarts = 20;
    std::size_t max_iterations = 300;
};

struct KMeansResult {
    std::vector<int> labels;
    double inertia = std::numeric_limits<double>::infinity();
};

/// Lloyd's k-means on the rows of `points` with k-means++ seeding. The lowest-
/// inertia restart wins (earliest on ties); assignment ties go to the lowest index.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
    const Eigen::Index n = points.rows();
    if (k == 0 || static_cast<Eigen::Index>(k) > n) throw ContractError("kmeans: need 1 <= k <= number of points");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    const Eigen::Index kk = static_cast<Eigen::Index>(k);

    for (std::size_t restart = 0; restart < std::max<std::size_t>(options.restarts, 1); ++restart) {
        Eigen::MatrixXd centers(kk, points.cols());
        // k-means++ seeding.
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        centers.row(0) = points.row(pick(rng));
        Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
        for (Eigen::Index c = 1; c < kk; ++c) {
            const double total = d2.sum();
            Eigen::Index chosen = 0;
            if (total > 0.0) {
                double r = std::uniform_real_distribution<double>(0.0, total)(rng);
                chosen = n - 1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (d2[i] <= 0.0) continue;
                    r -= d2[i];
                    if (r < 0.0) {
                        chosen = i;
                        break;
                    }
                }
                while (d2[chosen] <= 0.0) --chosen;
            } else {
                chosen = pick(rng);
            }
            centers.row(c) = points.row(chosen);
            d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
        }

        std::vector<int> labels(n, -1);
        double inertia = 0.0;
        for (std::size_t it = 0; it < options.max_iterations; ++it) {
            bool changed = false;
            inertia = 0.0;
            Eigen::VectorXd dist(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Index arg = 0;
                double bestd = std::numeric_limits<double>::infinity();
                for (Eigen::Index c = 0; c < kk; ++c) {
                    const double d = (points.row(i) - centers.row(c)).squaredNorm();
                    if (d < bestd) {
                        bestd = d;
                        arg = c;
                    }
                }
                dist[i] = bestd;
                inertia += bestd;
                if (labels[i] != arg) {
                    labels[i] = static_cast<int>(arg);
                    changed = true;
                }
            }
            if (!changed && it > 0) break;
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, points.cols());
            std::vector<std::size_t> counts(k, 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                sums.row(labels[i]) += points.row(i);
                ++counts[labels[i]];
            }
            for (Eigen::Index c = 0; c < kk; ++c) {
                if (counts[c] > 0) {
                    centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
                } else {
                    // Empty cluster: move it onto the point farthest from its center.
                    Eigen::Index far = 0;
                    dist.maxCoeff(&far);
                    centers.row(c) = points.row(far);
                    dist[far] = 0.0;
                    changed = true;
                }
            }
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = labels;
        }
    }
    return best;
}

struct SpectralOptions {
    KMeansOptions kmeans;
    double degree_floor = 1e-12;
};

/// Normalised spectral clustering: eigenvectors of the n smallest eigenvalues of
/// L = I - D^{-1/2} A D^{-1/2}, rows normalised to unit length, then k-means.
inline std::vector<int> spectral_cluster(const Affinity& a, std::size_t n_clusters, std::uint64_t seed,
                                         const SpectralOptions& options = {}) {
    const Eigen::Index n = a.size();
    if (n_clusters < 2) throw ContractError("spectral_cluster: need at least 2 clusters");
    if (static_cast<Eigen::Index>(n_clusters) > n) throw ContractError("spectral_cluster: more clusters than points");
    if (a.matrix.cols() != n) throw ContractError("spectral_cluster: affinity must be square");
    if (a.matrix.cwiseAbs().maxCoeff() == 0.0) throw ContractError("spectral_cluster: degenerate affinity (all zero)");

    const Eigen::VectorXd degree = a.matrix.rowwise().sum().cwiseMax(options.degree_floor);
    const Eigen::VectorXd inv_sqrt = degree.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * a.matrix * inv_sqrt.asDiagonal());
    lap.diagonal().array() += 1.0;
    lap = 0.5 * (lap + lap.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
    if (eig.info() != Eigen::Success) throw NumericalError("spectral_cluster: eigendecomposition failed");
    // Eigen returns eigenvalues in ascending order.
    const Eigen::Index k = static_cast<Eigen::Index>(n_clusters);
    Eigen::MatrixXd embedding = eig.eigenvectors().leftCols(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = embedding.row(i).norm();
        if (norm > 0.0) embedding.row(i) /= norm;
    }
    return kmeans(embedding, n_clusters, seed, options.kmeans).labels;
}

}  // namespace redsc
