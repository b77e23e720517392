#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "redsc/errors.hpp"
#include "redsc/hungarian.hpp"

namespace redsc {

namespace detail {

/// Relabels arbitrary ids to 0..k-1 in order of first appearance of the sorted id set.
inline std::vector<int> compact_labels(std::span<const int> labels, int& k) {
    std::map<int, int> ids;
    for (int l : labels) ids.emplace(l, 0);
    int next = 0;
    for (auto& [id, idx] : ids) idx = next++;
    k = next;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(ids[l]);
    return out;
}

/// Rows: predicted cluster, columns: true class.
inline Eigen::MatrixXd contingency(std::span<const int> pred, std::span<const int> truth, int& kp, int& kt) {
    if (pred.size() != truth.size())
        throw ContractError("metrics: label vectors differ in length (" + std::to_string(pred.size()) + " vs " +
                            std::to_string(truth.size()) + ")");
    if (pred.empty()) throw ContractError("metrics: empty labelling");
    const auto p = compact_labels(pred, kp);
    const auto t = compact_labels(truth, kt);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(kp, kt);
    for (std::size_t i = 0; i < p.size(); ++i) c(p[i], t[i]) += 1.0;
    return c;
}

}  // namespace detail

/// 1 - (best one-to-one matching accuracy), the matching found by the Hungarian
/// algorithm on the contingency table.
inline double clustering_error(std::span<const int> pred, std::span<const int> truth) {
    int kp = 0, kt = 0;
    const Eigen::MatrixXd c = detail::contingency(pred, truth, kp, kt);
    const int k = std::max(kp, kt);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(k, k);
    cost.topLeftCorner(kp, kt) = -c;
    const std::vector<int> match = hungarian_min_cost(cost);
    double correct = 0.0;
    for (int i = 0; i < kp; ++i)
        if (match[i] < kt) correct += c(i, match[i]);
    return 1.0 - correct / static_cast<double>(pred.size());
}

/// I(pred; truth) / sqrt(H(pred) H(truth)), with 0/0 taken as 0.
inline double nmi(std::span<const int> pred, std::span<const int> truth) {
    int kp = 0, kt = 0;
    const Eigen::MatrixXd c = detail::contingency(pred, truth, kp, kt);
    const double n = static_cast<double>(pred.size());
    const Eigen::VectorXd rp = c.rowwise().sum() / n;
    const Eigen::VectorXd rt = c.colwise().sum().transpose() / n;
    auto entropy = [](const Eigen::VectorXd& p) {
        double h = 0.0;
        for (double v : p)
            if (v > 0.0) h -= v * std::log(v);
        return h;
    };
    double mi = 0.0;
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kt; ++j) {
            const double pij = c(i, j) / n;
            if (pij > 0.0) mi += pij * std::log(pij / (rp[i] * rt[j]));
        }
    const double denom = std::sqrt(entropy(rp) * entropy(rt));
    if (denom == 0.0) return 0.0;
    return std::clamp(mi / denom, 0.0, 1.0);
}

/// (1/N) sum_k max_j |cluster_k intersect class_j|
inline double purity(std::span<const int> pred, std::span<const int> truth) {
    int kp = 0, kt = 0;
    const Eigen::MatrixXd c = detail::contingency(pred, truth, kp, kt);
    return c.rowwise().maxCoeff().sum() / static_cast<double>(pred.size());
}

struct ClusterResult {
    std::vector<int> labels;
    std::size_t n_clusters = 0;
    double err = 0.0;
    double nmi = 0.0;
    double pur = 0.0;
};

inline ClusterResult evaluate_clustering(std::vector<int> pred, std::span<const int> truth, std::size_t n_clusters) {
    ClusterResult r;
    r.err = clustering_error(pred, truth);
    r.nmi = nmi(pred, truth);
    r.pur = purity(pred, truth);
    r.labels = std::move(pred);
    r.n_clusters = n_clusters;
    return r;
}

}  // namespace redsc
