#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "redsc/array.hpp"
#include "redsc/errors.hpp"

namespace redsc::data {

/// Grayscale image batch [N, 1, H, W] with pixels in [0, 1] and optional labels.
struct Dataset {
    Array images;
    std::vector<int> labels;  // empty when unlabelled
    std::string name;
    std::string provenance;
    std::vector<std::string> warnings;

    std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }
    bool labelled() const { return !labels.empty(); }

    std::size_t class_count() const {
        return std::set<int>(labels.begin(), labels.end()).size();
    }

    /// D x N matrix whose columns are the vectorised images.
    Eigen::MatrixXd as_columns() const {
        const std::size_t n = size();
        const std::size_t d = images.size() / n;
        Eigen::MatrixXd m(d, n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < d; ++i) m(i, j) = images[j * d + i];
        return m;
    }

    void validate() const {
        if (images.ndim() != 4 || images.dim(1) != 1) throw ContractError("dataset: images must be [N, 1, H, W]");
        for (double v : images.values())
            if (!(v >= 0.0 && v <= 1.0)) throw ContractError("dataset: pixel value outside [0, 1]");
        if (labels.empty()) return;
        if (labels.size() != size()) throw ContractError("dataset: label count differs from image count");
        const int k = static_cast<int>(class_count());
        std::vector<bool> seen(k, false);
        for (int l : labels) {
            if (l < 0 || l >= k) throw ContractError("dataset: labels must be 0..n-1 with every class non-empty");
            seen[l] = true;
        }
    }
};

/// Picks `per_class` samples of each listed class (all classes when `classes` is
/// empty) with a seeded shuffle. Output is grouped by class in the order of
/// `classes`, relabelled to 0..n-1.
inline Dataset subset_select(const Dataset& ds, std::size_t per_class, std::vector<int> classes, std::uint64_t seed) {
    if (!ds.labelled()) throw ContractError("subset_select: dataset has no labels");
    if (per_class == 0) throw ContractError("subset_select: per_class must be positive (empty dataset)");
    if (classes.empty()) {
        std::set<int> all(ds.labels.begin(), ds.labels.end());
        classes.assign(all.begin(), all.end());
    }
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) members[ds.labels[i]].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picked;
    std::vector<int> new_labels;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<std::size_t> idx = members[classes[c]];
        if (idx.size() < per_class)
            throw ContractError("subset_select: class " + std::to_string(classes[c]) + " has " +
                                std::to_string(idx.size()) + " samples, " + std::to_string(per_class) + " requested");
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(per_class);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
            picked.push_back(i);
            new_labels.push_back(static_cast<int>(c));
        }
    }

    const std::size_t plane = ds.images.size() / ds.size();
    Array images({picked.size(), 1, ds.height(), ds.width()});
    for (std::size_t j = 0; j < picked.size(); ++j)
        std::copy_n(ds.images.data() + picked[j] * plane, plane, images.data() + j * plane);
    Dataset out{std::move(images), std::move(new_labels), ds.name + "-subset", ds.provenance, {}};
    out.provenance += "; subset per_class=" + std::to_string(per_class) + " seed=" + std::to_string(seed);
    return out;
}

/// Every sample of the listed classes, in original order, relabelled to the
/// position of its class in `classes`.
inline Dataset select_classes(const Dataset& ds, const std::vector<int>& classes) {
    if (!ds.labelled()) throw ContractError("select_classes: dataset has no labels");
    std::map<int, int> position;
    for (std::size_t c = 0; c < classes.size(); ++c) position.emplace(classes[c], static_cast<int>(c));
    std::vector<std::size_t> picked;
    std::vector<int> new_labels;
    std::vector<bool> seen(classes.size(), false);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        auto it = position.find(ds.labels[i]);
        if (it == position.end()) continue;
        picked.push_back(i);
        new_labels.push_back(it->second);
        seen[it->second] = true;
    }
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (!seen[c]) throw ContractError("select_classes: class " + std::to_string(classes[c]) + " has no samples");
    const std::size_t plane = ds.images.size() / ds.size();
    Array images({picked.size(), 1, ds.height(), ds.width()});
    for (std::size_t j = 0; j < picked.size(); ++j)
        std::copy_n(ds.images.data() + picked[j] * plane, plane, images.data() + j * plane);
    return {std::move(images), std::move(new_labels), ds.name + "-classes", ds.provenance + "; class selection", {}};
}

/// n classes drawn at random (seeded) from those present, returned sorted.
inline std::vector<int> random_classes(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    std::set<int> all(ds.labels.begin(), ds.labels.end());
    std::vector<int> ids(all.begin(), all.end());
    if (n > ids.size()) throw ContractError("random_classes: only " + std::to_string(ids.size()) + " classes available");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace redsc::data
