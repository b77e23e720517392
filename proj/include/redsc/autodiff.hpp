#pragma once

// Reverse-mode differentiation over a dynamically built graph.
//
// Every op allocates a fresh Node holding its value, a gradient accumulator and
// strong references to its parents. The graph is rebuilt for every evaluation;
// leaf parameters persist across evaluations and are mutated only between them.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "redsc/array.hpp"
#include "redsc/errors.hpp"

namespace redsc::ad {

struct Node {
    Array value;
    Array grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;
    std::string op;
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Array& value() const { return node_->value; }
    const Array& grad() const { return node_->grad; }
    Array& mutable_value() { return node_->value; }
    Array& mutable_grad() { return node_->grad; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& op() const { return node_->op; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.fill(0.0);
    }

    /// Scalar value of a one-element node.
    double item() const {
        if (node_->value.size() != 1) throw ContractError("item() on non-scalar of shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool valid() const noexcept { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Trainable leaf.
inline Var parameter(Array value) {
    auto n = std::make_shared<Node>();
    n->grad = Array::zeros_like(value);
    n->value = std::move(value);
    n->requires_grad = true;
    n->op = "parameter";
    return Var(std::move(n));
}

/// Leaf that never receives a gradient.
inline Var constant(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "constant";
    return Var(std::move(n));
}

/// Observes ReLU activation patterns; used by gradcheck to detect kink crossings.
struct KinkMonitor {
    std::vector<bool> pattern;
};

namespace detail {

inline KinkMonitor*& active_kink_monitor() {
    thread_local KinkMonitor* monitor = nullptr;
    return monitor;
}

inline Var make_result(Array value, std::vector<Var> inputs, std::string op,
                       std::function<void(Node&)> backward_fn) {
    if (!value.all_finite()) throw NumericalError(op + ": non-finite value in forward pass");
    auto n = std::make_shared<Node>();
    for (const Var& v : inputs) {
        n->requires_grad = n->requires_grad || v.requires_grad();
        n->parents.push_back(v.node());
    }
    if (n->requires_grad) {
        n->grad = Array::zeros_like(value);
        n->backward_fn = std::move(backward_fn);
    }
    n->value = std::move(value);
    n->op = std::move(op);
    return Var(std::move(n));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

inline void require_matrix(const Var& a, const char* op) {
    if (a.shape().size() != 2)
        throw ConfigError(std::string(op) + ": expected a matrix, got shape " + shape_str(a.shape()));
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(const Array& a) {
    return {a.data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1))};
}
inline MatrixMap as_matrix(Array& a) {
    return {a.data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1))};
}

inline void accumulate(Node& parent, const Array& g, double scale = 1.0) {
    if (!parent.requires_grad) return;
    double* dst = parent.grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace detail

/// Installs a KinkMonitor for the lifetime of the guard.
class ScopedKinkMonitor {
public:
    explicit ScopedKinkMonitor(KinkMonitor& m) : previous_(detail::active_kink_monitor()) {
        detail::active_kink_monitor() = &m;
    }
    ~ScopedKinkMonitor() { detail::active_kink_monitor() = previous_; }
    ScopedKinkMonitor(const ScopedKinkMonitor&) = delete;
    ScopedKinkMonitor& operator=(const ScopedKinkMonitor&) = delete;

private:
    KinkMonitor* previous_;
};

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "add");
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return detail::make_result(std::move(out), {a, b}, "add", [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], self.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "sub");
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return detail::make_result(std::move(out), {a, b}, "sub", [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], self.grad, -1.0);
    });
}

inline Var scale(const Var& a, double c) {
    Array out = a.value();
    for (double& v : out.values()) v *= c;
    return detail::make_result(std::move(out), {a}, "scale",
                               [c](Node& self) { detail::accumulate(*self.parents[0], self.grad, c); });
}

/// max(x, 0). The derivative at exactly zero is taken as 0.
inline Var relu(const Var& a) {
    Array out = a.value();
    if (KinkMonitor* m = detail::active_kink_monitor()) {
        for (double v : out.values()) m->pattern.push_back(v > 0.0);
    }
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return detail::make_result(std::move(out), {a}, "relu", [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    });
}

inline Var matmul(const Var& a, const Var& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    if (a.shape()[1] != b.shape()[0])
        throw ConfigError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Array out({a.shape()[0], b.shape()[1]});
    detail::as_matrix(out).noalias() = detail::as_matrix(a.value()) * detail::as_matrix(b.value());
    return detail::make_result(std::move(out), {a, b}, "matmul", [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        auto g = detail::as_matrix(std::as_const(self.grad));
        if (pa.requires_grad)
            detail::as_matrix(pa.grad).noalias() += g * detail::as_matrix(std::as_const(pb.value)).transpose();
        if (pb.requires_grad)
            detail::as_matrix(pb.grad).noalias() += detail::as_matrix(std::as_const(pa.value)).transpose() * g;
    });
}

inline Var transpose(const Var& a) {
    detail::require_matrix(a, "transpose");
    Array out({a.shape()[1], a.shape()[0]});
    detail::as_matrix(out) = detail::as_matrix(a.value()).transpose();
    return detail::make_result(std::move(out), {a}, "transpose", [](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad) detail::as_matrix(p.grad) += detail::as_matrix(std::as_const(self.grad)).transpose();
    });
}

inline Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a.value().size())
        throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    return detail::make_result(a.value().reshaped(std::move(shape)), {a}, "reshape",
                               [](Node& self) { detail::accumulate(*self.parents[0], self.grad); });
}

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return detail::make_result(Array::scalar(s), {a}, "sum", [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0];
        for (double& v : p.grad.values()) v += g;
    });
}

/// Squared Frobenius norm, a scalar.
inline Var frobenius_sq(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v * v;
    return detail::make_result(Array::scalar(s), {a}, "frobenius_sq", [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = 2.0 * self.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g * p.value[i];
    });
}

/// Propagates d(root)/d(node) into every reachable node that requires a gradient.
/// Leaf gradients accumulate across calls; callers zero them between steps.
inline void backward(const Var& root) {
    if (root.value().size() != 1)
        throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn) n.backward_fn(n);
    }
}

}  // namespace redsc::ad
