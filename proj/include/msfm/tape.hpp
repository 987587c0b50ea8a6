#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msfm/array.hpp"

namespace msfm {

/// Flat 64-bit gradient (or parameter) vector aligned to the canonical
/// parameter ordering of the owning model. The ordering is the registration
/// order of parameter leaves and is stable across calls for a fixed model.
struct GradVector {
    std::vector<double> values;

    GradVector() = default;
    explicit GradVector(std::size_t n) : values(n, 0.0) {}
    explicit GradVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<double> span() { return values; }
    std::span<const double> span() const { return values; }
    bool all_finite() const;
};

double dot(const GradVector& a, const GradVector& b);
double l2_norm(const GradVector& a);

using NodeId = std::int32_t;

/// Recorded computation over dense arrays. Nodes reference only earlier
/// nodes, so the graph is acyclic by construction and a single reverse sweep
/// visits each node exactly once. A tape is single-threaded; disjoint tapes
/// are safe to use from different threads.
class Tape {
public:
    /// param_count fixes the length of gradient vectors produced by backward().
    explicit Tape(int param_count);

    NodeId input(Array value);
    /// Register a parameter leaf backed by params[offset .. offset+len) viewed
    /// with the given shape. Gradients accumulate at the same offsets.
    NodeId param(const GradVector& params, int offset, std::vector<int> shape);

    NodeId add(NodeId a, NodeId b);
    NodeId add_row_vector(NodeId m, NodeId v);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId matmul(NodeId a, NodeId b);
    NodeId tanh(NodeId a);
    NodeId square(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_cols(NodeId a, int c0, int c1);

    const Array& value(NodeId id) const;
    int param_count() const { return param_count_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse sweep from a scalar root. Multiple calls on the same tape with
    /// different roots are independent: adjoints are local to each call, so
    /// per-loss gradients never contaminate each other.
    GradVector backward(NodeId root, double seed = 1.0) const;

private:
    enum class Op : std::uint8_t {
        Input,
        Param,
        Add,
        AddRowVec,
        Sub,
        Mul,
        Scale,
        MatMul,
        Tanh,
        Square,
        Sum,
        Mean,
        ConcatCols,
        SliceCols,
    };

    struct Node {
        Node() = default;
        explicit Node(Op o, NodeId lhs = -1, NodeId rhs = -1) : op(o), a(lhs), b(rhs) {}

        Op op = Op::Input;
        NodeId a = -1;
        NodeId b = -1;
        Array value;
        double factor = 0.0;   // Scale
        int c0 = 0, c1 = 0;    // SliceCols bounds / ConcatCols split
        int param_offset = -1;
    };

    NodeId push(Node node);
    void check(NodeId id) const;

    std::vector<Node> nodes_;
    int param_count_;
};

}  // namespace msfm
