#include "msfm/tape.hpp"

#include <cmath>
#include <string>

namespace msfm {

bool GradVector::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double dot(const GradVector& a, const GradVector& b) { return dot(a.span(), b.span()); }

double l2_norm(const GradVector& a) { return l2_norm(a.span()); }

Tape::Tape(int param_count) : param_count_(param_count) {
    if (param_count < 0) throw ShapeError("negative parameter count");
    nodes_.reserve(64);
}

NodeId Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw ShapeError("tape: unknown node id " + std::to_string(id));
    }
}

NodeId Tape::input(Array value) {
    Node n{Op::Input};
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::param(const GradVector& params, int offset, std::vector<int> shape) {
    std::int64_t len = 1;
    for (int d : shape) len *= d;
    if (offset < 0 || offset + len > static_cast<std::int64_t>(params.size()) ||
        offset + len > param_count_) {
        throw ShapeError("param leaf out of range at offset " + std::to_string(offset));
    }
    std::vector<double> data(params.values.begin() + offset, params.values.begin() + offset + len);
    Node n{Op::Param};
    n.value = Array(std::move(shape), std::move(data));
    n.param_offset = offset;
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n{Op::Add, a, b};
    n.value = msfm::add(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::add_row_vector(NodeId m, NodeId v) {
    check(m);
    check(v);
    Node n{Op::AddRowVec, m, v};
    n.value = msfm::add_row_vector(nodes_[m].value, nodes_[v].value);
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n{Op::Sub, a, b};
    n.value = msfm::sub(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n{Op::Mul, a, b};
    n.value = msfm::mul(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
    check(a);
    Node n{Op::Scale, a};
    n.factor = factor;
    n.value = msfm::scale(nodes_[a].value, factor);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n{Op::MatMul, a, b};
    n.value = msfm::matmul(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
    check(a);
    Node n{Op::Tanh, a};
    n.value = tanh_map(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::square(NodeId a) {
    check(a);
    Node n{Op::Square, a};
    n.value = msfm::square(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    check(a);
    Node n{Op::Sum, a};
    n.value = Array::scalar(msfm::sum(nodes_[a].value));
    return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
    check(a);
    Node n{Op::Mean, a};
    n.value = Array::scalar(msfm::mean(nodes_[a].value));
    return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    check(a);
    check(b);
    Node n{Op::ConcatCols, a, b};
    n.c0 = nodes_[a].value.cols();
    n.value = msfm::concat_cols(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
    check(a);
    Node n{Op::SliceCols, a};
    n.c0 = c0;
    n.c1 = c1;
    n.value = msfm::slice_cols(nodes_[a].value, c0, c1);
    return push(std::move(n));
}

const Array& Tape::value(NodeId id) const {
    check(id);
    return nodes_[id].value;
}

GradVector Tape::backward(NodeId root, double seed) const {
    check(root);
    if (nodes_[root].value.size() != 1) {
        throw ShapeError("backward: root node " + std::to_string(root) + " is not scalar");
    }

    // Adjoints are local to this call; allocated lazily per reached node.
    std::vector<Array> adj(nodes_.size());
    auto reach = [&](NodeId id) -> Array& {
        Array& a = adj[id];
        if (a.size() == 0 && nodes_[id].value.size() != 0) a = Array(nodes_[id].value.shape());
        return a;
    };

    reach(root)[0] = seed;
    GradVector grads(static_cast<std::size_t>(param_count_));

    for (NodeId id = root; id >= 0; --id) {
        const Node& n = nodes_[id];
        const Array& g = adj[id];
        if (g.size() == 0) continue;  // not reached from root

        switch (n.op) {
            case Op::Input:
                break;
            case Op::Param: {
                const double* pg = g.data();
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    grads[static_cast<std::size_t>(n.param_offset + i)] += pg[i];
                }
                break;
            }
            case Op::Add: {
                axpy(1.0, g.values(), reach(n.a).values());
                axpy(1.0, g.values(), reach(n.b).values());
                break;
            }
            case Op::AddRowVec: {
                axpy(1.0, g.values(), reach(n.a).values());
                Array& gv = reach(n.b);
                const int rows = g.rows(), cols = g.cols();
                for (int r = 0; r < rows; ++r) {
                    const double* grow = g.data() + static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) gv[c] += grow[c];
                }
                break;
            }
            case Op::Sub: {
                axpy(1.0, g.values(), reach(n.a).values());
                axpy(-1.0, g.values(), reach(n.b).values());
                break;
            }
            case Op::Mul: {
                Array& ga = reach(n.a);
                Array& gb = reach(n.b);
                const Array& va = nodes_[n.a].value;
                const Array& vb = nodes_[n.b].value;
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * vb[i];
                    gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::Scale: {
                axpy(n.factor, g.values(), reach(n.a).values());
                break;
            }
            case Op::MatMul: {
                matmul_nt_acc(g, nodes_[n.b].value, reach(n.a));
                matmul_tn_acc(nodes_[n.a].value, g, reach(n.b));
                break;
            }
            case Op::Tanh: {
                Array& ga = reach(n.a);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    const double y = n.value[i];
                    ga[i] += g[i] * (1.0 - y * y);
                }
                break;
            }
            case Op::Square: {
                Array& ga = reach(n.a);
                const Array& va = nodes_[n.a].value;
                for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 2.0 * va[i];
                break;
            }
            case Op::Sum: {
                Array& ga = reach(n.a);
                const double gs = g[0];
                for (double& v : ga.values()) v += gs;
                break;
            }
            case Op::Mean: {
                Array& ga = reach(n.a);
                const double gs = g[0] / static_cast<double>(nodes_[n.a].value.size());
                for (double& v : ga.values()) v += gs;
                break;
            }
            case Op::ConcatCols: {
                Array& ga = reach(n.a);
                Array& gb = reach(n.b);
                const int rows = g.rows(), split = n.c0, total = g.cols();
                for (int r = 0; r < rows; ++r) {
                    const double* grow = g.data() + static_cast<std::size_t>(r) * total;
                    double* arow = ga.data() + static_cast<std::size_t>(r) * split;
                    double* brow = gb.data() + static_cast<std::size_t>(r) * (total - split);
                    for (int c = 0; c < split; ++c) arow[c] += grow[c];
                    for (int c = split; c < total; ++c) brow[c - split] += grow[c];
                }
                break;
            }
            case Op::SliceCols: {
                Array& ga = reach(n.a);
                const int rows = g.rows(), w = g.cols(), src_cols = nodes_[n.a].value.cols();
                for (int r = 0; r < rows; ++r) {
                    const double* grow = g.data() + static_cast<std::size_t>(r) * w;
                    double* arow = ga.data() + static_cast<std::size_t>(r) * src_cols + n.c0;
                    for (int c = 0; c < w; ++c) arow[c] += grow[c];
                }
                break;
            }
        }
    }

    return grads;
}

}  // namespace msfm
