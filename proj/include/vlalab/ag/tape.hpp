#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "vlalab/ag/tensor.hpp"

namespace vlalab::ag {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
    const Shape& shape() const;
    int rows() const { return rows_of(shape()); }
    int cols() const { return cols_of(shape()); }
    const std::vector<T>& val() const;
};

// Reverse-mode tape. Values are computed eagerly as ops are recorded; the
// record order is a topological order, so backward() is a single reverse
// sweep that visits each node exactly once.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    struct Node {
        Shape shape;
        std::shared_ptr<std::vector<T>> val;
        std::vector<T> grad;  // allocated on demand during backward
        bool track = false;
        int param = -1;  // parameter-store slot for parameter leaves
        BackwardFn bwd;
    };

    Var<T> constant(Shape shape, std::vector<T> data) {
        if (static_cast<int64_t>(data.size()) != numel(shape))
            throw ShapeError("constant: data length does not match " + shape_str(shape));
        return push(std::move(shape), std::make_shared<std::vector<T>>(std::move(data)), false, {});
    }

    Var<T> scalar(T v) { return constant({}, {v}); }

    Var<T> zeros(Shape shape) {
        auto n = static_cast<size_t>(numel(shape));
        return constant(std::move(shape), std::vector<T>(n, T(0)));
    }

    // Leaf sharing external storage. Gradients accumulate on the tape node;
    // read them back with grad_of() after backward().
    Var<T> leaf(const Tensor<T>& t, int param_id = -1) {
        t.check();
        Var<T> v = push(t.shape, t.data, t.requires_grad, {});
        node(v).param = param_id;
        if (param_id >= 0) param_nodes_.push_back({param_id, v.idx});
        return v;
    }

    Var<T> leaf(Shape shape, std::vector<T> data, bool requires_grad) {
        return leaf(Tensor<T>::from(std::move(shape), std::move(data), requires_grad));
    }

    // Runs the reverse sweep from a scalar loss. May be called more than once
    // on the same tape; gradients accumulate.
    void backward(Var<T> loss) {
        if (loss.tape != this || loss.idx < 0 || loss.idx >= size())
            throw GraphError("backward: loss is not a node of this graph");
        Node& ln = node(loss);
        if (numel(ln.shape) != 1) throw GraphError("backward: loss is not a scalar");
        if (!ln.track) return;  // loss does not depend on any tracked leaf
        grad_buf(loss.idx)[0] += T(1);
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.track && !n.grad.empty() && n.bwd) n.bwd(*this, i);
        }
    }

    const std::vector<T>& val(Var<T> v) const { return *nodes_[v.idx].val; }

    // Gradient of a node; zeros if backward never reached it.
    std::vector<T> grad_of(Var<T> v) const {
        const Node& n = nodes_[v.idx];
        if (n.grad.empty()) return std::vector<T>(static_cast<size_t>(numel(n.shape)), T(0));
        return n.grad;
    }

    const std::vector<std::pair<int, int>>& param_nodes() const { return param_nodes_; }

    int size() const { return static_cast<int>(nodes_.size()); }
    Node& node(Var<T> v) { return nodes_[v.idx]; }
    const Node& node(Var<T> v) const { return nodes_[v.idx]; }
    Node& node_at(int i) { return nodes_[i]; }

    std::vector<T>& grad_buf(int idx) {
        Node& n = nodes_[idx];
        if (n.grad.empty()) n.grad.assign(static_cast<size_t>(numel(n.shape)), T(0));
        return n.grad;
    }

    Var<T> push(Shape shape, std::shared_ptr<std::vector<T>> val, bool track, BackwardFn bwd,
                const char* op_name = nullptr) {
        if (op_name) throw_if_not_finite(*val, op_name);
        Node n;
        n.shape = std::move(shape);
        n.val = std::move(val);
        n.track = track;
        n.bwd = std::move(bwd);
        nodes_.push_back(std::move(n));
        return Var<T>{this, size() - 1};
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::pair<int, int>> param_nodes_;  // (param id, node idx)
};

template <typename T>
const Shape& Var<T>::shape() const {
    return tape->node(*this).shape;
}

template <typename T>
const std::vector<T>& Var<T>::val() const {
    return tape->val(*this);
}

namespace detail {

template <typename T>
std::shared_ptr<std::vector<T>> alloc(size_t n) {
    return std::make_shared<std::vector<T>>(n, T(0));
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
    if (a.tape != b.tape) throw GraphError(std::string(op) + ": operands on different graphs");
}

template <typename T>
bool tracked(Var<T> v) {
    return v.tape->node(v).track;
}

// Adds g into the grad buffer of node `idx` if that node is tracked.
template <typename T, typename F>
void add_grad(Tape<T>& tp, int idx, F&& fill) {
    if (!tp.node_at(idx).track) return;
    fill(tp.grad_buf(idx));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and scalar ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "add");
    Tape<T>& tp = *a.tape;
    if (!same_shape(a.shape(), b.shape()))
        throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    auto out = detail::alloc<T>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] + bv[i];
    int ai = a.idx, bi = b.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a) || detail::tracked(b),
        [ai, bi](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            });
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            });
        },
        "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "sub");
    Tape<T>& tp = *a.tape;
    if (!same_shape(a.shape(), b.shape()))
        throw ShapeError("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    auto out = detail::alloc<T>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] - bv[i];
    int ai = a.idx, bi = b.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a) || detail::tracked(b),
        [ai, bi](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            });
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
            });
        },
        "sub");
}

// Hadamard product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "mul");
    Tape<T>& tp = *a.tape;
    if (!same_shape(a.shape(), b.shape()))
        throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    auto out = detail::alloc<T>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] * bv[i];
    int ai = a.idx, bi = b.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a) || detail::tracked(b),
        [ai, bi](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            const auto& av2 = *t.node_at(ai).val;
            const auto& bv2 = *t.node_at(bi).val;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv2[i];
            });
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av2[i];
            });
        },
        "mul");
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
    Tape<T>& tp = *a.tape;
    const auto& av = tp.val(a);
    auto out = detail::alloc<T>(av.size());
    T cc = static_cast<T>(c);
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] * cc;
    int ai = a.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a),
        [ai, cc](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * cc;
            });
        },
        "scale");
}

template <typename T>
Var<T> add_const(Var<T> a, double c) {
    Tape<T>& tp = *a.tape;
    const auto& av = tp.val(a);
    auto out = detail::alloc<T>(av.size());
    T cc = static_cast<T>(c);
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] + cc;
    int ai = a.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a),
        [ai](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            });
        },
        "add_const");
}

// Broadcast add of a row vector (1 x n) onto every row of a (m x n).
template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> row) {
    detail::require_same_tape(a, row, "add_rowvec");
    Tape<T>& tp = *a.tape;
    int m = a.rows(), n = a.cols();
    if (static_cast<int64_t>(numel(row.shape())) != n)
        throw ShapeError("add_rowvec: row length " + shape_str(row.shape()) + " vs cols " +
                         std::to_string(n));
    const auto& av = tp.val(a);
    const auto& rv = tp.val(row);
    auto out = detail::alloc<T>(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out)[i * n + j] = av[i * n + j] + rv[j];
    int ai = a.idx, ri = row.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a) || detail::tracked(row),
        [ai, ri, m, n](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            });
            detail::add_grad(t, ri, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) d[j] += g[i * n + j];
            });
        },
        "add_rowvec");
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "matmul");
    Tape<T>& tp = *a.tape;
    int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2)
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    auto out = detail::alloc<T>(static_cast<size_t>(m) * n);
    {
        ECMap<T> A(av.data(), m, k), B(bv.data(), k, n);
        EMap<T> C(out->data(), m, n);
        C.noalias() = A * B;
    }
    int ai = a.idx, bi = b.idx;
    return tp.push(
        Shape{m, n}, out, detail::tracked(a) || detail::tracked(b),
        [ai, bi, m, k, n](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            ECMap<T> G(g.data(), m, n);
            const auto& av2 = *t.node_at(ai).val;
            const auto& bv2 = *t.node_at(bi).val;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                EMap<T> D(d.data(), m, k);
                ECMap<T> B(bv2.data(), k, n);
                D.noalias() += G * B.transpose();
            });
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                EMap<T> D(d.data(), k, n);
                ECMap<T> A(av2.data(), m, k);
                D.noalias() += A.transpose() * G;
            });
        },
        "matmul");
}

template <typename T>
Var<T> transpose(Var<T> a) {
    Tape<T>& tp = *a.tape;
    int m = a.rows(), n = a.cols();
    const auto& av = tp.val(a);
    auto out = detail::alloc<T>(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out)[j * m + i] = av[i * n + j];
    int ai = a.idx;
    return tp.push(
        Shape{n, m}, out, detail::tracked(a),
        [ai, m, n](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
            });
        },
        "transpose");
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    Tape<T>& tp = *a.tape;
    if (numel(shape) != numel(a.shape()))
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    int ai = a.idx;
    // shares the value buffer; gradient passes through unchanged
    return tp.push(std::move(shape), tp.node(a).val, detail::tracked(a),
                   [ai](Tape<T>& t, int self) {
                       const auto& g = t.node_at(self).grad;
                       detail::add_grad(t, ai, [&](std::vector<T>& d) {
                           for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                       });
                   });
}

template <typename T>
Var<T> slice_rows(Var<T> a, int r0, int r1) {
    Tape<T>& tp = *a.tape;
    int m = a.rows(), n = a.cols();
    if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows: bad range");
    const auto& av = tp.val(a);
    auto out = detail::alloc<T>(static_cast<size_t>(r1 - r0) * n);
    std::copy(av.begin() + static_cast<size_t>(r0) * n, av.begin() + static_cast<size_t>(r1) * n,
              out->begin());
    int ai = a.idx;
    return tp.push(
        Shape{r1 - r0, n}, out, detail::tracked(a),
        [ai, r0, n](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) d[static_cast<size_t>(r0) * n + i] += g[i];
            });
        },
        "slice_rows");
}

template <typename T>
Var<T> slice_cols(Var<T> a, int c0, int c1) {
    Tape<T>& tp = *a.tape;
    int m = a.rows(), n = a.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const auto& av = tp.val(a);
    int w = c1 - c0;
    auto out = detail::alloc<T>(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) (*out)[i * w + j] = av[i * n + c0 + j];
    int ai = a.idx;
    return tp.push(
        Shape{m, w}, out, detail::tracked(a),
        [ai, c0, n, w, m](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j) d[i * n + c0 + j] += g[i * w + j];
            });
        },
        "slice_cols");
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Tape<T>& tp = *parts[0].tape;
    int n = parts[0].cols();
    int total = 0;
    bool track = false;
    for (Var<T> p : parts) {
        detail::require_same_tape(parts[0], p, "concat_rows");
        if (p.cols() != n) throw ShapeError("concat_rows: column mismatch");
        total += p.rows();
        track = track || detail::tracked(p);
    }
    auto out = detail::alloc<T>(static_cast<size_t>(total) * n);
    size_t off = 0;
    std::vector<int> idxs;
    std::vector<int> row_offsets;
    for (Var<T> p : parts) {
        const auto& pv = tp.val(p);
        std::copy(pv.begin(), pv.end(), out->begin() + off);
        idxs.push_back(p.idx);
        row_offsets.push_back(static_cast<int>(off));
        off += pv.size();
    }
    return tp.push(
        Shape{total, n}, out, track,
        [idxs, row_offsets](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            for (size_t p = 0; p < idxs.size(); ++p) {
                size_t len = t.node_at(idxs[p]).val->size();
                size_t off2 = static_cast<size_t>(row_offsets[p]);
                detail::add_grad(t, idxs[p], [&](std::vector<T>& d) {
                    for (size_t i = 0; i < len; ++i) d[i] += g[off2 + i];
                });
            }
        },
        "concat_rows");
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Tape<T>& tp = *parts[0].tape;
    int m = parts[0].rows();
    int total = 0;
    bool track = false;
    for (Var<T> p : parts) {
        detail::require_same_tape(parts[0], p, "concat_cols");
        if (p.rows() != m) throw ShapeError("concat_cols: row mismatch");
        total += p.cols();
        track = track || detail::tracked(p);
    }
    auto out = detail::alloc<T>(static_cast<size_t>(m) * total);
    std::vector<int> idxs, col_offsets, widths;
    int coff = 0;
    for (Var<T> p : parts) {
        const auto& pv = tp.val(p);
        int w = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) (*out)[i * total + coff + j] = pv[i * w + j];
        idxs.push_back(p.idx);
        col_offsets.push_back(coff);
        widths.push_back(w);
        coff += w;
    }
    return tp.push(
        Shape{m, total}, out, track,
        [idxs, col_offsets, widths, m, total](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            for (size_t p = 0; p < idxs.size(); ++p) {
                int w = widths[p], c0 = col_offsets[p];
                detail::add_grad(t, idxs[p], [&](std::vector<T>& d) {
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j) d[i * w + j] += g[i * total + c0 + j];
                });
            }
        },
        "concat_cols");
}

// ---------------------------------------------------------------------------
// nonlinearities and normalization
// ---------------------------------------------------------------------------

// Exact GeLU: 0.5 x (1 + erf(x / sqrt(2))).
template <typename T>
Var<T> gelu(Var<T> a) {
    Tape<T>& tp = *a.tape;
    const auto& av = tp.val(a);
    auto out = detail::alloc<T>(av.size());
    const double inv_sqrt2 = 0.70710678118654752440;
    for (size_t i = 0; i < av.size(); ++i) {
        double x = static_cast<double>(av[i]);
        (*out)[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    int ai = a.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a),
        [ai](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            const auto& av2 = *t.node_at(ai).val;
            const double inv_sqrt2b = 0.70710678118654752440;
            const double inv_sqrt2pi = 0.39894228040143267794;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < g.size(); ++i) {
                    double x = static_cast<double>(av2[i]);
                    double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2b));
                    double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                    d[i] += g[i] * static_cast<T>(cdf + x * pdf);
                }
            });
        },
        "gelu");
}

// Row-wise softmax with an optional additive mask (same shape as a, not a
// graph node). Large negative mask entries zero out positions exactly.
template <typename T>
Var<T> softmax_rows(Var<T> a, const std::vector<T>* mask = nullptr) {
    Tape<T>& tp = *a.tape;
    int m = a.rows(), n = a.cols();
    const auto& av = tp.val(a);
    if (mask && static_cast<int64_t>(mask->size()) != static_cast<int64_t>(av.size()))
        throw ShapeError("softmax_rows: mask size mismatch");
    auto out = detail::alloc<T>(av.size());
    for (int i = 0; i < m; ++i) {
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
            double z = static_cast<double>(av[i * n + j]);
            if (mask) z += static_cast<double>((*mask)[i * n + j]);
            if (z > mx) mx = z;
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            double z = static_cast<double>(av[i * n + j]);
            if (mask) z += static_cast<double>((*mask)[i * n + j]);
            double e = std::exp(z - mx);
            (*out)[i * n + j] = static_cast<T>(e);
            sum += e;
        }
        for (int j = 0; j < n; ++j)
            (*out)[i * n + j] = static_cast<T>(static_cast<double>((*out)[i * n + j]) / sum);
    }
    int ai = a.idx;
    return tp.push(
        a.shape(), out, detail::tracked(a),
        [ai, m, n](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            const auto& p = *t.node_at(self).val;
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j)
                        dot += static_cast<double>(g[i * n + j]) * static_cast<double>(p[i * n + j]);
                    for (int j = 0; j < n; ++j)
                        d[i * n + j] += static_cast<T>(
                            (static_cast<double>(g[i * n + j]) - dot) *
                            static_cast<double>(p[i * n + j]));
                }
            });
        },
        "softmax_rows");
}

// Row-wise layer normalization with learned gain/bias (each 1 x n).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
    detail::require_same_tape(x, gamma, "layer_norm");
    detail::require_same_tape(x, beta, "layer_norm");
    Tape<T>& tp = *x.tape;
    int m = x.rows(), n = x.cols();
    if (numel(gamma.shape()) != n || numel(beta.shape()) != n)
        throw ShapeError("layer_norm: gain/bias length mismatch");
    const auto& xv = tp.val(x);
    const auto& gv = tp.val(gamma);
    const auto& bv = tp.val(beta);
    auto out = detail::alloc<T>(xv.size());
    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += static_cast<double>(xv[i * n + j]);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double dlt = static_cast<double>(xv[i * n + j]) - mu;
            var += dlt * dlt;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[i] = static_cast<T>(is);
        for (int j = 0; j < n; ++j) {
            double xh = (static_cast<double>(xv[i * n + j]) - mu) * is;
            (*xhat)[i * n + j] = static_cast<T>(xh);
            (*out)[i * n + j] =
                static_cast<T>(xh * static_cast<double>(gv[j]) + static_cast<double>(bv[j]));
        }
    }
    int xi = x.idx, gi = gamma.idx, bi = beta.idx;
    bool track = detail::tracked(x) || detail::tracked(gamma) || detail::tracked(beta);
    return tp.push(
        x.shape(), out, track,
        [xi, gi, bi, m, n, xhat, inv_sigma](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            const auto& gv2 = *t.node_at(gi).val;
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) d[j] += g[i * n + j];
            });
            detail::add_grad(t, gi, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) d[j] += g[i * n + j] * (*xhat)[i * n + j];
            });
            detail::add_grad(t, xi, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i) {
                    double mean_dy = 0.0, mean_dy_xh = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double dy = static_cast<double>(g[i * n + j]) * static_cast<double>(gv2[j]);
                        mean_dy += dy;
                        mean_dy_xh += dy * static_cast<double>((*xhat)[i * n + j]);
                    }
                    mean_dy /= n;
                    mean_dy_xh /= n;
                    double is = static_cast<double>((*inv_sigma)[i]);
                    for (int j = 0; j < n; ++j) {
                        double dy = static_cast<double>(g[i * n + j]) * static_cast<double>(gv2[j]);
                        double xh = static_cast<double>((*xhat)[i * n + j]);
                        d[i * n + j] += static_cast<T>((dy - mean_dy - xh * mean_dy_xh) * is);
                    }
                }
            });
        },
        "layer_norm");
}

// ---------------------------------------------------------------------------
// lookups and reductions
// ---------------------------------------------------------------------------

// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds into the table.
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
    Tape<T>& tp = *table.tape;
    int v = table.rows(), w = table.cols();
    const auto& tv = tp.val(table);
    auto out = detail::alloc<T>(ids.size() * static_cast<size_t>(w));
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v)
            throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range [0," +
                             std::to_string(v) + ")");
        std::copy(tv.begin() + static_cast<size_t>(ids[i]) * w,
                  tv.begin() + static_cast<size_t>(ids[i] + 1) * w, out->begin() + i * w);
    }
    int ti = table.idx;
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return tp.push(
        Shape{static_cast<int>(ids.size()), w}, out, detail::tracked(table),
        [ti, w, ids_copy](Tape<T>& t, int self) {
            const auto& g = t.node_at(self).grad;
            detail::add_grad(t, ti, [&](std::vector<T>& d) {
                for (size_t i = 0; i < ids_copy->size(); ++i) {
                    size_t r = static_cast<size_t>((*ids_copy)[i]);
                    for (int j = 0; j < w; ++j) d[r * w + j] += g[i * w + j];
                }
            });
        },
        "embedding");
}

template <typename T>
Var<T> sum_all(Var<T> a) {
    Tape<T>& tp = *a.tape;
    const auto& av = tp.val(a);
    double s = 0.0;
    for (T x : av) s += static_cast<double>(x);
    auto out = detail::alloc<T>(1);
    (*out)[0] = static_cast<T>(s);
    int ai = a.idx;
    size_t n = av.size();
    return tp.push(
        Shape{}, out, detail::tracked(a),
        [ai, n](Tape<T>& t, int self) {
            T g = t.node_at(self).grad[0];
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < n; ++i) d[i] += g;
            });
        },
        "sum_all");
}

template <typename T>
Var<T> mean_all(Var<T> a) {
    Tape<T>& tp = *a.tape;
    const auto& av = tp.val(a);
    double s = 0.0;
    for (T x : av) s += static_cast<double>(x);
    size_t n = av.size();
    auto out = detail::alloc<T>(1);
    (*out)[0] = static_cast<T>(s / static_cast<double>(n));
    int ai = a.idx;
    return tp.push(
        Shape{}, out, detail::tracked(a),
        [ai, n](Tape<T>& t, int self) {
            T g = static_cast<T>(static_cast<double>(t.node_at(self).grad[0]) /
                                 static_cast<double>(n));
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < n; ++i) d[i] += g;
            });
        },
        "mean_all");
}

// Mean squared error over all entries.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "mse");
    Tape<T>& tp = *a.tape;
    if (!same_shape(a.shape(), b.shape()))
        throw ShapeError("mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    size_t n = av.size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dlt = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        s += dlt * dlt;
    }
    auto out = detail::alloc<T>(1);
    (*out)[0] = static_cast<T>(s / static_cast<double>(n));
    int ai = a.idx, bi = b.idx;
    return tp.push(
        Shape{}, out, detail::tracked(a) || detail::tracked(b),
        [ai, bi, n](Tape<T>& t, int self) {
            double g = static_cast<double>(t.node_at(self).grad[0]);
            const auto& av2 = *t.node_at(ai).val;
            const auto& bv2 = *t.node_at(bi).val;
            double c = 2.0 * g / static_cast<double>(n);
            detail::add_grad(t, ai, [&](std::vector<T>& d) {
                for (size_t i = 0; i < n; ++i)
                    d[i] += static_cast<T>(c * (static_cast<double>(av2[i]) -
                                                static_cast<double>(bv2[i])));
            });
            detail::add_grad(t, bi, [&](std::vector<T>& d) {
                for (size_t i = 0; i < n; ++i)
                    d[i] -= static_cast<T>(c * (static_cast<double>(av2[i]) -
                                                static_cast<double>(bv2[i])));
            });
        },
        "mse");
}

// Mean cross-entropy of row-wise logits against integer targets.
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& targets) {
    Tape<T>& tp = *logits.tape;
    int m = logits.rows(), n = logits.cols();
    if (static_cast<int>(targets.size()) != m)
        throw ShapeError("cross_entropy: target count " + std::to_string(targets.size()) +
                         " vs rows " + std::to_string(m));
    const auto& zv = tp.val(logits);
    auto probs = std::make_shared<std::vector<T>>(zv.size());
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        if (targets[i] < 0 || targets[i] >= n) throw ShapeError("cross_entropy: target out of range");
        double mx = -1e300;
        for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(zv[i * n + j]));
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += std::exp(static_cast<double>(zv[i * n + j]) - mx);
        double lse = mx + std::log(sum);
        loss += lse - static_cast<double>(zv[i * n + targets[i]]);
        for (int j = 0; j < n; ++j)
            (*probs)[i * n + j] =
                static_cast<T>(std::exp(static_cast<double>(zv[i * n + j]) - lse));
    }
    auto out = detail::alloc<T>(1);
    (*out)[0] = static_cast<T>(loss / m);
    int li = logits.idx;
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return tp.push(
        Shape{}, out, detail::tracked(logits),
        [li, m, n, probs, tgt](Tape<T>& t, int self) {
            double g = static_cast<double>(t.node_at(self).grad[0]) / m;
            detail::add_grad(t, li, [&](std::vector<T>& d) {
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j)
                        d[i * n + j] += static_cast<T>(g * static_cast<double>((*probs)[i * n + j]));
                    d[i * n + (*tgt)[i]] -= static_cast<T>(g);
                }
            });
        },
        "cross_entropy");
}

}  // namespace vlalab::ag
