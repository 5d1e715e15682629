#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vlalab/ag/params.hpp"
#include "vlalab/ag/tape.hpp"

namespace vlalab::ag {

// Parameter registration helpers. Naming convention: "<prefix>.<piece>".
// Attention projections carry no bias; linear layers do unless noted.

template <typename T>
void add_linear(ParamStore<T>& ps, const std::string& prefix, int in_w, int out_w,
                bool bias = true) {
    ps.add(prefix + ".w", {in_w, out_w}, Init::trunc_normal);
    if (bias) ps.add(prefix + ".b", {1, out_w}, Init::zero);
}

template <typename T>
void add_ln(ParamStore<T>& ps, const std::string& prefix, int w) {
    ps.add(prefix + ".g", {1, w}, Init::one);
    ps.add(prefix + ".b", {1, w}, Init::zero);
}

template <typename T>
void add_mha(ParamStore<T>& ps, const std::string& prefix, int q_in_w, int kv_in_w, int w) {
    ps.add(prefix + ".wq", {q_in_w, w}, Init::trunc_normal);
    ps.add(prefix + ".wk", {kv_in_w, w}, Init::trunc_normal);
    ps.add(prefix + ".wv", {kv_in_w, w}, Init::trunc_normal);
    ps.add(prefix + ".wo", {w, w}, Init::trunc_normal);
}

template <typename T>
void add_mlp(ParamStore<T>& ps, const std::string& prefix, int w, int hidden) {
    add_linear(ps, prefix + ".fc1", w, hidden);
    add_linear(ps, prefix + ".fc2", hidden, w);
}

// Self-attention encoder block, pre-LN: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <typename T>
void add_encoder_block(ParamStore<T>& ps, const std::string& prefix, int w, int hidden) {
    add_ln(ps, prefix + ".ln1", w);
    add_mha(ps, prefix + ".attn", w, w, w);
    add_ln(ps, prefix + ".ln2", w);
    add_mlp(ps, prefix + ".mlp", w, hidden);
}

// Encoder block with an extra cross-attention read of a conditioning sequence.
template <typename T>
void add_cross_block(ParamStore<T>& ps, const std::string& prefix, int w, int kv_w, int hidden) {
    add_ln(ps, prefix + ".ln1", w);
    add_mha(ps, prefix + ".attn", w, w, w);
    add_ln(ps, prefix + ".lnx", w);
    add_ln(ps, prefix + ".lnkv", kv_w);
    add_mha(ps, prefix + ".xattn", w, kv_w, w);
    add_ln(ps, prefix + ".ln2", w);
    add_mlp(ps, prefix + ".mlp", w, hidden);
}

// ---------------------------------------------------------------------------
// application
// ---------------------------------------------------------------------------

template <typename T>
Var<T> linear(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> x) {
    Var<T> y = matmul(x, ps.use(tape, prefix + ".w"));
    if (ps.has(prefix + ".b")) y = add_rowvec(y, ps.use(tape, prefix + ".b"));
    return y;
}

template <typename T>
Var<T> apply_ln(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> x) {
    return layer_norm(x, ps.use(tape, prefix + ".g"), ps.use(tape, prefix + ".b"));
}

// Multi-head scaled-dot-product attention. `mask`, when given, is an additive
// (rows(q) x rows(kv)) matrix applied to every head's scores.
template <typename T>
Var<T> mha(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> q_in,
           Var<T> kv_in, int heads, const std::vector<T>* mask = nullptr) {
    Var<T> q = matmul(q_in, ps.use(tape, prefix + ".wq"));
    Var<T> k = matmul(kv_in, ps.use(tape, prefix + ".wk"));
    Var<T> v = matmul(kv_in, ps.use(tape, prefix + ".wv"));
    int w = q.cols();
    if (w % heads != 0) throw ShapeError("mha: width not divisible by head count");
    int dh = w / heads;
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var<T>> ctx;
    ctx.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Var<T> qh = slice_cols(q, h * dh, (h + 1) * dh);
        Var<T> kh = slice_cols(k, h * dh, (h + 1) * dh);
        Var<T> vh = slice_cols(v, h * dh, (h + 1) * dh);
        Var<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        Var<T> p = softmax_rows(scores, mask);
        ctx.push_back(matmul(p, vh));
    }
    Var<T> merged = heads == 1 ? ctx[0] : concat_cols(ctx);
    return matmul(merged, ps.use(tape, prefix + ".wo"));
}

template <typename T>
Var<T> mlp(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> x) {
    return linear(tape, ps, prefix + ".fc2", gelu(linear(tape, ps, prefix + ".fc1", x)));
}

template <typename T>
Var<T> encoder_block(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> x,
                     int heads, const std::vector<T>* self_mask = nullptr) {
    Var<T> h = apply_ln(tape, ps, prefix + ".ln1", x);
    x = add(x, mha(tape, ps, prefix + ".attn", h, h, heads, self_mask));
    x = add(x, mlp(tape, ps, prefix + ".mlp", apply_ln(tape, ps, prefix + ".ln2", x)));
    return x;
}

template <typename T>
Var<T> cross_block(Tape<T>& tape, const ParamStore<T>& ps, const std::string& prefix, Var<T> x,
                   Var<T> cond, int heads, const std::vector<T>* self_mask = nullptr) {
    Var<T> h = apply_ln(tape, ps, prefix + ".ln1", x);
    x = add(x, mha(tape, ps, prefix + ".attn", h, h, heads, self_mask));
    Var<T> q = apply_ln(tape, ps, prefix + ".lnx", x);
    Var<T> kv = apply_ln(tape, ps, prefix + ".lnkv", cond);
    x = add(x, mha(tape, ps, prefix + ".xattn", q, kv, heads));
    x = add(x, mlp(tape, ps, prefix + ".mlp", apply_ln(tape, ps, prefix + ".ln2", x)));
    return x;
}

// ---------------------------------------------------------------------------
// misc
// ---------------------------------------------------------------------------

// Sinusoidal features for a scalar position in [0, 1].
template <typename T>
std::vector<T> sinusoidal_features(double t, int width) {
    std::vector<T> out(static_cast<size_t>(width));
    int half = width / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out[i] = static_cast<T>(std::sin(t * 1000.0 * freq));
        out[half + i] = static_cast<T>(std::cos(t * 1000.0 * freq));
    }
    if (width % 2 == 1) out[static_cast<size_t>(width) - 1] = T(0);
    return out;
}

// Additive attention masks. Entries are 0 (allowed) or -1e30 (blocked).
template <typename T>
std::vector<T> causal_mask(int n) {
    std::vector<T> m(static_cast<size_t>(n) * n, T(0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m[i * n + j] = static_cast<T>(-1e30);
    return m;
}

// Prefix sequence of length `np` is bidirectional among itself; the `nd`
// decoder positions attend to the prefix and causally to one another; the
// prefix does not attend to decoder positions.
template <typename T>
std::vector<T> prefix_lm_mask(int np, int nd) {
    int n = np + nd;
    std::vector<T> m(static_cast<size_t>(n) * n, T(0));
    const T blocked = static_cast<T>(-1e30);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            bool ok;
            if (i < np)
                ok = j < np;  // prefix sees only prefix
            else
                ok = j < np || j <= i;  // decoder sees prefix and its past
            if (!ok) m[i * n + j] = blocked;
        }
    return m;
}

}  // namespace vlalab::ag
