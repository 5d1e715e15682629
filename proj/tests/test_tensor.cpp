#include <cmath>

#include "doctest.h"
#include "vlalab/ag/gradcheck.hpp"
#include "vlalab/ag/nn.hpp"
#include "vlalab/ag/optim.hpp"
#include "vlalab/ag/params.hpp"
#include "vlalab/ag/tape.hpp"
#include "vlalab/core/checkpoint.hpp"
#include "vlalab/core/rng.hpp"

using namespace vlalab;
using namespace vlalab::ag;

namespace {

Tensor<double> rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    auto t = Tensor<double>::zeros(shape);
    for (auto& x : t.values()) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("forward: identity graph returns input unchanged") {
    Tape<double> tape;
    Var<double> x = tape.leaf({2, 2}, {1.0, 2.0, 3.0, 4.0}, false);
    CHECK(tape.val(x) == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("forward: softmax of zeros is uniform") {
    Tape<double> tape;
    Var<double> x = tape.leaf({1, 4}, {0.0, 0.0, 0.0, 0.0}, false);
    Var<double> p = softmax_rows(x);
    for (double v : tape.val(p)) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("forward: identity matmul") {
    Tape<double> tape;
    Var<double> eye = tape.leaf({2, 2}, {1.0, 0.0, 0.0, 1.0}, false);
    Var<double> a = tape.leaf({2, 2}, {3.0, -1.0, 2.5, 7.0}, false);
    Var<double> c = matmul(eye, a);
    CHECK(tape.val(c) == tape.val(a));
}

TEST_CASE("forward: non-finite results are rejected") {
    Tape<double> tape;
    Var<double> x = tape.leaf({1, 2}, {1e308, 1e308}, false);
    CHECK_THROWS_AS(mul(x, x), NonFiniteError);
}

TEST_CASE("forward: shape mismatch is rejected") {
    Tape<double> tape;
    Var<double> a = tape.leaf({2, 2}, {1, 2, 3, 4}, false);
    Var<double> b = tape.leaf({1, 2}, {1, 2}, false);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(matmul(b, b), ShapeError);
}

TEST_CASE("backward: linear scaling") {
    Tape<double> tape;
    Var<double> x = tape.leaf({}, {2.0}, true);
    Var<double> loss = scale(x, 3.0);
    tape.backward(loss);
    CHECK(tape.grad_of(x)[0] == doctest::Approx(3.0));
}

TEST_CASE("backward: constant loss gives zero gradient") {
    Tape<double> tape;
    Var<double> x = tape.leaf({}, {2.0}, true);
    Var<double> c = tape.scalar(5.0);
    // loss does not depend on x
    tape.backward(c);
    CHECK(tape.grad_of(x)[0] == 0.0);
}

TEST_CASE("backward: loss must be scalar and on the same graph") {
    Tape<double> tape;
    Var<double> x = tape.leaf({1, 2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(tape.backward(x), GraphError);
    Tape<double> other;
    Var<double> y = other.leaf({}, {1.0}, true);
    CHECK_THROWS_AS(tape.backward(y), GraphError);
}

TEST_CASE("backward: small MLP MSE matches central differences") {
    Rng rng(11);
    // two-layer perceptron: loss = mse(w2 * gelu(w1 * x + b1) + b2, y)
    auto w1 = rand_tensor({3, 4}, rng);
    auto b1 = rand_tensor({1, 4}, rng, -0.1, 0.1);
    auto w2 = rand_tensor({4, 2}, rng);
    auto b2 = rand_tensor({1, 2}, rng, -0.1, 0.1);
    auto x = rand_tensor({2, 3}, rng);
    auto y = rand_tensor({2, 2}, rng);
    ScalarFn<double> fn = [&](Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> h = gelu(add_rowvec(matmul(in[4], in[0]), in[1]));
        Var<double> out = add_rowvec(matmul(h, in[2]), in[3]);
        return mse(out, in[5]);
    };
    double err = grad_check<double>(fn, {w1, b1, w2, b2, x, y}, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check: sum of squares at (1,2,3)") {
    auto p = Tensor<double>::from({1, 3}, {1.0, 2.0, 3.0});
    ScalarFn<double> fn = [](Tape<double>& t, const std::vector<Var<double>>& in) {
        return sum_all(mul(in[0], in[0]));
    };
    CHECK(grad_check<double>(fn, {p}, 1e-5) < 1e-7);
}

TEST_CASE("grad_check: constant function has zero error") {
    auto p = Tensor<double>::from({1, 3}, {1.0, 2.0, 3.0});
    ScalarFn<double> fn = [](Tape<double>& t, const std::vector<Var<double>>& in) {
        (void)in;
        return t.scalar(7.0);
    };
    CHECK(grad_check<double>(fn, {p}, 1e-5) == 0.0);
}

TEST_CASE("grad_check: softmax + cross-entropy on random logits") {
    Rng rng(3);
    auto logits = rand_tensor({5, 7}, rng, -2.0, 2.0);
    std::vector<int> targets = {0, 3, 6, 2, 5};
    ScalarFn<double> fn = [&](Tape<double>& t, const std::vector<Var<double>>& in) {
        return cross_entropy(in[0], targets);
    };
    CHECK(grad_check<double>(fn, {logits}, 1e-5) < 1e-5);
}

TEST_CASE("per-op gradients pass grad_check over random seeds") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(derive_seed(seed, "op_gradcheck"));
        auto a = rand_tensor({3, 4}, rng);
        auto b = rand_tensor({3, 4}, rng);
        auto m = rand_tensor({4, 3}, rng);
        auto g = rand_tensor({1, 4}, rng, 0.5, 1.5);
        auto bias = rand_tensor({1, 4}, rng, -0.5, 0.5);
        auto table = rand_tensor({5, 4}, rng);
        std::vector<int> ids = {1, 4, 0, 2};
        std::vector<int> targets = {2, 0, 3};

        using F = ScalarFn<double>;
        std::vector<F> fns = {
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(mul(add(in[0], in[1]), in[0]));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return mean_all(matmul(in[0], in[2]));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(gelu(in[0]));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(mul(softmax_rows(in[0]), in[1]));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return mean_all(layer_norm(in[0], in[3], in[4]));
            },
            [&](Tape<double>& t, const std::vector<Var<double>>& in) {
                Var<double> e = embedding(in[5], ids);
                return sum_all(mul(e, gelu(e)));
            },
            [&](Tape<double>& t, const std::vector<Var<double>>& in) {
                return cross_entropy(slice_rows(in[0], 0, 3), targets);
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return mse(in[0], in[1]);
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(mul(transpose(in[0]), transpose(in[1])));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(concat_rows<double>({in[0], in[1]}));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(mul(concat_cols<double>({slice_cols(in[0], 0, 2), slice_cols(in[1], 2, 4)}),
                                   in[0]));
            },
            [](Tape<double>& t, const std::vector<Var<double>>& in) {
                return sum_all(add_rowvec(in[0], in[4]));
            },
        };
        for (auto& fn : fns) {
            double err = grad_check<double>(fn, {a, b, m, g, bias, table}, 1e-5);
            CHECK_MESSAGE(err < 1e-4, "seed ", seed);
        }
    }
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(7);
    auto w = rand_tensor({3, 3}, rng);
    auto x = rand_tensor({2, 3}, rng);
    double a = 1.3, b = -0.7;

    auto grads_for = [&](double ca, double cb) {
        Tape<double> tape;
        Tensor<double> wt = w;
        wt.requires_grad = true;
        Var<double> wv = tape.leaf(wt);
        Var<double> xv = tape.leaf(x);
        Var<double> y = matmul(xv, wv);
        Var<double> l1 = mean_all(mul(y, y));
        Var<double> l2 = sum_all(gelu(y));
        Var<double> loss = add(scale(l1, ca), scale(l2, cb));
        tape.backward(loss);
        return tape.grad_of(wv);
    };

    auto g_combined = grads_for(a, b);
    auto g1 = grads_for(1.0, 0.0);
    auto g2 = grads_for(0.0, 1.0);
    for (size_t i = 0; i < g_combined.size(); ++i)
        CHECK(std::abs(g_combined[i] - (a * g1[i] + b * g2[i])) < 1e-10);
}

TEST_CASE("same seed gives bit-identical forward and backward") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        auto w = rand_tensor({4, 4}, rng);
        w.requires_grad = true;
        auto x = rand_tensor({3, 4}, rng);
        Tape<double> tape;
        Var<double> wv = tape.leaf(w);
        Var<double> xv = tape.leaf(x);
        Var<double> y = gelu(matmul(xv, wv));
        Var<double> loss = mean_all(mul(y, y));
        tape.backward(loss);
        auto out = tape.val(loss);
        auto g = tape.grad_of(wv);
        out.insert(out.end(), g.begin(), g.end());
        return out;
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("lr_schedule: warmup end, final step, half decay") {
    // warmup end reaches the configured peak
    CHECK(lr_schedule(500, 2000, 500, 1e-4) == doctest::Approx(1e-4).epsilon(1e-12));
    // cosine reaches zero at the last step
    CHECK(lr_schedule(2000, 2000, 500, 1e-4) == doctest::Approx(0.0).epsilon(1e-15));
    // halfway through decay: cos(pi/2) = 0 -> peak / 2
    CHECK(lr_schedule(500 + 750, 2000, 500, 1e-4) == doctest::Approx(0.5e-4).epsilon(1e-12));
    CHECK_THROWS_AS(lr_schedule(-1, 2000, 500, 1e-4), std::out_of_range);
    CHECK_THROWS_AS(lr_schedule(2001, 2000, 500, 1e-4), std::out_of_range);
}

TEST_CASE("clip_global_norm: below threshold unchanged, above scaled, idempotent") {
    ParamStore<double> ps;
    ps.add("w", {1, 2}, Init::zero);
    GradBuffer<double> g(ps);

    g.grads[0] = {0.3, 0.4};  // norm 0.5
    clip_global_norm(g, 1.0);
    CHECK(g.grads[0][0] == doctest::Approx(0.3));
    CHECK(g.grads[0][1] == doctest::Approx(0.4));

    g.grads[0] = {3.0, 4.0};  // norm 5
    clip_global_norm(g, 1.0);
    CHECK(g.grads[0][0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(g.grads[0][1] == doctest::Approx(0.8).epsilon(1e-12));

    // idempotent: a second clip leaves the values alone
    auto before = g.grads[0];
    clip_global_norm(g, 1.0);
    CHECK(g.grads[0] == before);

    // random gradients end up with norm <= 1 + 1e-9
    Rng rng(5);
    for (auto& x : g.grads[0]) x = rng.uniform(-10.0, 10.0);
    clip_global_norm(g, 1.0);
    double sq = 0;
    for (auto x : g.grads[0]) sq += x * x;
    CHECK(std::sqrt(sq) <= 1.0 + 1e-9);
}

TEST_CASE("adamw: zero gradient and zero weight decay leave params unchanged") {
    ParamStore<double> ps(1);
    ps.add("w", {2, 2}, Init::trunc_normal);
    auto before = ps.tensor("w").values();
    GradBuffer<double> g(ps);
    AdamWState<double> st(ps);
    st.weight_decay = 0.0;
    adamw_step(ps, g, st);
    CHECK(ps.tensor("w").values() == before);
    CHECK(st.step == 1);
}

TEST_CASE("adamw: positive gradient decreases a scalar parameter") {
    ParamStore<double> ps;
    ps.add("w", {}, Init::zero);
    ps.tensor("w").values()[0] = 1.0;
    GradBuffer<double> g(ps);
    g.grads[0][0] = 0.5;
    AdamWState<double> st(ps);
    st.weight_decay = 0.0;
    adamw_step(ps, g, st);
    CHECK(ps.tensor("w").values()[0] < 1.0);
}

TEST_CASE("adamw: 100 steps on a quadratic bowl reduce the loss") {
    ParamStore<double> ps;
    ps.add("w", {1, 3}, Init::zero);
    auto& w = ps.tensor("w").values();
    w = {2.0, -3.0, 1.5};
    auto loss_of = [&]() {
        double s = 0;
        for (double x : w) s += x * x;
        return s;
    };
    double start = loss_of();
    AdamWState<double> st(ps);
    st.lr = 0.05;
    st.weight_decay = 0.0;
    GradBuffer<double> g(ps);
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 3; ++j) g.grads[0][j] = 2.0 * w[j];
        adamw_step(ps, g, st);
    }
    CHECK(loss_of() < start);
    CHECK(st.step == 100);
}

TEST_CASE("parameter init is keyed by name, not creation order") {
    ParamStore<double> a(99);
    a.add("x", {2, 2}, Init::trunc_normal);
    a.add("y", {2, 2}, Init::trunc_normal);

    ParamStore<double> b(99);
    b.add("extra", {4, 4}, Init::trunc_normal);
    b.add("y", {2, 2}, Init::trunc_normal);
    b.add("x", {2, 2}, Init::trunc_normal);

    CHECK(a.tensor("x").values() == b.tensor("x").values());
    CHECK(a.tensor("y").values() == b.tensor("y").values());
}

TEST_CASE("truncated normal init stays within two standard deviations") {
    ParamStore<double> ps(123);
    ps.add("w", {40, 40}, Init::trunc_normal);
    for (double x : ps.tensor("w").values()) CHECK(std::abs(x) <= 2.0 * 0.02 + 1e-12);
}

TEST_CASE("checkpoint: byte-exact round trip") {
    Checkpoint ck;
    Rng rng(17);
    std::vector<float> d1(12), d2(5);
    for (auto& x : d1) x = static_cast<float>(rng.normal());
    for (auto& x : d2) x = static_cast<float>(rng.normal());
    ck.add("trunk.layer0.w", {3, 4}, d1);
    ck.add("norm.min", {5}, d2);

    auto bytes = ck.serialize();
    Checkpoint back = Checkpoint::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    REQUIRE(back.find("trunk.layer0.w") != nullptr);
    CHECK(back.find("trunk.layer0.w")->data == d1);
    CHECK(back.find("trunk.layer0.w")->shape == std::vector<int>{3, 4});
    CHECK(back.find("missing") == nullptr);
}

TEST_CASE("mha and blocks gradcheck at small width") {
    ParamStore<double> ps(2);
    add_encoder_block(ps, "blk", 8, 16);
    Rng rng(4);
    auto x = rand_tensor({5, 8}, rng);

    // collect all block parameters as gradcheck inputs
    std::vector<Tensor<double>> point;
    point.push_back(x);
    for (int i = 0; i < ps.count(); ++i) point.push_back(ps.tensor(i));

    ScalarFn<double> fn = [&](Tape<double>& t, const std::vector<Var<double>>& in) {
        // rebind store tensors to the gradcheck copies
        ParamStore<double> local(2);
        // names must match registration order
        for (int i = 0; i < ps.count(); ++i) {
            local.add(ps.name(i), in[static_cast<size_t>(i) + 1].shape(), Init::zero);
        }
        // use leaves directly: build block manually on the tape
        // (simplest: copy values into a fresh store is not differentiable, so
        // instead we mirror mha/encoder_block wiring with explicit leaves)
        auto id_of = [&](const std::string& n) {
            for (int i = 0; i < ps.count(); ++i)
                if (ps.name(i) == n) return in[static_cast<size_t>(i) + 1];
            throw GraphError("missing " + n);
        };
        Var<double> h = layer_norm(in[0], id_of("blk.ln1.g"), id_of("blk.ln1.b"));
        // attention
        Var<double> q = matmul(h, id_of("blk.attn.wq"));
        Var<double> k = matmul(h, id_of("blk.attn.wk"));
        Var<double> v = matmul(h, id_of("blk.attn.wv"));
        int heads = 2, dh = 4;
        std::vector<Var<double>> ctx;
        for (int hh = 0; hh < heads; ++hh) {
            Var<double> qh = slice_cols(q, hh * dh, (hh + 1) * dh);
            Var<double> kh = slice_cols(k, hh * dh, (hh + 1) * dh);
            Var<double> vh = slice_cols(v, hh * dh, (hh + 1) * dh);
            Var<double> s = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(4.0));
            ctx.push_back(matmul(softmax_rows(s), vh));
        }
        Var<double> attn = matmul(concat_cols(ctx), id_of("blk.attn.wo"));
        Var<double> x1 = add(in[0], attn);
        Var<double> h2 = layer_norm(x1, id_of("blk.ln2.g"), id_of("blk.ln2.b"));
        Var<double> m1 = add_rowvec(matmul(h2, id_of("blk.mlp.fc1.w")), id_of("blk.mlp.fc1.b"));
        Var<double> m2 = add_rowvec(matmul(gelu(m1), id_of("blk.mlp.fc2.w")), id_of("blk.mlp.fc2.b"));
        Var<double> x2 = add(x1, m2);
        return mean_all(mul(x2, x2));
    };
    GradCheckOptions opt;
    opt.max_coords_per_input = 12;
    opt.coord_seed = 9;
    CHECK(grad_check<double>(fn, point, 1e-5, opt) < 1e-4);
}
