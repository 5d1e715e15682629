#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vlalab/ag/params.hpp"

namespace vlalab::ag {

// Linear warmup from zero to peak, then cosine decay to zero at total_steps.
inline double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps, double peak_lr) {
    if (step < 0 || step > total_steps) throw std::out_of_range("lr_schedule: step out of range");
    if (warmup_steps >= total_steps) throw std::out_of_range("lr_schedule: warmup >= total");
    if (step <= warmup_steps)
        return warmup_steps == 0 ? peak_lr
                                 : peak_lr * static_cast<double>(step) /
                                       static_cast<double>(warmup_steps);
    double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Scales gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(GradBuffer<T>& grads, double max_norm) {
    if (max_norm <= 0) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& g : grads.grads)
        for (T x : g) sq += static_cast<double>(x) * static_cast<double>(x);
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        double s = max_norm / norm;
        for (auto& g : grads.grads)
            for (T& x : g) x = static_cast<T>(static_cast<double>(x) * s);
    }
    return norm;
}

// Decoupled-weight-decay Adam with bias correction.
template <typename T>
struct AdamWState {
    int64_t step = 0;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<std::vector<T>> m, v;

    explicit AdamWState(const ParamStore<T>& ps) {
        m.resize(ps.count());
        v.resize(ps.count());
        for (int i = 0; i < ps.count(); ++i) {
            m[i].assign(static_cast<size_t>(ps.tensor(i).size()), T(0));
            v[i].assign(static_cast<size_t>(ps.tensor(i).size()), T(0));
        }
    }
};

template <typename T>
void adamw_step(ParamStore<T>& params, const GradBuffer<T>& grads, AdamWState<T>& st) {
    if (static_cast<int>(grads.grads.size()) != params.count())
        throw ShapeError("adamw_step: gradient buffer does not match parameter store");
    st.step += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (int p = 0; p < params.count(); ++p) {
        auto& w = params.tensor(p).values();
        const auto& g = grads.grads[p];
        if (g.size() != w.size()) throw ShapeError("adamw_step: shape mismatch for " + params.name(p));
        auto& m = st.m[p];
        auto& v = st.v[p];
        for (size_t i = 0; i < w.size(); ++i) {
            double gi = static_cast<double>(g[i]);
            double mi = st.beta1 * static_cast<double>(m[i]) + (1.0 - st.beta1) * gi;
            double vi = st.beta2 * static_cast<double>(v[i]) + (1.0 - st.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            double upd = mhat / (std::sqrt(vhat) + st.eps) + st.weight_decay * static_cast<double>(w[i]);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - st.lr * upd);
        }
    }
}

}  // namespace vlalab::ag
