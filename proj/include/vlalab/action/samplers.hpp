#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vlalab/core/rng.hpp"

namespace vlalab::action {

// Noise schedule for denoising-diffusion training: alpha_bar[s] is the
// cumulative signal fraction at timestep s, strictly decreasing in s.
struct DiffusionSchedule {
    int train_steps = 0;
    std::vector<double> alpha_bar;

    static DiffusionSchedule cosine(int steps) {
        DiffusionSchedule sch;
        sch.train_steps = steps;
        sch.alpha_bar.resize(static_cast<size_t>(steps));
        const double pi = 3.14159265358979323846;
        const double s = 0.008;
        auto f = [&](double t) {
            double x = (t / steps + s) / (1.0 + s) * pi / 2.0;
            double c = std::cos(x);
            return c * c;
        };
        double f0 = f(0.0);
        for (int i = 0; i < steps; ++i) sch.alpha_bar[static_cast<size_t>(i)] = f(i + 1.0) / f0;
        sch.validate();
        return sch;
    }

    void validate() const {
        if (train_steps < 2 || alpha_bar.size() != static_cast<size_t>(train_steps))
            throw std::invalid_argument("diffusion schedule: bad size");
        double prev = 1.0;
        for (double a : alpha_bar) {
            if (!(a > 0.0 && a < 1.0 && a < prev))
                throw std::invalid_argument("diffusion schedule: alpha_bar must decrease in (0,1)");
            prev = a;
        }
    }
};

// Value-level denoiser: maps (flattened chunk, normalized time in [0,1]) to a
// same-length prediction (velocity for flow, noise for DDIM).
using ValueDenoiser =
    std::function<std::vector<double>(const std::vector<double>&, double)>;

// Euler integration of a velocity field from an explicit start.
inline std::vector<double> flow_sample_from(const ValueDenoiser& velocity,
                                            std::vector<double> x, int steps) {
    if (steps < 1) throw std::invalid_argument("flow_sample: steps must be >= 1");
    double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        double t = static_cast<double>(k) / steps;
        std::vector<double> v = velocity(x, t);
        if (v.size() != x.size()) throw std::invalid_argument("flow_sample: bad denoiser output");
        for (size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
    }
    return x;
}

inline std::vector<double> flow_sample(const ValueDenoiser& velocity, size_t n, int steps,
                                       Rng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    return flow_sample_from(velocity, std::move(x), steps);
}

// The deterministic (eta = 0) sampler subsequence: `steps` timesteps evenly
// spaced from train_steps-1 down to 0, with a terminal virtual step at
// alpha_bar = 1 so the final state is the clean estimate.
inline std::vector<int> ddim_timesteps(const DiffusionSchedule& sch, int steps) {
    std::vector<int> taus(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        taus[static_cast<size_t>(i)] =
            static_cast<int>(std::lround((1.0 - frac) * (sch.train_steps - 1)));
    }
    return taus;
}

inline std::vector<double> ddim_sample_from(const ValueDenoiser& eps_model,
                                            const DiffusionSchedule& sch, std::vector<double> x,
                                            int steps) {
    if (steps < 1) throw std::invalid_argument("ddim_sample: steps must be >= 1");
    sch.validate();
    std::vector<int> taus = ddim_timesteps(sch, steps);
    for (int i = 0; i < steps; ++i) {
        int tau = taus[static_cast<size_t>(i)];
        double ab = sch.alpha_bar[static_cast<size_t>(tau)];
        double ab_next = (i + 1 < steps) ? sch.alpha_bar[static_cast<size_t>(taus[i + 1])] : 1.0;
        double t01 = static_cast<double>(tau) / sch.train_steps;
        std::vector<double> eps = eps_model(x, t01);
        if (eps.size() != x.size())
            throw std::invalid_argument("ddim_sample: bad denoiser output");
        double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        double sa2 = std::sqrt(ab_next), sn2 = std::sqrt(1.0 - ab_next);
        for (size_t j = 0; j < x.size(); ++j) {
            double clean = (x[j] - sn * eps[j]) / sa;
            x[j] = sa2 * clean + sn2 * eps[j];
        }
    }
    return x;
}

inline std::vector<double> ddim_sample(const ValueDenoiser& eps_model,
                                       const DiffusionSchedule& sch, size_t n, int steps,
                                       Rng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    return ddim_sample_from(eps_model, sch, std::move(x), steps);
}

}  // namespace vlalab::action
