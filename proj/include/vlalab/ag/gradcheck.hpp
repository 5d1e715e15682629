#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "vlalab/ag/tape.hpp"
#include "vlalab/core/rng.hpp"

namespace vlalab::ag {

// A scalar function of several tensors, built on a caller-supplied tape so the
// same construction serves both evaluation and backward.
template <typename T>
using ScalarFn = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

struct GradCheckOptions {
    // Check at most this many coordinates per input (0 = all), chosen from a
    // seeded stream so runs are repeatable.
    int max_coords_per_input = 0;
    uint64_t coord_seed = 0;
};

// Compares reverse-mode gradients against central finite differences.
// Returns max over checked coordinates of |analytic - numeric| / (|numeric| + 1e-8).
template <typename T>
double grad_check(const ScalarFn<T>& fn, const std::vector<Tensor<T>>& point, double epsilon,
                  GradCheckOptions opt = {}) {
    if (epsilon <= 0) throw std::invalid_argument("grad_check: epsilon must be positive");

    auto eval = [&](const std::vector<Tensor<T>>& at) {
        Tape<T> tape;
        std::vector<Var<T>> leaves;
        leaves.reserve(at.size());
        for (const auto& t : at) leaves.push_back(tape.leaf(t));
        Var<T> out = fn(tape, leaves);
        if (numel(out.shape()) != 1) throw GraphError("grad_check: fn output is not scalar");
        return static_cast<double>(tape.val(out)[0]);
    };

    // analytic gradients
    std::vector<std::vector<T>> analytic;
    {
        Tape<T> tape;
        std::vector<Var<T>> leaves;
        std::vector<Tensor<T>> tracked;
        for (const auto& t : point) {
            Tensor<T> c = t;
            c.requires_grad = true;
            tracked.push_back(c);
        }
        for (const auto& t : tracked) leaves.push_back(tape.leaf(t));
        Var<T> out = fn(tape, leaves);
        if (numel(out.shape()) != 1) throw GraphError("grad_check: fn output is not scalar");
        tape.backward(out);
        for (const auto& leaf : leaves) analytic.push_back(tape.grad_of(leaf));
    }

    // working copy for perturbed evaluations (deep copy of buffers)
    std::vector<Tensor<T>> work;
    for (const auto& t : point) {
        Tensor<T> c = t;
        c.data = std::make_shared<std::vector<T>>(*t.data);
        c.requires_grad = false;
        work.push_back(c);
    }

    double worst = 0.0;
    Rng coord_rng(derive_seed(opt.coord_seed, "grad_check.coords"));
    for (size_t k = 0; k < point.size(); ++k) {
        size_t n = point[k].data->size();
        std::vector<size_t> coords;
        if (opt.max_coords_per_input > 0 && n > static_cast<size_t>(opt.max_coords_per_input)) {
            for (int c = 0; c < opt.max_coords_per_input; ++c)
                coords.push_back(coord_rng.below(n));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        } else {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        }
        for (size_t i : coords) {
            T saved = (*work[k].data)[i];
            (*work[k].data)[i] = static_cast<T>(static_cast<double>(saved) + epsilon);
            double up = eval(work);
            (*work[k].data)[i] = static_cast<T>(static_cast<double>(saved) - epsilon);
            double down = eval(work);
            (*work[k].data)[i] = saved;
            double numeric = (up - down) / (2.0 * epsilon);
            double a = static_cast<double>(analytic[k][i]);
            double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace vlalab::ag
