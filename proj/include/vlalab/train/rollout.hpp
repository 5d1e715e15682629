#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <thread>

#include "vlalab/model/net.hpp"
#include "vlalab/sim/env.hpp"
#include "vlalab/train/report.hpp"

namespace vlalab::train {

// A policy maps an observation packet to a denormalized action chunk.
using PolicyFn = std::function<action::ActionChunk(const model::ObservationPacket&)>;

struct RolloutOutcome {
    bool success = false;
    int steps = 0;
};

// Chunked execution: predict one chunk, execute all of it open-loop,
// re-observe, repeat until success or the step budget runs out.
inline RolloutOutcome run_rollout(sim::Env env, const PolicyFn& policy,
                                  const model::DesignConfig& cfg,
                                  const std::vector<int>& instruction_ids, int max_steps) {
    model::ObservationAssembler assembler(cfg, instruction_ids);
    RolloutOutcome out;
    if (sim::check_success(env.state, env.task)) {
        out.success = true;
        return out;
    }
    while (out.steps < max_steps) {
        assembler.observe(env);
        action::ActionChunk chunk = policy(assembler.packet());
        for (int i = 0; i < chunk.t && out.steps < max_steps; ++i) {
            std::vector<double> a(chunk.v.begin() + static_cast<size_t>(i) * chunk.dim,
                                  chunk.v.begin() + static_cast<size_t>(i + 1) * chunk.dim);
            sim::step(env.state, a);
            out.steps += 1;
            if (sim::check_success(env.state, env.task)) {
                out.success = true;
                return out;
            }
        }
    }
    return out;
}

// Wraps a trained network as a rollout policy; sampling draws are derived
// from (seed, decision index) so rollouts are reproducible.
template <typename T>
PolicyFn make_policy(const model::Net<T>& net, uint64_t draw_seed) {
    auto decision = std::make_shared<uint64_t>(0);
    return [&net, draw_seed, decision](const model::ObservationPacket& pkt) {
        Rng draw(derive_seed(draw_seed, "decision", (*decision)++));
        return net.act(pkt, draw);
    };
}

// Evaluates a network on a suite: unperturbed trials plus one perturbed set
// per family with tied scene seeds. Trials run concurrently; results
// aggregate in trial order.
template <typename T>
ReportRow evaluate(const model::Net<T>& net, const std::string& row_name, int trials,
                   double magnitude, const model::Vocab& vocab) {
    const auto& cfg = net.config();
    sim::Suite suite = sim::suite_from_name(cfg.suite);
    auto t0 = std::chrono::steady_clock::now();

    ReportRow row;
    row.name = row_name;
    row.suite = cfg.suite;
    row.trials = trials;

    // condition 0 = original, 1..7 = perturbation families
    std::vector<std::vector<uint8_t>> success(8, std::vector<uint8_t>(static_cast<size_t>(trials), 0));

    auto run_trial = [&](int cond, int trial) {
        sim::Env env =
            sim::make_env(suite, derive_seed(cfg.eval_seed, "scene", static_cast<uint64_t>(trial)),
                          cfg.bimanual);
        if (cond > 0) {
            sim::PerturbationSpec spec;
            spec.family = static_cast<sim::PerturbFamily>(cond - 1);
            spec.magnitude = magnitude;
            spec.seed = derive_seed(cfg.eval_seed, "perturb", static_cast<uint64_t>(cond - 1),
                                    static_cast<uint64_t>(trial));
            env = sim::apply_perturbation(env, spec);
        }
        std::vector<int> ids = vocab.tokenize(env.task.instruction);
        // the draw stream depends only on the trial, so tied-seed conditions
        // with identical environments reproduce the original run exactly
        PolicyFn policy = make_policy(net, derive_seed(cfg.eval_seed, "draws",
                                                       static_cast<uint64_t>(trial)));
        auto outcome = run_rollout(env, policy, cfg, ids, cfg.eval_max_steps);
        success[static_cast<size_t>(cond)][static_cast<size_t>(trial)] = outcome.success ? 1 : 0;
    };

    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    int total_jobs = 8 * trials;
    if (hw > 1) {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (unsigned w = 0; w < hw; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    int job = next.fetch_add(1);
                    if (job >= total_jobs) return;
                    run_trial(job / trials, job % trials);
                }
            });
        for (auto& th : pool) th.join();
    } else {
        for (int job = 0; job < total_jobs; ++job) run_trial(job / trials, job % trials);
    }

    auto rate = [&](int cond) {
        int s = 0;
        for (uint8_t v : success[static_cast<size_t>(cond)]) s += v;
        return 100.0 * s / trials;
    };
    row.original = rate(0);
    for (int f = 0; f < 7; ++f) row.family[static_cast<size_t>(f)] = rate(1 + f);
    row.recompute_total();
    auto t1 = std::chrono::steady_clock::now();
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    return row;
}

}  // namespace vlalab::train
