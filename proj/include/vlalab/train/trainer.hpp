#pragma once

#include <chrono>
#include <cstdio>
#include <ostream>
#include <thread>
#include <vector>

#include "vlalab/model/net.hpp"
#include "vlalab/sim/dataset.hpp"
#include "vlalab/train/augment.hpp"

namespace vlalab::train {

struct LossRow {
    int64_t step = 0;
    double lr = 0, total = 0, action = 0, freq = 0, world = 0;
};

struct TrainOutcome {
    std::vector<LossRow> log;
    double wall_seconds = 0;
    double mean_step_seconds = 0;
};

inline std::string loss_log_csv(const std::vector<LossRow>& log) {
    std::string out = "step,lr,total,action,frequency,world\n";
    char buf[200];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(r.step), r.lr, r.total, r.action, r.freq, r.world);
        out += buf;
    }
    return out;
}

// One training sample decoded from the dataset.
struct Sample {
    model::ObservationPacket packet;
    action::ActionChunk target_norm;
    std::vector<int> world_tokens;  // empty unless the world head is active
};

// Decodes record `rec`, applying augmentation draws from `aug_rng`.
template <typename T>
Sample make_sample(const model::Net<T>& net, const sim::Dataset& data, size_t rec, bool augment_on,
                   Rng& aug_rng) {
    const auto& cfg = net.config();
    const auto& h = data.header;
    Sample s;
    s.packet.proprio_hist = h.proprio_hist;
    s.packet.proprio_dim = h.proprio_dim;
    s.packet.instruction_ids = data.instruction_ids(rec);
    s.packet.proprio.assign(data.proprio_ptr(rec),
                            data.proprio_ptr(rec) + static_cast<size_t>(h.proprio_hist) * h.proprio_dim);

    AugmentParams ap;
    ap.crop_scale_min = cfg.crop_scale_min;
    ap.crop_scale_max = cfg.crop_scale_max;
    ap.crop_ratio_min = cfg.crop_ratio_min;
    ap.crop_ratio_max = cfg.crop_ratio_max;
    ap.brightness = cfg.color_jitter_brightness;
    ap.contrast = cfg.color_jitter_contrast;
    ap.saturation = cfg.color_jitter_saturation;
    ap.hue = cfg.color_jitter_hue;

    const int n_views = cfg.multi_view ? 2 : 1;
    auto view_image = [&](size_t record, int view) {
        return sim::dequantize(data.view_ptr(record, view), h.view_bytes());
    };
    for (int v = 0; v < n_views; ++v) {
        sim::Image img = view_image(rec, v);
        if (augment_on) img = augment(img, ap, aug_rng);
        s.packet.views.push_back(std::move(img));
        std::vector<sim::Image> past;
        for (int i = cfg.history_frames; i >= 1; --i) {
            uint32_t ep = data.episode_idx[rec];
            size_t start = data.episode_start[ep];
            size_t idx = rec >= start + static_cast<size_t>(i) ? rec - static_cast<size_t>(i) : start;
            sim::Image pimg = view_image(idx, v);
            if (augment_on) pimg = augment(pimg, ap, aug_rng);
            past.push_back(std::move(pimg));
        }
        s.packet.past_frames.push_back(std::move(past));
    }

    // stored chunks carry the generation horizon; train on the leading rows
    action::ActionChunk full(h.chunk_t, h.action_dim);
    const float* cp = data.chunk_ptr(rec);
    for (size_t i = 0; i < full.v.size(); ++i) full.v[i] = static_cast<double>(cp[i]);
    action::ActionChunk sliced(cfg.action_chunk_size, h.action_dim);
    for (int i = 0; i < cfg.action_chunk_size; ++i)
        for (int j = 0; j < h.action_dim; ++j) sliced.at(i, j) = full.at(i, j);
    s.target_norm = action::normalize(sliced, net.norm_stats);

    if (cfg.world_modelling && cfg.world_loss_weight > 0.0) {
        size_t fut = data.future_record(rec, cfg.world_horizon);
        sim::Image future = view_image(fut, 0);  // third-person, un-augmented
        s.world_tokens = world::tokenize_frame(future, net.frame_codebook);
    }
    return s;
}

// Fits normalization stats and any codecs the configuration needs.
template <typename T>
void fit_stats(model::Net<T>& net, const sim::Dataset& data) {
    const auto& cfg = net.config();
    const auto& h = data.header;
    std::vector<action::ActionChunk> chunks;
    chunks.reserve(data.n_records());
    for (size_t r = 0; r < data.n_records(); ++r) {
        action::ActionChunk c(h.chunk_t, h.action_dim);
        const float* cp = data.chunk_ptr(r);
        for (size_t i = 0; i < c.v.size(); ++i) c.v[i] = static_cast<double>(cp[i]);
        chunks.push_back(std::move(c));
    }
    net.norm_stats = action::fit_norm_stats(chunks);

    if (cfg.action_loss == model::ActionLoss::vq_cls) {
        std::vector<action::ActionChunk> normed;
        normed.reserve(chunks.size());
        for (const auto& c : chunks) normed.push_back(action::normalize(c, net.norm_stats));
        action::VqFitOptions opt;
        opt.levels = cfg.vq_levels;
        opt.k = cfg.vq_codebook_size;
        opt.seed = derive_seed(cfg.train_seed, "vq_fit");
        net.vq_codebook = action::vq_fit(normed, opt);
    }

    if (cfg.world_modelling) {
        // a bounded subsample of third-person frames is plenty for k-means
        std::vector<sim::Image> frames;
        size_t stride = std::max<size_t>(1, data.n_records() / 400);
        for (size_t r = 0; r < data.n_records(); r += stride)
            frames.push_back(sim::dequantize(data.view_ptr(r, 0), h.view_bytes()));
        std::vector<const sim::Image*> ptrs;
        for (const auto& f : frames) ptrs.push_back(&f);
        net.frame_codebook = world::fit_frame_codebook(
            ptrs, cfg.patch_size, cfg.world_codebook_size, derive_seed(cfg.train_seed, "world_cb"));
    }
}

// Behavior-cloning loop: seeded minibatches, augmentation, objective loss with
// optional frequency/world terms, cosine schedule with warmup, global-norm
// clipping, AdamW. Deterministic given (config, dataset, seed): per-sample
// draws are keyed by (seed, step, slot) and gradient reduction over shards is
// in fixed order.
template <typename T>
TrainOutcome train_model(model::Net<T>& net, const sim::Dataset& data,
                         std::ostream* progress = nullptr) {
    using namespace ag;
    const auto& cfg = net.config();
    if (sim::suite_from_name(cfg.suite) != static_cast<sim::Suite>(data.header.suite))
        throw model::ConfigError("train: dataset suite does not match the config");
    if (cfg.action_chunk_size > data.header.chunk_t)
        throw model::ConfigError("train: configured chunk exceeds the dataset horizon");

    fit_stats(net, data);

    ParamStore<T>& params = net.params();
    AdamWState<T> opt(params);
    opt.weight_decay = cfg.weight_decay;
    opt.max_grad_norm = cfg.max_grad_norm;

    const int B = cfg.batch_size;
    const int n_shards = std::min(cfg.grad_shards, B);
    unsigned hw = std::thread::hardware_concurrency();
    const int n_threads = std::max(1u, std::min<unsigned>(hw, static_cast<unsigned>(n_shards)));

    TrainOutcome out;
    out.log.reserve(static_cast<size_t>(cfg.training_steps));
    auto t0 = std::chrono::steady_clock::now();

    std::vector<GradBuffer<T>> shard_grads;
    for (int s = 0; s < n_shards; ++s) shard_grads.emplace_back(params);
    GradBuffer<T> grads(params);
    std::vector<std::array<double, 4>> shard_terms(static_cast<size_t>(n_shards));

    for (int step = 0; step < cfg.training_steps; ++step) {
        Rng batch_rng(derive_seed(cfg.train_seed, "batch", static_cast<uint64_t>(step)));
        std::vector<size_t> idx(static_cast<size_t>(B));
        for (auto& i : idx) i = batch_rng.below(data.n_records());

        auto run_shard = [&](int shard) {
            auto& terms = shard_terms[static_cast<size_t>(shard)];
            terms = {0, 0, 0, 0};
            shard_grads[static_cast<size_t>(shard)].zero();
            for (int slot = shard; slot < B; slot += n_shards) {
                Rng aug_rng(derive_seed(cfg.train_seed, "aug", static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(slot)));
                Rng draw_rng(derive_seed(cfg.train_seed, "draw", static_cast<uint64_t>(step),
                                         static_cast<uint64_t>(slot)));
                Sample s = make_sample(net, data, idx[static_cast<size_t>(slot)], cfg.augment,
                                       aug_rng);
                Tape<T> tape;
                auto parts = net.loss(tape, s.packet, s.target_norm,
                                      s.world_tokens.empty() ? nullptr : &s.world_tokens,
                                      draw_rng);
                tape.backward(parts.total);
                shard_grads[static_cast<size_t>(shard)].accumulate_from(tape, 1.0 / B);
                terms[0] += static_cast<double>(tape.val(parts.total)[0]) / B;
                terms[1] += parts.action / B;
                terms[2] += parts.freq / B;
                terms[3] += parts.world / B;
            }
        };

        if (n_threads > 1) {
            std::vector<std::thread> pool;
            for (int sh = 0; sh < n_shards; ++sh) pool.emplace_back(run_shard, sh);
            for (auto& th : pool) th.join();
        } else {
            for (int sh = 0; sh < n_shards; ++sh) run_shard(sh);
        }

        grads.zero();
        LossRow row;
        row.step = step;
        for (int sh = 0; sh < n_shards; ++sh) {  // fixed reduction order
            grads.add(shard_grads[static_cast<size_t>(sh)]);
            row.total += shard_terms[static_cast<size_t>(sh)][0];
            row.action += shard_terms[static_cast<size_t>(sh)][1];
            row.freq += shard_terms[static_cast<size_t>(sh)][2];
            row.world += shard_terms[static_cast<size_t>(sh)][3];
        }
        if (!std::isfinite(row.total))
            throw NonFiniteError("train: non-finite loss at step " + std::to_string(step));

        clip_global_norm(grads, cfg.max_grad_norm);
        opt.lr = lr_schedule(step + 1, cfg.training_steps, cfg.warmup_steps, cfg.learning_rate);
        row.lr = opt.lr;
        adamw_step(params, grads, opt);
        out.log.push_back(row);

        if (progress && ((step + 1) % 100 == 0 || step + 1 == cfg.training_steps)) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "step %5d/%d  loss %.5f  (action %.5f freq %.5f world %.5f)\n",
                          step + 1, cfg.training_steps, row.total, row.action, row.freq, row.world);
            (*progress) << buf << std::flush;
        }
    }

    auto t1 = std::chrono::steady_clock::now();
    out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.mean_step_seconds = out.wall_seconds / std::max(1, cfg.training_steps);
    return out;
}

}  // namespace vlalab::train
