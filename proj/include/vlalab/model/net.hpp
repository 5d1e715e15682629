#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vlalab/action/codecs.hpp"
#include "vlalab/action/samplers.hpp"
#include "vlalab/ag/nn.hpp"
#include "vlalab/ag/optim.hpp"
#include "vlalab/core/checkpoint.hpp"
#include "vlalab/model/config.hpp"
#include "vlalab/model/packet.hpp"
#include "vlalab/model/vocab.hpp"
#include "vlalab/world/frame_codebook.hpp"

namespace vlalab::model {

// Index ranges of each modality in the trunk sequence.
struct SeqSpans {
    int vision_begin = 0, vision_end = 0;
    int lang_begin = 0, lang_end = 0;
    int prop_begin = 0, prop_end = 0;
    int act_begin = 0, act_end = 0;  // token-reuse decoder tail
    int total = 0;
};

template <typename T>
struct TrunkOut {
    std::vector<ag::Var<T>> layers;  // residual stream after each trunk block
    ag::Var<T> final_normed;
    SeqSpans spans;
};

template <typename T>
struct PolicyContext {
    ConditionType strategy = ConditionType::loose;
    ag::Var<T> input_tokens;               // loose: query readout fed as policy input
    std::vector<ag::Var<T>> per_layer;     // tight/soft: one conditioning set per layer
};

template <typename T>
struct LossParts {
    ag::Var<T> total;
    double action = 0.0, freq = 0.0, world = 0.0;
};

// The full trainable policy stack for one design-space coordinate.
template <typename T>
class Net {
public:
    Net(const DesignConfig& cfg, int vocab_size, uint64_t init_seed)
        : cfg_(cfg), vocab_size_(vocab_size), store_(init_seed) {
        cfg_.validate();
        register_params();
    }

    const DesignConfig& config() const { return cfg_; }
    ag::ParamStore<T>& params() { return store_; }
    const ag::ParamStore<T>& params() const { return store_; }
    int vocab_total() const {
        return vocab_size_ + (cfg_.policy_design == PolicyDesign::token_reuse ? cfg_.bin_count : 0);
    }
    int action_token_base() const { return vocab_size_; }

    // fitted before training; serialized with the checkpoint
    action::NormStats norm_stats;
    action::Codebook vq_codebook;
    world::FrameCodebook frame_codebook;

    static std::vector<int> layer_map(int policy_depth, int trunk_depth) {
        std::vector<int> map(static_cast<size_t>(policy_depth));
        for (int j = 0; j < policy_depth; ++j)
            map[static_cast<size_t>(j)] = j * trunk_depth / policy_depth;
        map.back() = trunk_depth - 1;
        return map;
    }

    // ------------------------------------------------------------------
    // trunk
    // ------------------------------------------------------------------

    TrunkOut<T> trunk_forward(ag::Tape<T>& tape, const ObservationPacket& pkt,
                              const std::vector<int>* action_prefix = nullptr) const {
        using namespace ag;
        const int W = cfg_.trunk_width;
        std::vector<Var<T>> rows;
        SeqSpans spans;

        Var<T> mod = store_.use(tape, "trunk.mod");
        auto mod_row = [&](int i) { return slice_rows(mod, i, i + 1); };

        // vision: frames oldest -> current, views within a frame
        spans.vision_begin = 0;
        const int n_views = static_cast<int>(pkt.views.size());
        if (cfg_.multi_view && n_views != 2)
            throw ShapeError("trunk_forward: multi-view config needs 2 views");
        if (!cfg_.multi_view && n_views != 1)
            throw ShapeError("trunk_forward: single-view config needs 1 view");
        Var<T> cam = store_.use(tape, "trunk.pos.cam");
        Var<T> frame_pos = store_.use(tape, "trunk.pos.frame");
        for (int f = 0; f <= cfg_.history_frames; ++f) {
            for (int v = 0; v < n_views; ++v) {
                const sim::Image* img;
                if (f < cfg_.history_frames) {
                    const auto& past = pkt.past_frames.at(static_cast<size_t>(v));
                    if (static_cast<int>(past.size()) != cfg_.history_frames)
                        throw ShapeError("trunk_forward: history frame count mismatch");
                    img = &past[static_cast<size_t>(f)];
                } else {
                    img = &pkt.views[static_cast<size_t>(v)];
                }
                Var<T> tok = embed_view(tape, *img, v);
                tok = add_rowvec(tok, slice_rows(frame_pos, f, f + 1));
                tok = add_rowvec(tok, slice_rows(cam, v, v + 1));
                tok = add_rowvec(tok, mod_row(0));
                rows.push_back(tok);
            }
        }
        int n_vision = 0;
        for (const auto& r : rows) n_vision += r.rows();
        spans.vision_end = n_vision;

        // language
        spans.lang_begin = n_vision;
        std::vector<int> ids = pkt.instruction_ids;
        if (static_cast<int>(ids.size()) > kMaxInstr) ids.resize(kMaxInstr);
        if (!ids.empty()) {
            Var<T> tok = embedding(store_.use(tape, "embed.tok"), ids);
            tok = add(tok, slice_rows(store_.use(tape, "trunk.pos.instr"), 0,
                                      static_cast<int>(ids.size())));
            tok = add_rowvec(tok, mod_row(1));
            rows.push_back(tok);
        }
        spans.lang_end = spans.lang_begin + static_cast<int>(ids.size());

        // proprioception, only when conditioned into the trunk
        spans.prop_begin = spans.lang_end;
        if (cfg_.proprioception_to_vlm) {
            Var<T> tok = embed_proprio(tape, pkt, "prop.vlm", W);
            tok = add_rowvec(tok, mod_row(2));
            rows.push_back(tok);
            spans.prop_end = spans.prop_begin + tok.rows();
        } else {
            spans.prop_end = spans.prop_begin;
        }

        // token-reuse decoder tail (teacher-forced ids, causal over the tail)
        spans.act_begin = spans.prop_end;
        if (action_prefix) {
            if (cfg_.policy_design != PolicyDesign::token_reuse)
                throw GraphError("trunk_forward: action tail requires the token-reuse design");
            Var<T> tok = embedding(store_.use(tape, "embed.tok"), *action_prefix);
            tok = add(tok, slice_rows(store_.use(tape, "reuse.pos"), 0,
                                      static_cast<int>(action_prefix->size())));
            tok = add_rowvec(tok, mod_row(3));
            rows.push_back(tok);
        }
        spans.act_end = spans.act_begin + (action_prefix ? static_cast<int>(action_prefix->size()) : 0);

        Var<T> x = rows.size() == 1 ? rows[0] : concat_rows(rows);
        spans.total = x.rows();
        if (spans.total > cfg_.max_sequence_length)
            throw ShapeError("trunk_forward: sequence length " + std::to_string(spans.total) +
                             " exceeds the configured maximum " +
                             std::to_string(cfg_.max_sequence_length));

        // observation tokens attend bidirectionally; the decoder tail is causal
        std::vector<T> mask;
        const std::vector<T>* mask_ptr = nullptr;
        if (action_prefix && !action_prefix->empty()) {
            mask = prefix_lm_mask<T>(spans.act_begin, spans.act_end - spans.act_begin);
            mask_ptr = &mask;
        }

        TrunkOut<T> out;
        out.spans = spans;
        for (int l = 0; l < cfg_.trunk_depth; ++l) {
            x = encoder_block(tape, store_, "trunk.l" + std::to_string(l), x, cfg_.trunk_heads,
                              mask_ptr);
            out.layers.push_back(x);
        }
        out.final_normed = apply_ln(tape, store_, "trunk.final_ln", x);
        return out;
    }

    // Patch tokens for one view: linear patch embedding plus 2D position.
    ag::Var<T> embed_view(ag::Tape<T>& tape, const sim::Image& img, int view) const {
        using namespace ag;
        (void)view;
        if (img.h != cfg_.image_size || img.w != cfg_.image_size)
            throw ShapeError("embed_view: image extents do not match the configured size");
        const int p = cfg_.patch_size;
        const int side = cfg_.image_size / p;
        const int n = side * side;
        const int plen = p * p * 3;
        std::vector<T> patches(static_cast<size_t>(n) * plen);
        for (int gr = 0; gr < side; ++gr)
            for (int gc = 0; gc < side; ++gc) {
                T* dst = patches.data() + static_cast<size_t>(gr * side + gc) * plen;
                for (int r = 0; r < p; ++r)
                    for (int c = 0; c < p; ++c) {
                        const float* px = img.at(gr * p + r, gc * p + c);
                        for (int k = 0; k < 3; ++k)
                            dst[(r * p + c) * 3 + k] = static_cast<T>(px[k]);
                    }
            }
        Var<T> pm = tape.constant({n, plen}, std::move(patches));
        Var<T> tok = add_rowvec(matmul(pm, store_.use(tape, "trunk.patch.w")),
                                store_.use(tape, "trunk.patch.b"));
        return add(tok, store_.use(tape, "trunk.pos.patch"));
    }

    // Proprioception history -> tokens, via the configured projector.
    ag::Var<T> embed_proprio(ag::Tape<T>& tape, const ObservationPacket& pkt,
                             const std::string& prefix, int width) const {
        using namespace ag;
        (void)width;
        const int hp = cfg_.history_proprioception_size;
        const int pd = cfg_.proprio_dim();
        if (static_cast<int>(pkt.proprio.size()) != hp * pd)
            throw ShapeError("embed_proprio: history shape mismatch");
        if (pkt.proprio_hist != hp || pkt.proprio_dim != pd)
            throw ShapeError("embed_proprio: history metadata mismatch");
        std::vector<T> vals(pkt.proprio.begin(), pkt.proprio.end());
        Var<T> h = tape.constant({hp, pd}, std::move(vals));
        Var<T> tok = linear(tape, store_, prefix + ".lin", h);
        tok = add(tok, store_.use(tape, prefix + ".pos"));
        if (cfg_.transformer_proprioception_projector) {
            for (int l = 0; l < 2; ++l)
                tok = encoder_block(tape, store_, prefix + ".tr.l" + std::to_string(l), tok,
                                    proj_heads_);
        }
        return tok;
    }

    // ------------------------------------------------------------------
    // bridge: which trunk layers the policy can read, and through what
    // ------------------------------------------------------------------

    PolicyContext<T> connect(ag::Tape<T>& tape, const TrunkOut<T>& trunk) const {
        switch (cfg_.condition_type) {
            case ConditionType::loose: return connect_loose(tape, trunk);
            case ConditionType::tight: return connect_tight(tape, trunk);
            case ConditionType::soft: return connect_soft(tape, trunk);
        }
        throw ag::GraphError("connect: bad strategy");
    }

    PolicyContext<T> connect_loose(ag::Tape<T>& tape, const TrunkOut<T>& trunk) const {
        using namespace ag;
        PolicyContext<T> ctx;
        ctx.strategy = ConditionType::loose;
        Var<T> q = store_.use(tape, "bridge.queries");
        Var<T> kv = apply_ln(tape, store_, "bridge.loose.lnkv", trunk.layers.back());
        // queries keep their own content; the read is a residual update
        ctx.input_tokens = add(q, mha(tape, store_, "bridge.loose", q, kv, cfg_.policy_heads));
        return ctx;
    }

    PolicyContext<T> connect_tight(ag::Tape<T>& tape, const TrunkOut<T>& trunk) const {
        PolicyContext<T> ctx;
        ctx.strategy = ConditionType::tight;
        auto map = layer_map(cfg_.effective_policy_depth(), cfg_.trunk_depth);
        for (int l : map) ctx.per_layer.push_back(trunk.layers.at(static_cast<size_t>(l)));
        return ctx;
    }

    PolicyContext<T> connect_soft(ag::Tape<T>& tape, const TrunkOut<T>& trunk) const {
        using namespace ag;
        PolicyContext<T> ctx;
        ctx.strategy = ConditionType::soft;
        auto map = layer_map(cfg_.effective_policy_depth(), cfg_.trunk_depth);
        Var<T> q = store_.use(tape, "bridge.queries");
        // one buffered read per distinct mapped trunk layer; queries are fresh
        // readers with shared embeddings
        std::vector<ag::Var<T>> buffers(static_cast<size_t>(cfg_.trunk_depth),
                                        ag::Var<T>{});
        for (int l : map) {
            if (!buffers[static_cast<size_t>(l)].valid()) {
                std::string prefix = "bridge.tap" + std::to_string(l);
                Var<T> kv = apply_ln(tape, store_, prefix + ".lnkv",
                                     trunk.layers.at(static_cast<size_t>(l)));
                buffers[static_cast<size_t>(l)] =
                    add(q, mha(tape, store_, prefix, q, kv, cfg_.policy_heads));
            }
            ctx.per_layer.push_back(buffers[static_cast<size_t>(l)]);
        }
        return ctx;
    }

    // ------------------------------------------------------------------
    // policy module
    // ------------------------------------------------------------------

    // Runs the policy transformer. `chunk_in`, when given, is the noisy chunk
    // (flow/ddim) embedded as input tokens with a time feature; otherwise the
    // learned readout tokens are used. Returns (t x head_out).
    ag::Var<T> policy_forward(ag::Tape<T>& tape, const PolicyContext<T>& ctx,
                              const ObservationPacket& pkt, const std::vector<T>* chunk_in,
                              double t01) const {
        using namespace ag;
        if (!cfg_.uses_policy_module())
            throw GraphError("policy_forward: the token-reuse design has no policy module");
        if (ctx.strategy != cfg_.condition_type)
            throw GraphError("policy_forward: context strategy does not match the config");
        const int t = cfg_.action_chunk_size;
        const int adim = cfg_.action_dim();
        const bool noisy_input =
            cfg_.action_loss == ActionLoss::flow || cfg_.action_loss == ActionLoss::ddim;

        Var<T> x;
        if (noisy_input) {
            if (!chunk_in || static_cast<int>(chunk_in->size()) != t * adim)
                throw ShapeError("policy_forward: chunk input shape mismatch");
            Var<T> cv = tape.constant({t, adim}, *chunk_in);
            x = linear(tape, store_, "policy.in", cv);
            Var<T> tf = tape.constant({1, cfg_.policy_width},
                                      sinusoidal_features<T>(t01, cfg_.policy_width));
            Var<T> temb = linear(tape, store_, "policy.time.fc2",
                                 gelu(linear(tape, store_, "policy.time.fc1", tf)));
            x = add_rowvec(x, temb);
            x = add(x, slice_rows(store_.use(tape, "policy.pos"), 0, t));
        } else {
            x = slice_rows(store_.use(tape, "policy.readout"), 0, t);
        }

        std::vector<Var<T>> rows = {x};
        if (ctx.strategy == ConditionType::loose) rows.push_back(ctx.input_tokens);
        if (cfg_.proprioception_to_policy) {
            Var<T> ptok = embed_proprio(tape, pkt, "prop.policy", cfg_.policy_width);
            rows.push_back(ptok);
        }
        x = rows.size() == 1 ? rows[0] : concat_rows(rows);

        const int depth = cfg_.effective_policy_depth();
        for (int j = 0; j < depth; ++j) {
            std::string prefix = "policy.l" + std::to_string(j);
            if (ctx.strategy == ConditionType::loose)
                x = encoder_block(tape, store_, prefix, x, cfg_.policy_heads);
            else
                x = cross_block(tape, store_, prefix, x, ctx.per_layer.at(static_cast<size_t>(j)),
                                cfg_.policy_heads);
        }
        Var<T> out = apply_ln(tape, store_, "policy.out_ln", slice_rows(x, 0, t));
        return linear(tape, store_, "policy.head", out);
    }

    // ------------------------------------------------------------------
    // losses
    // ------------------------------------------------------------------

    // target_norm: normalized (t x adim) target chunk. world_tokens: tokenized
    // future frame (required when the world head is active with weight > 0).
    LossParts<T> loss(ag::Tape<T>& tape, const ObservationPacket& pkt,
                      const action::ActionChunk& target_norm,
                      const std::vector<int>* world_tokens, Rng& draw) const {
        using namespace ag;
        const int t = cfg_.action_chunk_size;
        const int adim = cfg_.action_dim();
        if (target_norm.t != t || target_norm.dim != adim)
            throw ShapeError("loss: target chunk shape mismatch");

        LossParts<T> parts;
        Var<T> pred_chunk;  // differentiable predicted/estimated clean chunk

        if (cfg_.policy_design == PolicyDesign::token_reuse) {
            auto bins = action::bin_encode(target_norm, cfg_.bin_count);
            std::vector<int> prefix(bins.size());
            prefix[0] = Vocab::kClsId;
            for (size_t i = 1; i < bins.size(); ++i)
                prefix[i] = action_token_base() + bins[i - 1];
            TrunkOut<T> trunk = trunk_forward(tape, pkt, &prefix);
            Var<T> dec = slice_rows(trunk.final_normed, trunk.spans.act_begin,
                                    trunk.spans.act_end);
            Var<T> logits = add_rowvec(linear(tape, store_, "reuse.head", dec),
                                       tape.constant({1, vocab_total()}, action_id_mask()));
            std::vector<int> targets(bins.size());
            for (size_t i = 0; i < bins.size(); ++i) targets[i] = action_token_base() + bins[i];
            parts.total = cross_entropy(logits, targets);
            parts.action = static_cast<double>(tape.val(parts.total)[0]);
            if (cfg_.frequency_domain_loss_weight > 0.0)
                pred_chunk = expected_bins(tape, reshape(logits, {t * adim, vocab_total()}), t,
                                           adim, action_token_base());
        } else {
            TrunkOut<T> trunk = trunk_forward(tape, pkt);
            PolicyContext<T> ctx = connect(tape, trunk);
            Var<T> action_loss;

            switch (cfg_.action_loss) {
                case ActionLoss::regression: {
                    Var<T> pred = policy_forward(tape, ctx, pkt, nullptr, 0.0);
                    Var<T> target = chunk_const(tape, target_norm);
                    action_loss = mse(pred, target);
                    pred_chunk = pred;
                    break;
                }
                case ActionLoss::bin_cls: {
                    auto bins = action::bin_encode(target_norm, cfg_.bin_count);
                    Var<T> logits = reshape(policy_forward(tape, ctx, pkt, nullptr, 0.0),
                                            {t * adim, cfg_.bin_count});
                    action_loss = cross_entropy(logits, bins);
                    if (cfg_.frequency_domain_loss_weight > 0.0)
                        pred_chunk = expected_bins(tape, logits, t, adim, 0);
                    break;
                }
                case ActionLoss::vq_cls: {
                    if (vq_codebook.levels == 0)
                        throw GraphError("loss: vq codebook has not been fitted");
                    auto idx = action::vq_encode(vq_codebook, target_norm);
                    Var<T> raw = policy_forward(tape, ctx, pkt, nullptr, 0.0);
                    Var<T> logits = reshape(raw, {t * vq_codebook.levels, vq_codebook.k});
                    action_loss = cross_entropy(logits, idx);
                    if (cfg_.frequency_domain_loss_weight > 0.0)
                        pred_chunk = expected_codes(tape, raw, t);
                    break;
                }
                case ActionLoss::flow: {
                    double ft = draw.uniform();
                    std::vector<T> x0(static_cast<size_t>(t) * adim), xt(x0.size()),
                        vtgt(x0.size());
                    for (size_t i = 0; i < x0.size(); ++i) {
                        double n = draw.normal();
                        double x1 = target_norm.v[i];
                        x0[i] = static_cast<T>(n);
                        xt[i] = static_cast<T>((1.0 - ft) * n + ft * x1);
                        vtgt[i] = static_cast<T>(x1 - n);
                    }
                    Var<T> vhat = policy_forward(tape, ctx, pkt, &xt, ft);
                    action_loss = mse(vhat, tape.constant({t, adim}, vtgt));
                    // one-step clean estimate for the frequency objective
                    if (cfg_.frequency_domain_loss_weight > 0.0)
                        pred_chunk = add(tape.constant({t, adim}, xt), scale(vhat, 1.0 - ft));
                    break;
                }
                case ActionLoss::ddim: {
                    action::DiffusionSchedule sch = schedule();
                    int s = static_cast<int>(draw.below(static_cast<uint64_t>(sch.train_steps)));
                    double ab = sch.alpha_bar[static_cast<size_t>(s)];
                    double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
                    std::vector<T> eps(static_cast<size_t>(t) * adim), xs(eps.size());
                    for (size_t i = 0; i < eps.size(); ++i) {
                        double n = draw.normal();
                        eps[i] = static_cast<T>(n);
                        xs[i] = static_cast<T>(sa * target_norm.v[i] + sn * n);
                    }
                    double t01 = static_cast<double>(s) / sch.train_steps;
                    Var<T> ehat = policy_forward(tape, ctx, pkt, &xs, t01);
                    action_loss = mse(ehat, tape.constant({t, adim}, eps));
                    if (cfg_.frequency_domain_loss_weight > 0.0)
                        pred_chunk = scale(sub(tape.constant({t, adim}, xs), scale(ehat, sn)),
                                           1.0 / sa);
                    break;
                }
            }

            parts.total = action_loss;
            parts.action = static_cast<double>(tape.val(action_loss)[0]);

            if (cfg_.world_modelling && cfg_.world_loss_weight > 0.0) {
                if (!world_tokens)
                    throw GraphError("loss: world modelling needs future-frame tokens");
                Var<T> wl = world_loss(tape, trunk, *world_tokens);
                parts.world = static_cast<double>(tape.val(wl)[0]);
                parts.total = add(parts.total, scale(wl, cfg_.world_loss_weight));
            }
        }

        if (cfg_.frequency_domain_loss_weight > 0.0 && pred_chunk.valid()) {
            Var<T> fl = frequency_loss(tape, pred_chunk, target_norm,
                                       cfg_.frequency_domain_loss_weight);
            parts.freq = static_cast<double>(tape.val(fl)[0]);
            parts.total = add(parts.total, fl);
        }
        return parts;
    }

    // lambda * MSE between DCT coefficients of prediction and target.
    ag::Var<T> frequency_loss(ag::Tape<T>& tape, ag::Var<T> pred_chunk,
                              const action::ActionChunk& target_norm, double lambda) const {
        using namespace ag;
        const int t = target_norm.t;
        auto cm = action::dct_matrix(t);
        std::vector<T> cmat(cm.begin(), cm.end());
        Var<T> C = tape.constant({t, t}, cmat);
        action::ActionChunk tgt_freq = action::dct_forward(target_norm);
        std::vector<T> tf(tgt_freq.v.begin(), tgt_freq.v.end());
        Var<T> pred_freq = matmul(C, pred_chunk);
        return scale(mse(pred_freq, tape.constant({t, target_norm.dim}, tf)), lambda);
    }

    // Next-token loss over the tokenized future frame, conditioned layer-wise
    // on trunk states through the tight mapping.
    ag::Var<T> world_loss(ag::Tape<T>& tape, const TrunkOut<T>& trunk,
                          const std::vector<int>& tokens) const {
        using namespace ag;
        const int n = world_grid_tokens();
        if (static_cast<int>(tokens.size()) != n)
            throw ShapeError("world_loss: expected " + std::to_string(n) + " frame tokens");
        std::vector<int> prev(tokens.begin(), tokens.end() - 1);
        Var<T> emb = embedding(store_.use(tape, "world.embed"), prev);
        Var<T> x = concat_rows<T>({store_.use(tape, "world.start"), emb});
        x = add(x, store_.use(tape, "world.pos"));
        std::vector<T> mask = causal_mask<T>(n);
        auto map = layer_map(kWorldDepth, cfg_.trunk_depth);
        for (int j = 0; j < kWorldDepth; ++j)
            x = cross_block(tape, store_, "world.l" + std::to_string(j), x,
                            trunk.layers.at(static_cast<size_t>(map[static_cast<size_t>(j)])),
                            cfg_.trunk_heads, &mask);
        Var<T> logits = linear(tape, store_, "world.head",
                               apply_ln(tape, store_, "world.out_ln", x));
        return cross_entropy(logits, tokens);
    }

    // ------------------------------------------------------------------
    // inference
    // ------------------------------------------------------------------

    // Normalized chunk prediction; the caller denormalizes.
    action::ActionChunk act_normalized(const ObservationPacket& pkt, Rng& draw) const {
        using namespace ag;
        const int t = cfg_.action_chunk_size;
        const int adim = cfg_.action_dim();

        if (cfg_.policy_design == PolicyDesign::token_reuse) return decode_token_reuse(pkt);

        ag::Tape<T> tape;
        TrunkOut<T> trunk = trunk_forward(tape, pkt);
        PolicyContext<T> ctx = connect(tape, trunk);
        action::ActionChunk out(t, adim);

        switch (cfg_.action_loss) {
            case ActionLoss::regression: {
                Var<T> pred = policy_forward(tape, ctx, pkt, nullptr, 0.0);
                const auto& v = tape.val(pred);
                for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = static_cast<double>(v[i]);
                break;
            }
            case ActionLoss::bin_cls: {
                Var<T> logits = policy_forward(tape, ctx, pkt, nullptr, 0.0);
                const auto& v = tape.val(logits);
                for (int i = 0; i < t * adim; ++i) {
                    int best = 0;
                    const T* row = v.data() + static_cast<size_t>(i) * cfg_.bin_count;
                    for (int b = 1; b < cfg_.bin_count; ++b)
                        if (row[b] > row[best]) best = b;
                    out.v[static_cast<size_t>(i)] = action::bin_decode_value(best, cfg_.bin_count);
                }
                break;
            }
            case ActionLoss::vq_cls: {
                Var<T> raw = policy_forward(tape, ctx, pkt, nullptr, 0.0);
                const auto& v = tape.val(raw);
                const int K = vq_codebook.k, L = vq_codebook.levels;
                for (int i = 0; i < t; ++i)
                    for (int l = 0; l < L; ++l) {
                        const T* row = v.data() + (static_cast<size_t>(i) * L + l) * K;
                        int best = 0;
                        for (int b = 1; b < K; ++b)
                            if (row[b] > row[best]) best = b;
                        const double* code = vq_codebook.code(l, best);
                        for (int j = 0; j < adim; ++j) out.at(i, j) += code[j];
                    }
                break;
            }
            case ActionLoss::flow: {
                auto denoiser = [&](const std::vector<double>& x, double t01) {
                    std::vector<T> xt(x.begin(), x.end());
                    Var<T> v = policy_forward(tape, ctx, pkt, &xt, t01);
                    const auto& val = tape.val(v);
                    return std::vector<double>(val.begin(), val.end());
                };
                out.v = action::flow_sample(denoiser, out.v.size(), cfg_.flow_sample_steps, draw);
                break;
            }
            case ActionLoss::ddim: {
                auto denoiser = [&](const std::vector<double>& x, double t01) {
                    std::vector<T> xt(x.begin(), x.end());
                    Var<T> v = policy_forward(tape, ctx, pkt, &xt, t01);
                    const auto& val = tape.val(v);
                    return std::vector<double>(val.begin(), val.end());
                };
                out.v = action::ddim_sample(denoiser, schedule(), out.v.size(),
                                            cfg_.ddim_sample_steps, draw);
                break;
            }
        }
        for (auto& v : out.v) v = std::clamp(v, -1.0, 1.0);
        return out;
    }

    action::ActionChunk act(const ObservationPacket& pkt, Rng& draw) const {
        if (norm_stats.dim() == 0) throw ag::GraphError("act: normalization stats not fitted");
        return action::denormalize(act_normalized(pkt, draw), norm_stats);
    }

    action::DiffusionSchedule schedule() const {
        return action::DiffusionSchedule::cosine(cfg_.diffusion_train_steps);
    }

    int world_grid_tokens() const {
        int side = cfg_.image_size / cfg_.patch_size;
        return side * side;
    }

    // ------------------------------------------------------------------
    // checkpointing
    // ------------------------------------------------------------------

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        for (int i = 0; i < store_.count(); ++i) {
            const auto& t = store_.tensor(i);
            std::vector<float> data(t.values().begin(), t.values().end());
            ck.add(store_.name(i), t.shape, std::move(data));
        }
        if (norm_stats.dim() > 0) {
            int d = norm_stats.dim();
            ck.add("stats.norm.min", {d}, std::vector<float>(norm_stats.min.begin(),
                                                             norm_stats.min.end()));
            ck.add("stats.norm.max", {d}, std::vector<float>(norm_stats.max.begin(),
                                                             norm_stats.max.end()));
            std::vector<float> cflag(norm_stats.constant.begin(), norm_stats.constant.end());
            ck.add("stats.norm.constant", {d}, std::move(cflag));
        }
        if (vq_codebook.levels > 0)
            ck.add("stats.vq.codes", {vq_codebook.levels, vq_codebook.k, vq_codebook.dim},
                   std::vector<float>(vq_codebook.codes.begin(), vq_codebook.codes.end()));
        if (frame_codebook.k > 0)
            ck.add("stats.world.centroids", {frame_codebook.k, frame_codebook.patch_len()},
                   std::vector<float>(frame_codebook.centroids.begin(),
                                      frame_codebook.centroids.end()));
        return ck;
    }

    // Restores parameters and fitted stats by name. With reinit_mismatched,
    // tensors whose shape changed (or are missing) keep their fresh
    // initialization instead of failing; this is the cross-embodiment path.
    void load_checkpoint(const Checkpoint& ck, bool reinit_mismatched = false) {
        for (int i = 0; i < store_.count(); ++i) {
            const auto* item = ck.find(store_.name(i));
            auto& t = store_.tensor(i);
            if (!item || item->shape != t.shape) {
                if (reinit_mismatched) continue;
                throw ag::GraphError("load_checkpoint: missing or mismatched tensor " +
                                     store_.name(i));
            }
            for (size_t j = 0; j < t.values().size(); ++j)
                t.values()[j] = static_cast<T>(item->data[j]);
        }
        if (const auto* mn = ck.find("stats.norm.min")) {
            const auto* mx = ck.find("stats.norm.max");
            const auto* cf = ck.find("stats.norm.constant");
            if (!mx || !cf) throw ag::GraphError("load_checkpoint: incomplete norm stats");
            int d = static_cast<int>(mn->data.size());
            if (reinit_mismatched && d != cfg_.action_dim()) {
                // embodiment changed; stats must be refitted
            } else {
                norm_stats.min.assign(mn->data.begin(), mn->data.end());
                norm_stats.max.assign(mx->data.begin(), mx->data.end());
                norm_stats.constant.assign(cf->data.begin(), cf->data.end());
            }
        }
        if (const auto* vq = ck.find("stats.vq.codes")) {
            if (!(reinit_mismatched && vq->shape[2] != cfg_.action_dim())) {
                vq_codebook.levels = vq->shape[0];
                vq_codebook.k = vq->shape[1];
                vq_codebook.dim = vq->shape[2];
                vq_codebook.codes.assign(vq->data.begin(), vq->data.end());
            }
        }
        if (const auto* wc = ck.find("stats.world.centroids")) {
            frame_codebook.k = wc->shape[0];
            frame_codebook.patch = cfg_.patch_size;
            frame_codebook.centroids.assign(wc->data.begin(), wc->data.end());
        }
    }

    static constexpr int kMaxInstr = 16;
    static constexpr int kWorldDepth = 2;

private:
    // Softmax-weighted decode of bin logits: the differentiable chunk estimate
    // used by the frequency objective for classification heads.
    ag::Var<T> expected_bins(ag::Tape<T>& tape, ag::Var<T> logits_rows, int t, int adim,
                             int id_base) const {
        using namespace ag;
        int C = logits_rows.cols();
        Var<T> probs = softmax_rows(logits_rows);
        std::vector<T> centers(static_cast<size_t>(C), T(0));
        for (int b = 0; b < cfg_.bin_count; ++b)
            centers[static_cast<size_t>(id_base + b)] =
                static_cast<T>(action::bin_decode_value(b, cfg_.bin_count));
        Var<T> cv = tape.constant({C, 1}, centers);
        return reshape(matmul(probs, cv), {t, adim});
    }

    // Probability-weighted residual-code decode for the vq head.
    ag::Var<T> expected_codes(ag::Tape<T>& tape, ag::Var<T> raw, int t) const {
        using namespace ag;
        const int K = vq_codebook.k, L = vq_codebook.levels, adim = cfg_.action_dim();
        Var<T> sum;
        for (int l = 0; l < L; ++l) {
            Var<T> logits = slice_cols(raw, l * K, (l + 1) * K);
            Var<T> probs = softmax_rows(logits);
            std::vector<T> codes(static_cast<size_t>(K) * adim);
            for (int b = 0; b < K; ++b)
                for (int j = 0; j < adim; ++j)
                    codes[static_cast<size_t>(b) * adim + j] =
                        static_cast<T>(vq_codebook.code(l, b)[j]);
            Var<T> term = matmul(probs, tape.constant({K, adim}, codes));
            sum = l == 0 ? term : add(sum, term);
        }
        (void)t;
        return sum;
    }

    action::ActionChunk decode_token_reuse(const ObservationPacket& pkt) const {
        using namespace ag;
        const int t = cfg_.action_chunk_size;
        const int adim = cfg_.action_dim();
        const int n = t * adim;
        std::vector<int> prefix = {Vocab::kClsId};
        std::vector<int> bins;
        for (int p = 0; p < n; ++p) {
            ag::Tape<T> tape;
            TrunkOut<T> trunk = trunk_forward(tape, pkt, &prefix);
            Var<T> dec = slice_rows(trunk.final_normed, trunk.spans.act_begin,
                                    trunk.spans.act_end);
            Var<T> logits = add_rowvec(linear(tape, store_, "reuse.head", dec),
                                       tape.constant({1, vocab_total()}, action_id_mask()));
            const auto& v = tape.val(logits);
            const T* row = v.data() + static_cast<size_t>(p) * vocab_total();
            int best = action_token_base();
            for (int b = action_token_base(); b < vocab_total(); ++b)
                if (row[b] > row[best]) best = b;
            bins.push_back(best - action_token_base());
            prefix.push_back(best);
        }
        return action::bin_decode(bins, t, adim, cfg_.bin_count);
    }

    std::vector<T> action_id_mask() const {
        std::vector<T> mask(static_cast<size_t>(vocab_total()), static_cast<T>(-1e30));
        for (int b = action_token_base(); b < vocab_total(); ++b) mask[static_cast<size_t>(b)] = T(0);
        return mask;
    }

    void register_params() {
        using namespace ag;
        const int Wt = cfg_.trunk_width;
        const int Wp = cfg_.policy_width;
        const int plen = cfg_.patch_size * cfg_.patch_size * 3;
        const int side = cfg_.image_size / cfg_.patch_size;
        const int hidden_t = cfg_.mlp_ratio * Wt;
        const int hidden_p = cfg_.mlp_ratio * Wp;
        const int adim = cfg_.action_dim();
        const int pdim = cfg_.proprio_dim();

        store_.add("embed.tok", {vocab_total(), Wt}, Init::trunc_normal);
        add_linear(store_, "trunk.patch", plen, Wt);
        store_.add("trunk.pos.patch", {side * side, Wt}, Init::trunc_normal);
        store_.add("trunk.pos.cam", {2, Wt}, Init::trunc_normal);
        store_.add("trunk.pos.frame", {cfg_.history_frames + 1, Wt}, Init::trunc_normal);
        store_.add("trunk.pos.instr", {kMaxInstr, Wt}, Init::trunc_normal);
        store_.add("trunk.mod", {4, Wt}, Init::trunc_normal);
        for (int l = 0; l < cfg_.trunk_depth; ++l)
            add_encoder_block(store_, "trunk.l" + std::to_string(l), Wt, hidden_t);
        add_ln(store_, "trunk.final_ln", Wt);

        auto add_projector = [&](const std::string& prefix, int width) {
            add_linear(store_, prefix + ".lin", pdim, width);
            store_.add(prefix + ".pos", {cfg_.history_proprioception_size, width},
                       Init::trunc_normal);
            if (cfg_.transformer_proprioception_projector)
                for (int l = 0; l < 2; ++l)
                    add_encoder_block(store_, prefix + ".tr.l" + std::to_string(l), width,
                                      cfg_.mlp_ratio * width);
        };
        if (cfg_.proprioception_to_vlm) add_projector("prop.vlm", Wt);
        if (cfg_.proprioception_to_policy && cfg_.uses_policy_module())
            add_projector("prop.policy", Wp);

        if (cfg_.policy_design == PolicyDesign::token_reuse) {
            store_.add("reuse.pos", {cfg_.action_chunk_size * adim, Wt}, Init::trunc_normal);
            add_linear(store_, "reuse.head", Wt, vocab_total());
        } else {
            // bridge
            if (cfg_.condition_type == ConditionType::loose ||
                cfg_.condition_type == ConditionType::soft)
                store_.add("bridge.queries", {cfg_.effective_num_queries(), Wp},
                           Init::trunc_normal);
            if (cfg_.condition_type == ConditionType::loose) {
                add_ln(store_, "bridge.loose.lnkv", Wt);
                add_mha(store_, "bridge.loose", Wp, Wt, Wp);
            }
            if (cfg_.condition_type == ConditionType::soft) {
                auto map = layer_map(cfg_.effective_policy_depth(), cfg_.trunk_depth);
                std::vector<bool> seen(static_cast<size_t>(cfg_.trunk_depth), false);
                for (int l : map) {
                    if (seen[static_cast<size_t>(l)]) continue;
                    seen[static_cast<size_t>(l)] = true;
                    std::string prefix = "bridge.tap" + std::to_string(l);
                    add_ln(store_, prefix + ".lnkv", Wt);
                    add_mha(store_, prefix, Wp, Wt, Wp);
                }
            }

            // policy module
            const bool noisy_input =
                cfg_.action_loss == ActionLoss::flow || cfg_.action_loss == ActionLoss::ddim;
            if (noisy_input) {
                add_linear(store_, "policy.in", adim, Wp);
                add_linear(store_, "policy.time.fc1", Wp, Wp);
                add_linear(store_, "policy.time.fc2", Wp, Wp);
                store_.add("policy.pos", {8, Wp}, Init::trunc_normal);
            } else {
                store_.add("policy.readout", {8, Wp}, Init::trunc_normal);
            }
            const int kv_w = cfg_.condition_type == ConditionType::tight ? Wt : Wp;
            for (int j = 0; j < cfg_.effective_policy_depth(); ++j) {
                std::string prefix = "policy.l" + std::to_string(j);
                if (cfg_.condition_type == ConditionType::loose)
                    add_encoder_block(store_, prefix, Wp, hidden_p);
                else
                    add_cross_block(store_, prefix, Wp, kv_w, hidden_p);
            }
            add_ln(store_, "policy.out_ln", Wp);
            int head_out = 0;
            switch (cfg_.action_loss) {
                case ActionLoss::regression:
                case ActionLoss::flow:
                case ActionLoss::ddim: head_out = adim; break;
                case ActionLoss::bin_cls: head_out = adim * cfg_.bin_count; break;
                case ActionLoss::vq_cls: head_out = cfg_.vq_levels * cfg_.vq_codebook_size; break;
            }
            add_linear(store_, "policy.head", Wp, head_out);
        }

        if (cfg_.world_modelling) {
            const int n = world_grid_tokens();
            store_.add("world.embed", {cfg_.world_codebook_size, Wt}, Init::trunc_normal);
            store_.add("world.pos", {n, Wt}, Init::trunc_normal);
            store_.add("world.start", {1, Wt}, Init::trunc_normal);
            for (int j = 0; j < kWorldDepth; ++j)
                add_cross_block(store_, "world.l" + std::to_string(j), Wt, Wt, hidden_t);
            add_ln(store_, "world.out_ln", Wt);
            add_linear(store_, "world.head", Wt, cfg_.world_codebook_size);
        }
    }

    DesignConfig cfg_;
    int vocab_size_;
    ag::ParamStore<T> store_;
    int proj_heads_ = 4;

    ag::Var<T> chunk_const(ag::Tape<T>& tape, const action::ActionChunk& c) const {
        std::vector<T> v(c.v.begin(), c.v.end());
        return tape.constant({c.t, c.dim}, std::move(v));
    }
};

}  // namespace vlalab::model
