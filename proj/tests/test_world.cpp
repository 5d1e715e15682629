#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vlalab/model/net.hpp"
#include "vlalab/world/frame_codebook.hpp"

using namespace vlalab;
using namespace vlalab::world;

namespace {

sim::Image two_color_frame() {
    // left half dark, right half light
    sim::Image img;
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            float v = c < img.w / 2 ? 0.1f : 0.9f;
            float* px = img.at(r, c);
            px[0] = px[1] = px[2] = v;
        }
    return img;
}

}  // namespace

TEST_CASE("frame codebook: two-color corpus with k=2 tokenizes as the color mask") {
    sim::Image img = two_color_frame();
    FrameCodebook cb = fit_frame_codebook({&img}, 6, 2, 3);
    auto ids = tokenize_frame(img, cb);
    REQUIRE(ids.size() == 64);
    // all patches in the same half share an id, the two halves differ
    int left_id = ids[0];
    int right_id = ids[7];
    CHECK(left_id != right_id);
    for (int gr = 0; gr < 8; ++gr)
        for (int gc = 0; gc < 8; ++gc)
            CHECK(ids[static_cast<size_t>(gr) * 8 + gc] == (gc < 4 ? left_id : right_id));
}

TEST_CASE("frame codebook: 48x48 frame with patch 6 gives a 64-token grid") {
    sim::Env env = sim::make_env(sim::Suite::spatial, 3);
    sim::Image img = env.observe(sim::CameraKind::third_person);
    FrameCodebook cb = fit_frame_codebook({&img}, 6, 8, 7);
    CHECK(tokenize_frame(img, cb).size() == 64);
    CHECK(cb.grid_side(48) == 8);
}

TEST_CASE("frame codebook: k above the number of distinct patches is rejected") {
    sim::Image flat;
    for (auto& p : flat.px) p = 0.5f;
    CHECK_THROWS_AS(fit_frame_codebook({&flat}, 6, 2, 1), sim::SimError);
}

TEST_CASE("frame codebook: tokenization achieves the exhaustive nearest-centroid error") {
    sim::Env env = sim::make_env(sim::Suite::object, 9);
    sim::Image img = env.observe(sim::CameraKind::third_person);
    FrameCodebook cb = fit_frame_codebook({&img}, 6, 8, 11);

    double lib_err = frame_quantization_error(img, cb);
    auto patches = frame_patches(img, 6);
    int dim = cb.patch_len();
    int n = static_cast<int>(patches.size()) / dim;
    double oracle = 0.0;
    for (int i = 0; i < n; ++i)
        oracle += oracles::nearest_dist2(patches.data() + static_cast<size_t>(i) * dim,
                                         cb.centroids, cb.k, dim);
    oracle /= static_cast<double>(patches.size());
    CHECK(lib_err <= oracle + 1e-9);
    CHECK(lib_err == doctest::Approx(oracle).epsilon(1e-12));
}

namespace {

model::DesignConfig world_config() {
    model::DesignConfig cfg;
    cfg.trunk_depth = 2;
    cfg.trunk_width = 32;
    cfg.trunk_heads = 2;
    cfg.policy_depth = 2;
    cfg.policy_width = 32;
    cfg.policy_heads = 2;
    cfg.num_queries = 4;
    cfg.mlp_ratio = 2;
    cfg.world_modelling = true;
    cfg.world_codebook_size = 4;
    cfg.action_chunk_size = 8;
    cfg.world_horizon = 8;
    return cfg;
}

model::ObservationPacket world_packet(const model::DesignConfig& cfg) {
    model::ObservationPacket pkt;
    Rng rng(41);
    for (int v = 0; v < 2; ++v) {
        sim::Image img;
        for (auto& p : img.px) p = static_cast<float>(rng.uniform());
        pkt.views.push_back(img);
        pkt.past_frames.emplace_back();
    }
    pkt.instruction_ids = {2, 3};
    pkt.proprio_hist = cfg.history_proprioception_size;
    pkt.proprio_dim = cfg.proprio_dim();
    pkt.proprio.assign(static_cast<size_t>(pkt.proprio_hist) * pkt.proprio_dim, 0.1f);
    return pkt;
}

}  // namespace

TEST_CASE("world loss: uniform logits give ln(k) per token") {
    auto cfg = world_config();
    model::Net<double> net(cfg, 24, 5);
    // zero the output head: logits identically zero -> uniform over k=4
    for (auto& v : net.params().tensor("world.head.w").values()) v = 0.0;
    for (auto& v : net.params().tensor("world.head.b").values()) v = 0.0;

    auto pkt = world_packet(cfg);
    ag::Tape<double> tape;
    auto trunk = net.trunk_forward(tape, pkt);
    std::vector<int> tokens(64);
    Rng rng(6);
    for (auto& t : tokens) t = rng.uniform_int(4);
    auto loss = net.world_loss(tape, trunk, tokens);
    CHECK(tape.val(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("world loss: teacher forcing reproduces the same value on recompute") {
    auto cfg = world_config();
    model::Net<double> net(cfg, 24, 5);
    auto pkt = world_packet(cfg);
    std::vector<int> tokens(64);
    Rng rng(8);
    for (auto& t : tokens) t = rng.uniform_int(4);

    auto eval_once = [&]() {
        ag::Tape<double> tape;
        auto trunk = net.trunk_forward(tape, pkt);
        return tape.val(net.world_loss(tape, trunk, tokens))[0];
    };
    CHECK(eval_once() == eval_once());
}

TEST_CASE("world loss: wrong token count is rejected") {
    auto cfg = world_config();
    model::Net<double> net(cfg, 24, 5);
    auto pkt = world_packet(cfg);
    ag::Tape<double> tape;
    auto trunk = net.trunk_forward(tape, pkt);
    std::vector<int> short_tokens(16, 0);
    CHECK_THROWS_AS(net.world_loss(tape, trunk, short_tokens), ag::ShapeError);
}

TEST_CASE("config: world horizon must equal the action chunk size") {
    auto cfg = world_config();
    cfg.world_horizon = 4;  // chunk is 8
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("world-model horizon"),
                         model::ConfigError);
}

TEST_CASE("world head: enabling it changes no action-path output shapes") {
    auto off = world_config();
    off.world_modelling = false;
    auto on = world_config();

    model::Net<double> net_off(off, 24, 5);
    model::Net<double> net_on(on, 24, 5);
    auto pkt = world_packet(off);

    ag::Tape<double> t1, t2;
    auto trunk_off = net_off.trunk_forward(t1, pkt);
    auto trunk_on = net_on.trunk_forward(t2, pkt);
    CHECK(trunk_off.spans.total == trunk_on.spans.total);

    auto ctx1 = net_off.connect(t1, trunk_off);
    auto ctx2 = net_on.connect(t2, trunk_on);
    std::vector<double> noisy(static_cast<size_t>(off.action_chunk_size) * off.action_dim(), 0.2);
    auto o1 = net_off.policy_forward(t1, ctx1, pkt, &noisy, 0.5);
    auto o2 = net_on.policy_forward(t2, ctx2, pkt, &noisy, 0.5);
    CHECK(o1.shape() == o2.shape());
    // name-keyed init: shared parameters are identical, so outputs agree too
    CHECK(t1.val(o1) == t2.val(o2));
}
